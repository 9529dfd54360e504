"""Boundary potentials from Bjorling data, equivariant families, isotropy checks.

The central object is a lambda-dependent holomorphic 1-form coefficient set
(``HoloPotential``): a map from Laurent degree to a matrix of analytic
expressions in z.  Boundary data along the real axis (``BjorlingData``)
produces such a potential with degrees {-1, 0, 1}; the equivariant surface
families reduce to constant data; and ``validate`` classifies a potential's
negative-degree block as isotropic, half-isotropic, or neither.
"""

import numpy as np
from dataclasses import dataclass, field

from .expressions import (
    Expr,
    Const,
    Fun,
    ensure_expr,
    conj_expr,
    differentiate,
    eadd,
    esub,
    emul,
    ediv,
    eneg,
)
from .loops import LaurentLoop, DEFAULT_TRUNCATION


class InvalidBjorlingData(ValueError):
    """Curve data violating the frame identities; carries a residual report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = dict(report or {})


class NotEquivariant(ValueError):
    """Raised when constant data was required but an expression varies."""


# ---------------------------------------------------------------------------
# expression-matrix helpers

def expr_matrix(rows):
    """Coerce a nested list into an object array of Expr."""
    rows = [[ensure_expr(e) for e in row] for row in rows]
    out = np.empty((len(rows), len(rows[0])), dtype=object)
    for i, row in enumerate(rows):
        for j, e in enumerate(row):
            out[i, j] = e
    return out


def eval_expr_matrix(M, z):
    """Evaluate an Expr matrix entrywise; result shape is z.shape + M.shape."""
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape + M.shape, dtype=complex)
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            out[..., i, j] = M[i, j](z)
    return out


def conj_expr_matrix(M):
    out = np.empty_like(M)
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            out[i, j] = conj_expr(M[i, j])
    return out


def inner_expr(a, b):
    """Symbolic Lorentz inner product -a0*b0 + sum_j aj*bj of expression vectors."""
    acc = eneg(emul(a[0], b[0]))
    for x, y in zip(a[1:], b[1:]):
        acc = eadd(acc, emul(x, y))
    return acc


def _diff_vec(v):
    return [differentiate(e) for e in v]


def _eval_vec(vec, pts):
    out = np.zeros(pts.shape + (len(vec),), dtype=complex)
    for a, e in enumerate(vec):
        out[..., a] = e(pts)
    return out


def _real_part(e):
    # (e(z) + conj(e(conj z)))/2: restricts to Re e on the real axis and is
    # again holomorphic, which is what the potential blocks need.
    return emul(Const(0.5), eadd(e, conj_expr(e)))


def _imag_part(e):
    return emul(Const(-0.5j), esub(e, conj_expr(e)))


def _det_expr(rows):
    # cofactor expansion along the first row; the smart constructors drop
    # zero-entry branches so sparse frames stay cheap
    if len(rows) == 1:
        return rows[0][0]
    acc = Const(0.0)
    for j, e in enumerate(rows[0]):
        if e.is_const() and e.value == 0:
            continue
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        term = emul(e, _det_expr(minor))
        acc = eadd(acc, term) if j % 2 == 0 else esub(acc, term)
    return acc


def _orthogonal_complement(rows):
    """Lorentz cross product: the vector c with <c, v> = det(v; rows) for all v."""
    dim = len(rows[0])
    w = []
    for a in range(dim):
        minor = [r[:a] + r[a + 1:] for r in rows]
        d = _det_expr(minor)
        w.append(d if a % 2 == 0 else eneg(d))
    return [eneg(w[0])] + w[1:]


# ---------------------------------------------------------------------------
# data containers

@dataclass
class BjorlingData:
    """Boundary data (mu, k, rho, gamma) along the real axis.

    mu, k, rho are complex-valued analytic expressions in u; gamma is a list
    of length n (empty list = isotropic case).  Fields accept Expr objects,
    expression strings, or numbers.
    """

    mu: object
    k: object
    rho: object
    gamma: list = field(default_factory=list)
    n: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("codimension parameter n must be >= 1")
        self.mu = ensure_expr(self.mu)
        self.k = ensure_expr(self.k)
        self.rho = ensure_expr(self.rho)
        self.gamma = [ensure_expr(g) for g in self.gamma]
        if self.gamma and len(self.gamma) != self.n:
            raise ValueError("gamma must be empty or have one entry per normal")


@dataclass
class HoloPotential:
    """Holomorphic potential: Laurent degree -> matrix of analytic expressions."""

    terms: dict
    base_point: complex = 0.0 + 0.0j
    n: int = 1

    @property
    def dim(self):
        return self.n + 4

    def sample(self, z):
        """Evaluate every coefficient matrix; vectorized over z."""
        return {d: eval_expr_matrix(M, z) for d, M in self.terms.items()}

    def loop_at(self, z, truncation=None):
        """Coefficient matrices at a single point z, packed as a Laurent loop."""
        if truncation is None:
            truncation = DEFAULT_TRUNCATION
        coeffs = {d: eval_expr_matrix(M, complex(z)) for d, M in self.terms.items()}
        return LaurentLoop(coeffs, dim=self.dim, truncation=truncation)


@dataclass
class IsotropyReport:
    classification: str
    residuals: dict
    b1_rank: int
    degenerate_pair: bool
    gamma_hat: object = None
    sample_points: object = None


# ---------------------------------------------------------------------------
# potential builders

_ROW_SCALE = 1.0 / (2.0 * np.sqrt(2.0))


def _b1_rows(rho, gamma, n):
    s = Const(_ROW_SCALE)
    one_plus = eadd(Const(1.0), rho)
    one_minus = esub(Const(1.0), rho)
    row0 = [emul(s, one_plus), emul(s, emul(Const(-1j), one_plus))]
    row1 = [emul(s, one_minus), emul(s, emul(Const(-1j), one_minus))]
    for j in range(n):
        g = gamma[j] if gamma else Const(0.0)
        col = emul(s, emul(Const(4.0), g))
        row0.append(col)
        row1.append(eneg(col))
    return [row0, row1]


def _assemble_odd_term(b1):
    """[[0, B1], [-B1^t I_{1,1}, 0]] for a 2 x (n+2) block of expressions."""
    ncols = b1.shape[1]
    dim = ncols + 2
    out = np.empty((dim, dim), dtype=object)
    zero = Const(0.0)
    for i in range(dim):
        for j in range(dim):
            out[i, j] = zero
    for i in range(2):
        for j in range(ncols):
            out[i, 2 + j] = b1[i, j]
    # lower-left block -B1^t I_{1,1}: first column keeps its sign flipped back
    # by the metric factor, second column is negated
    for j in range(ncols):
        out[2 + j, 0] = b1[0, j]
        out[2 + j, 1] = eneg(b1[1, j])
    return out


def build_boundary_potential(data, base_point=0.0, normal_block=None):
    """Boundary potential (degrees -1, 0, 1) generated by Bjorling data.

    The degree 0 term is block diagonal with a symmetric 2x2 block carrying
    mu1 and a skew (n+2)x(n+2) block carrying mu2, k1, k2.  The degree -1
    term holds the 2x(n+2) block B1 built from rho and gamma, and the degree
    +1 term is its coefficient-conjugate, so the potential is symmetric under
    the reality involution.

    normal_block, for n > 1 only, overrides the skew coupling between the
    normals psi_j (defaults to zero).
    """
    n = data.n
    mu1 = _real_part(data.mu)
    mu2 = _imag_part(data.mu)
    k1 = _real_part(data.k)
    k2 = _imag_part(data.k)

    b1 = expr_matrix(_b1_rows(data.rho, data.gamma, n))
    odd = _assemble_odd_term(b1)

    dim = n + 4
    zero = Const(0.0)
    even = np.empty((dim, dim), dtype=object)
    for i in range(dim):
        for j in range(dim):
            even[i, j] = zero
    even[0, 1] = mu1
    even[1, 0] = mu1
    even[2, 3] = eneg(mu2)
    even[3, 2] = mu2
    even[2, 4] = eneg(emul(Const(2.0), k1))
    even[4, 2] = emul(Const(2.0), k1)
    even[3, 4] = emul(Const(2.0), k2)
    even[4, 3] = eneg(emul(Const(2.0), k2))
    if normal_block is not None:
        if n < 2:
            raise ValueError("normal_block only applies when n > 1")
        nb = [[ensure_expr(e) for e in row] for row in normal_block]
        if len(nb) != n or any(len(r) != n for r in nb):
            raise ValueError("normal_block must be n x n")
        pts = np.linspace(-1.0, 1.0, 3)
        for j in range(n):
            for l in range(n):
                skew = np.max(np.abs(nb[j][l](pts) + nb[l][j](pts)))
                if skew > 1e-9:
                    raise ValueError("normal_block must be antisymmetric")
                even[4 + j, 4 + l] = nb[j][l]

    terms = {-1: odd, 0: even, 1: conj_expr_matrix(odd)}
    return HoloPotential(terms, base_point=complex(base_point), n=n)


def potential_from_b1(rows, base_point=0.0):
    """Degree-(-1)-only potential from an explicit 2 x (n+2) block.

    Used for normalized potentials given directly, e.g. the Clifford-torus
    potential whose second row is the Enneper Weierstrass data.
    """
    b1 = expr_matrix(rows)
    if b1.shape[0] != 2 or b1.shape[1] < 3:
        raise ValueError("B1 block must be 2 x (n+2) with n >= 1")
    n = b1.shape[1] - 2
    return HoloPotential({-1: _assemble_odd_term(b1)},
                         base_point=complex(base_point), n=n)


_E_PATTERN = np.array([[1.0, -1.0], [-1.0, 1.0]])


def validate(p, samples=None, tol=1e-9):
    """Classify the degree-(-1) block: isotropic, half-isotropic, or neither.

    Evaluates Q = B1 B1^t on a sample grid.  Isotropy means Q vanishes;
    half-isotropy means Q = gamma_hat * [[1,-1],[-1,1]] for a scalar function
    gamma_hat (reported pointwise).  The degenerate row pattern
    B1 = (b, -b) also produces Q of that shape but does not belong to the
    half-isotropic family, so it is tested first and flagged.  The complex
    rank of B1 is reported; rank one signals a dual surface pair.
    """
    if -1 not in p.terms:
        raise ValueError("potential has no degree -1 term to classify")
    if samples is None:
        samples = np.linspace(-1.0, 1.0, 20).astype(complex)
    samples = np.atleast_1d(np.asarray(samples, dtype=complex)).ravel()

    block = p.terms[-1][:2, 2:]
    b1 = eval_expr_matrix(block, samples)
    q = b1 @ np.swapaxes(b1, -1, -2)

    norms = np.linalg.norm(b1, axis=(-2, -1))
    scale_q = 1.0 + float((norms ** 2).max())
    scale_row = 1.0 + float(norms.max())

    res_iso = float(np.linalg.norm(q, axis=(-2, -1)).max())
    rowsum = b1[:, 0, :] + b1[:, 1, :]
    res_deg = float(np.linalg.norm(rowsum, axis=-1).max())
    gh = q[:, 0, 0]
    res_half = float(np.linalg.norm(q - gh[:, None, None] * _E_PATTERN,
                                    axis=(-2, -1)).max())

    sv = np.linalg.svd(b1, compute_uv=False)
    rank = int((sv > 1e-8 * (sv[:, :1] + 1e-300)).sum(axis=1).max())

    residuals = {"isotropic": res_iso,
                 "degenerate_pair": res_deg,
                 "half_isotropic": res_half}
    degenerate = False
    gamma_hat = None
    if res_iso < tol * scale_q:
        cls = "isotropic"
    elif res_deg < tol * scale_row:
        cls = "neither"
        degenerate = True
    elif res_half < tol * scale_q:
        cls = "half-isotropic"
        gamma_hat = gh
    else:
        cls = "neither"
    return IsotropyReport(cls, residuals, rank, degenerate, gamma_hat, samples)


# ---------------------------------------------------------------------------
# equivariant families

def build_circle_family(m, beta):
    """Rotational family: data (i*m(u), beta/2, (m^2 + beta^2 - 1)/2 - i*m')."""
    m = ensure_expr(m)
    beta = float(beta)
    mu = emul(Const(1j), m)
    k = Const(beta / 2.0)
    rho = esub(
        emul(Const(0.5), eadd(emul(m, m), Const(beta * beta - 1.0))),
        emul(Const(1j), differentiate(m)),
    )
    return BjorlingData(mu, k, rho)


def build_equivariant_so4(r, theta, phi, ell, h):
    """Constant data for the non-rotational families invariant under SO(4).

    r = 1 collapses to the Hopf cylinder two-parameter family; that branch
    is computed with the dedicated reduced expressions (the general formulas
    contain removable r^2 - 1 factors whose floating point footprint differs).
    """
    r = float(r)
    ell = float(ell)
    h = float(h)
    if r == 0.0:
        raise ValueError("r = 0 is the rotational case, use build_circle_family")
    if r == 1.0:
        mu1 = ell
        mu2 = h * ell
        k1 = -h / 2.0
        k2 = 0.5
        rho1 = (h * h * (ell * ell + 1.0) - ell * ell - 1.0) / 2.0
        rho2 = h * (ell * ell + 1.0)
    else:
        a = np.cos(theta)
        b = np.sin(theta)
        c = np.cos(phi)
        d = np.sin(phi)
        R = np.sqrt(a * a + r * r * b * b)
        w = r * r - 1.0
        mu1 = ell
        mu2 = a * b * w * (c * ell * R + d * r) / (r * R) + R * ell * h / r
        k1 = a * b * c * (1.0 - r * r) / (2.0 * R) - h / 2.0
        k2 = r / (2.0 * R)
        rho1 = (-R * R / 2.0
                + a * a * b * b * c * d * ell * w * w / (r * R)
                + ell * ell * (a * a * b * b * c * c * w * w - r * r)
                / (2.0 * r * r)
                + h * a * b * w * (R * c * ell * ell / (r * r)
                                   + d * ell / r + c / R)
                + h * h / 2.0 * (R * R * ell * ell / (r * r) + 1.0))
        rho2 = (a * b * d * ell * w / R
                + a * b * c * ell * ell * w / r
                + h * (ell * ell * R / r + r / R))
    return BjorlingData(Const(complex(mu1, mu2)),
                        Const(complex(k1, k2)),
                        Const(complex(rho1, rho2)))


def build_so13_family(variant, **params):
    """Constant data for the families invariant under a hyperbolic subgroup.

    variant "abz": parameters r, h; the surfaces live over a hyperbola orbit
    and include the hyperbolic surfaces of revolution (r = 0).

    variant "hopf": parameters theta, m, h plus q (when cos 2*theta > 0) or
    p (when theta = pi/4, where the constraint degenerates and q drops out).
    """
    params = dict(params)
    if variant == "abz":
        r = float(params.pop("r"))
        h = float(params.pop("h"))
        if params:
            raise ValueError(f"unexpected parameters {sorted(params)}")
        return BjorlingData(Const(0.0),
                            Const(complex(-h / 2.0, -r / 2.0)),
                            Const(complex((h * h + 1.0) / 2.0, -h * r)))
    if variant != "hopf":
        raise ValueError(f"unknown variant {variant!r}")

    theta = float(params.pop("theta"))
    m = float(params.pop("m"))
    h = float(params.pop("h"))
    if not 0.0 <= theta <= np.pi / 4.0:
        raise ValueError("theta must lie in [0, pi/4]")
    a = np.cos(theta)
    b = np.sin(theta)
    c2 = np.cos(2.0 * theta)
    c = np.sqrt(max(c2, 0.0))
    # floating point cos(pi/2) is ~6e-17, so gate the degenerate ray on c2
    if c2 > 1e-12:
        if "p" in params:
            raise ValueError("p is determined by the duality constraint "
                             "when cos(2*theta) is nonzero; pass q instead")
        q = float(params.pop("q"))
        if params:
            raise ValueError(f"unexpected parameters {sorted(params)}")
        if abs(q) * abs(b) > 1.0:
            raise ValueError("need |q| <= 1/|sin(theta)|")
        s = np.sqrt(1.0 - b * b * q * q)
        p = (a * m * h + a * a * q - b * c * m * s) / (a * c)
        mu1 = m
        mu2 = a * c * q - p
        k1 = b * c * s / (2.0 * a) - h / 2.0
        k2 = -c / 2.0
        rho1 = (a * a * h * h - 2.0 * a * b * c * h * s + a * a * p * p
                + c ** 4 * q * q - 2.0 * a ** 3 * c * p * q
                - a * a * m * m + c * c) / (2.0 * a * a)
        rho2 = (a * a * c * m * q - a * c * h - a * m * p - b * s) / a
    else:
        if "q" in params:
            raise ValueError("q drops out of the data when cos(2*theta) = 0; "
                             "pass p instead")
        p = float(params.pop("p"))
        if params:
            raise ValueError(f"unexpected parameters {sorted(params)}")
        if abs(h * m) > 1.0:
            raise ValueError("need |h*m| <= 1")
        mu1 = m
        mu2 = -p
        k1 = -h / 2.0
        k2 = 0.0
        rho1 = (h * h + p * p - m * m) / 2.0
        rho2 = -p * m - np.sqrt(1.0 - h * h * m * m)
    return BjorlingData(Const(complex(mu1, mu2)),
                        Const(complex(k1, k2)),
                        Const(complex(rho1, rho2)))


def classify_minimality(data, tol=1e-12):
    """Decide which space form (if any) the equivariant data is minimal in.

    Requires constant data: each field's derivative must vanish at ten
    random probe points, else NotEquivariant.  The classification reads the
    signs of (mu1, rho1, rho2): both rho parts zero means a minimal surface
    in flat 3-space; mu1 = rho2 = 0 with rho1 negative (positive) means the
    round sphere (hyperbolic space).  Anything else returns "none".
    """
    rng = np.random.default_rng(2718)
    pts = rng.uniform(-2.0, 2.0, 10)
    fields = [("mu", data.mu), ("k", data.k), ("rho", data.rho)]
    fields += [(f"gamma[{j}]", g) for j, g in enumerate(data.gamma)]
    for name, e in fields:
        scale = 1.0 + float(np.max(np.abs(e(pts))))
        drift = float(np.max(np.abs(differentiate(e)(pts))))
        if drift > 1e-12 * scale:
            raise NotEquivariant(f"field {name} is not constant "
                                 f"(derivative magnitude {drift:.3e})")
    mu0 = complex(data.mu(0.0))
    rho0 = complex(data.rho(0.0))
    mu1, rho1, rho2 = mu0.real, rho0.real, rho0.imag
    if abs(rho1) < tol and abs(rho2) < tol:
        return "R3"
    if abs(mu1) < tol and abs(rho2) < tol:
        if rho1 < 0.0:
            return "S3"
        if rho1 > 0.0:
            return "H3"
    return "none"


# ---------------------------------------------------------------------------
# extraction of Bjorling data from curve expressions

_IDENTITY_TOL = 1e-8


def extract_bjorling_from_curves(Y0, Yhat0, psi0, gamma12=None,
                                 points=None, tol=_IDENTITY_TOL):
    """Recover (mu, k, rho, gamma) from analytic curves along the real axis.

    Parameters
    ----------
    Y0, Yhat0 : sequences of n+4 expressions
        The lightlike curve pair, normalized to <Y0, Yhat0> = -1 with u the
        arc parameter of Y0.
    psi0 : sequence of expressions, or list of such sequences
        The unit normal curve(s); a flat sequence is treated as n = 1.
    gamma12 : expression or list, optional
        Prescribed imaginary parts of gamma_j (the part the curves cannot
        see); omitted means purely real gamma, dropped entirely if it
        vanishes.
    points : array, optional
        Probe points on the real axis for the identity checks.

    The completing frame vector P2 is built symbolically as the Lorentz
    cross product of (Y0, Yhat0, P1, psi0...), normalized, with sign fixed
    by requiring the frame determinant to be +1 (checked at every probe
    point, so an orientation flip along the interval is rejected rather
    than silently absorbed).
    """
    if not len(psi0):
        raise ValueError("need at least one normal curve")
    if isinstance(psi0[0], (list, tuple, np.ndarray)):
        psis = [list(p) for p in psi0]
    else:
        psis = [list(psi0)]
    n = len(psis)
    dim = n + 4

    Y = [ensure_expr(e) for e in Y0]
    Yh = [ensure_expr(e) for e in Yhat0]
    psis = [[ensure_expr(e) for e in p] for p in psis]
    if len(Y) != dim or len(Yh) != dim or any(len(p) != dim for p in psis):
        raise ValueError(f"curves must have n+4 = {dim} components")

    if points is None:
        points = np.linspace(-2.0, 2.0, 9)
    pts = np.asarray(points, dtype=float)

    dY = _diff_vec(Y)
    dYh = _diff_vec(Yh)
    mu1 = inner_expr(dY, Yh)
    P1 = [eadd(dy, emul(mu1, y)) for dy, y in zip(dY, Y)]

    yv = _eval_vec(Y, pts)
    yhv = _eval_vec(Yh, pts)
    p1v = _eval_vec(P1, pts)
    psiv = [_eval_vec(p, pts) for p in psis]

    eta = np.ones(dim)
    eta[0] = -1.0

    def dots(av, bv):
        return np.einsum("sa,sa->s", av * eta, bv)

    report = {
        "Y_null": float(np.abs(dots(yv, yv)).max()),
        "Yhat_null": float(np.abs(dots(yhv, yhv)).max()),
        "pairing": float(np.abs(dots(yv, yhv) + 1.0).max()),
        "arc_length": float(np.abs(dots(p1v, p1v) - 1.0).max()),
    }
    for j, pv in enumerate(psiv):
        report[f"psi{j}_unit"] = float(np.abs(dots(pv, pv) - 1.0).max())
        report[f"psi{j}_perp_Y"] = float(np.abs(dots(pv, yv)).max())
        report[f"psi{j}_perp_Yhat"] = float(np.abs(dots(pv, yhv)).max())
        report[f"psi{j}_perp_tangent"] = float(
            np.abs(dots(pv, _eval_vec(dY, pts))).max())
        for l in range(j):
            report[f"psi{j}_perp_psi{l}"] = float(
                np.abs(dots(pv, psiv[l])).max())
    bad = {k: v for k, v in report.items() if v > tol}
    if bad:
        worst = ", ".join(f"{k}={v:.3e}" for k, v in sorted(bad.items()))
        raise InvalidBjorlingData(f"curve identities violated: {worst}", report)
    if yv[:, 0].real.min() <= 0.0 or yhv[:, 0].real.min() <= 0.0:
        raise InvalidBjorlingData("lifts must stay in the forward cone", report)

    crows = [Y, Yh, P1] + psis
    c = _orthogonal_complement(crows)
    g = inner_expr(c, c)
    gv = g(pts)
    if np.min(gv.real) < 1e-10 or np.max(np.abs(gv.imag)) > tol:
        raise InvalidBjorlingData(
            "frame complement degenerates on the interval", report)
    root = Fun("sqrt", g)
    P2 = [ediv(e, root) for e in c]

    frame = np.stack([yv, yhv, p1v, _eval_vec(P2, pts)]
                     + [pv for pv in psiv], axis=1)
    dets = np.linalg.det(frame)
    if np.max(np.abs(dets.imag)) > 1e-6 or np.max(np.abs(np.abs(dets) - 1.0)) > 1e-6:
        raise InvalidBjorlingData("frame determinant is not unimodular", report)
    signs = np.sign(dets.real)
    if signs.min() != signs.max():
        raise InvalidBjorlingData("frame orientation flips along the interval",
                                  report)
    if signs[0] < 0:
        P2 = [eneg(e) for e in P2]

    dP1 = _diff_vec(P1)
    mu2 = inner_expr(dP1, P2)
    k1 = emul(Const(0.5), inner_expr(dP1, psis[0]))
    # <P2, psi> = 0 identically, so <P2_u, psi> = -<P2, psi_u>; the right
    # hand side avoids differentiating the normalized cross product
    k2 = emul(Const(0.5), inner_expr(P2, _diff_vec(psis[0])))
    rho1 = inner_expr(dYh, P1)
    rho2 = inner_expr(dYh, P2)
    g11 = [emul(Const(0.25), inner_expr(dYh, p)) for p in psis]

    for j in range(1, n):
        extra1 = np.max(np.abs(inner_expr(dP1, psis[j])(pts)))
        extra2 = np.max(np.abs(inner_expr(P2, _diff_vec(psis[j]))(pts)))
        if max(extra1, extra2) > tol:
            raise InvalidBjorlingData(
                "data couples higher normals through k, which this "
                "representation reserves for the first normal", report)

    if gamma12 is None:
        g12 = None
    elif isinstance(gamma12, (list, tuple)):
        g12 = [ensure_expr(e) for e in gamma12]
        if len(g12) != n:
            raise ValueError("gamma12 needs one entry per normal")
    else:
        g12 = [ensure_expr(gamma12)]
        if n != 1:
            raise ValueError("gamma12 needs one entry per normal")

    if g12 is None:
        g11max = max(float(np.max(np.abs(e(pts)))) for e in g11)
        gamma = [] if g11max < tol else list(g11)
    else:
        gamma = [eadd(a, emul(Const(1j), b)) for a, b in zip(g11, g12)]

    return BjorlingData(
        eadd(mu1, emul(Const(1j), mu2)),
        eadd(k1, emul(Const(1j), k2)),
        eadd(rho1, emul(Const(1j), rho2)),
        gamma,
        n,
    )
