"""Frame integration, per-vertex loop factorization, surface extraction.

The pipeline: a holomorphic potential is integrated to a loop-valued frame
C(z, lambda) over a rectangular grid (staircase paths through the base
point), every vertex is Iwasawa-factored into a real twisted frame times a
positive loop, and the lightlike surface pair plus normal fields are read
off the lambda = 1 frame columns.  The module also recovers normalized
(degree -1 only) potentials from either a potential or an integrated frame
field, by two independent routes that can be cross-checked.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .factorize import MiddleSplitFailure, OutsideBigCell, birkhoff, iwasawa
from .loops import DEFAULT_TRUNCATION, IllConditioned, LaurentLoop, multiply
from .lorentz import (
    LorentzFrame,
    NotForwardLightlike,
    PointAtInfinity,
    metric_diagonal,
    inner,
    project_model,
)
from .potentials import HoloPotential, eval_expr_matrix


class StepUnderflow(RuntimeError):
    """The potential produced a nonfinite sample on the integration path."""


@dataclass
class DomainGrid:
    """Rectangle [u0,u1] x [v0,v1] sampled on an (Nu, Nv) lattice.

    The base point is where frame integration starts; it must lie inside
    the rectangle but need not be a lattice vertex.
    """

    u_range: tuple = (-np.pi, np.pi)
    v_range: tuple = (-0.75, 0.75)
    shape: tuple = (65, 65)
    base_point: complex = 0.0 + 0.0j

    def __post_init__(self):
        nu, nv = self.shape
        if nu < 2 or nv < 2:
            raise ValueError("grid needs at least 2 points per direction")
        self.base_point = complex(self.base_point)
        u0, u1 = self.u_range
        v0, v1 = self.v_range
        if not (u0 < u1 and v0 < v1):
            raise ValueError("degenerate rectangle")
        x, y = self.base_point.real, self.base_point.imag
        if not (u0 - 1e-12 <= x <= u1 + 1e-12 and v0 - 1e-12 <= y <= v1 + 1e-12):
            raise ValueError("base point outside the rectangle")

    @property
    def us(self):
        return np.linspace(self.u_range[0], self.u_range[1], self.shape[0])

    @property
    def vs(self):
        return np.linspace(self.v_range[0], self.v_range[1], self.shape[1])

    @property
    def du(self):
        return (self.u_range[1] - self.u_range[0]) / (self.shape[0] - 1)

    @property
    def dv(self):
        return (self.v_range[1] - self.v_range[0]) / (self.shape[1] - 1)

    def points(self):
        return self.us[:, None] + 1j * self.vs[None, :]


# ---------------------------------------------------------------------------
# loop-valued linear ODE dC = C * Xi(z) dz along polylines

def _apply_potential(C, mats):
    """Convolution product C * sum_b lambda^b M_b for stacked coefficients.

    C has shape (B, K, dim, dim) with K the window of Laurent degrees; mats
    is a list of (degree, (B, dim, dim)).  Coefficients pushed outside the
    window are dropped (the window is sized so that their mass is tail).
    """
    out = np.zeros_like(C)
    K = C.shape[1]
    for b, M in mats:
        lo = max(0, -b)
        hi = min(K, K - b)
        if lo >= hi:
            continue
        out[:, lo + b:hi + b] += C[:, lo:hi] @ M[:, None]
    return out


def _stage(terms, leg, m):
    return [(d, arr[:, leg, m]) for d, arr in terms]


def _march(p, zs, C0, nsub, label="path"):
    """Integrate the loop ODE along batched polylines, with error estimate.

    zs: (B, L) stations; C0: (B, K, dim, dim) state at zs[:, 0].  Returns
    (C at every station (B, L, K, dim, dim), Richardson local-error (B, L))
    from a fine pass (2*nsub substeps per leg) compared with a coarse one.
    """
    B, L = zs.shape
    if L == 1:
        return C0[:, None].copy(), np.zeros((B, 1))
    S = 4 * nsub
    frac = np.arange(S + 1) / S
    pts = zs[:, :-1, None] + (zs[:, 1:, None] - zs[:, :-1, None]) * frac
    sampled = p.sample(pts)
    terms = sorted(sampled.items())
    for d, arr in terms:
        if not np.all(np.isfinite(arr)):
            bad = pts[np.nonzero(~np.isfinite(arr).all(axis=(-2, -1)))][0]
            raise StepUnderflow(
                f"potential degree {d} not finite on {label} near z = {bad:.6g}")

    def sweep(stride):
        ns = S // stride
        C = C0.astype(complex).copy()
        out = np.empty((B, L) + C0.shape[1:], dtype=complex)
        out[:, 0] = C
        for leg in range(L - 1):
            h = (zs[:, leg + 1] - zs[:, leg]) / ns
            hh = h[:, None, None, None]
            for j in range(ns):
                m = j * stride
                A0 = _stage(terms, leg, m)
                Am = _stage(terms, leg, m + stride // 2)
                A1 = _stage(terms, leg, m + stride)
                k1 = _apply_potential(C, A0)
                k2 = _apply_potential(C + 0.5 * hh * k1, Am)
                k3 = _apply_potential(C + 0.5 * hh * k2, Am)
                k4 = _apply_potential(C + hh * k3, A1)
                C = C + hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            out[:, leg + 1] = C
        return out

    fine = sweep(2)
    coarse = sweep(4)
    err = np.max(np.abs(fine - coarse), axis=(-3, -2, -1)) / 15.0
    return fine, err


def _split_stations(values, start, tol):
    """Indices of `values` strictly after/before `start`, plus exact hits."""
    after = [i for i, v in enumerate(values) if v > start + tol]
    before = [i for i, v in enumerate(values) if v < start - tol]
    before.reverse()
    exact = [i for i, v in enumerate(values) if abs(v - start) <= tol]
    return exact, before, after


@dataclass
class CFrameField:
    """Holomorphic loop frames C(z, lambda) on a grid, coefficient-stacked."""

    grid: DomainGrid
    truncation: int
    coeffs: np.ndarray      # (Nu, Nv, 2*truncation+1, dim, dim)
    local_error: np.ndarray
    edge_mass: np.ndarray

    @property
    def dim(self):
        return self.coeffs.shape[-1]

    def loop_at(self, i, j, trim=1e-14):
        return _loop_from_stack(self.coeffs[i, j], self.truncation, trim)


def _loop_from_stack(stack, trunc, trim=1e-14):
    scale = max(float(np.max(np.abs(stack))), 1e-300)
    coeffs = {}
    for k in range(stack.shape[0]):
        if np.max(np.abs(stack[k])) > trim * scale:
            coeffs[k - trunc] = stack[k].copy()
    return LaurentLoop(coeffs, dim=stack.shape[-1], truncation=trunc)


def _stack_from_loop(loop, trunc, dim):
    out = np.zeros((2 * trunc + 1, dim, dim), dtype=complex)
    for d, M in loop.coeffs.items():
        if abs(d) <= trunc:
            out[d + trunc] = M
    return out


def integrate_frame(p, grid, F0=None, truncation=None, nsub=4):
    """Solve dC = C * Xi along staircases z0 -> (u, v0) -> (u, v).

    The curve direction is integrated first (one shared pass along the
    horizontal line through the base point), then every grid column in one
    batched pass.  F0 is the initial loop at the base point (identity when
    omitted); it is used as-is, never renormalized.  Returns a CFrameField
    with per-vertex Richardson error estimates and the mass sitting on the
    outermost Laurent degrees (truncation health).
    """
    if truncation is None:
        truncation = DEFAULT_TRUNCATION
    trunc = int(truncation)
    dim = p.dim
    K = 2 * trunc + 1
    if F0 is None:
        F0 = LaurentLoop.identity(dim, trunc)
    elif not isinstance(F0, LaurentLoop):
        F0 = LaurentLoop.constant(np.asarray(F0, dtype=complex), truncation=trunc)
    if F0.dim != dim:
        raise ValueError(f"initial frame dim {F0.dim} != potential dim {dim}")
    C0 = _stack_from_loop(F0, trunc, dim)

    z0 = grid.base_point
    us, vs = grid.us, grid.vs
    nu, nv = grid.shape
    tol = 1e-9 * (1.0 + max(abs(z0), np.max(np.abs(us)), np.max(np.abs(vs))))

    row = np.zeros((nu, K, dim, dim), dtype=complex)
    row_err = np.zeros(nu)
    exact, before, after = _split_stations(us, z0.real, tol)
    for i in exact:
        row[i] = C0
    for side in (before, after):
        if not side:
            continue
        stations = np.array([z0] + [us[i] + 1j * z0.imag for i in side])
        C, err = _march(p, stations[None, :], C0[None], nsub, label="base row")
        for k, i in enumerate(side):
            row[i] = C[0, k + 1]
            row_err[i] = err[0, k + 1]

    coeffs = np.zeros((nu, nv, K, dim, dim), dtype=complex)
    local_error = np.zeros((nu, nv))
    exact_v, below, above = _split_stations(vs, z0.imag, tol)
    for j in exact_v:
        coeffs[:, j] = row
        local_error[:, j] = row_err
    for side in (below, above):
        if not side:
            continue
        heights = np.array([z0.imag] + [vs[j] for j in side])
        zcols = us[:, None] + 1j * heights[None, :]
        C, err = _march(p, zcols, row, nsub, label="columns")
        for k, j in enumerate(side):
            coeffs[:, j] = C[:, k + 1]
            local_error[:, j] = row_err + err[:, k + 1]

    edge = np.maximum(
        np.max(np.abs(coeffs[:, :, 0]), axis=(-2, -1)),
        np.max(np.abs(coeffs[:, :, -1]), axis=(-2, -1)),
    )
    return CFrameField(grid, trunc, coeffs, local_error, edge)


# ---------------------------------------------------------------------------
# per-vertex Iwasawa factorization

@dataclass
class FrameField:
    """Per-vertex holomorphic frame C, real frame F, positive factor V+."""

    grid: DomainGrid
    truncation: int
    C: np.ndarray
    F: np.ndarray
    Vplus: np.ndarray
    valid: np.ndarray
    reason: np.ndarray
    fac_residual: np.ndarray
    reality_residual: np.ndarray
    near_boundary: np.ndarray
    local_error: np.ndarray
    edge_mass: np.ndarray

    @property
    def dim(self):
        return self.C.shape[-1]

    def c_at(self, i, j):
        return _loop_from_stack(self.C[i, j], self.truncation)

    def f_at(self, i, j):
        return _loop_from_stack(self.F[i, j], self.truncation)

    def vplus_at(self, i, j):
        trunc = self.truncation
        stack = np.zeros((2 * trunc + 1,) + self.Vplus.shape[-2:], dtype=complex)
        stack[trunc:] = self.Vplus[i, j]
        return _loop_from_stack(stack, trunc)

    def frame_matrix(self, i, j):
        """The lambda = 1 evaluation of F, as a real matrix."""
        return np.real(self.F[i, j].sum(axis=0))

    def lorentz_frame(self, i, j, tol=1e-8):
        if not self.valid[i, j]:
            raise ValueError(f"vertex ({i}, {j}) invalid: {self.reason[i, j]}")
        return LorentzFrame(self.frame_matrix(i, j), tol=tol)


def _factor_vertex(args):
    stack, trunc, dim, residual_tol = args
    loop = _loop_from_stack(stack, trunc)
    try:
        fac = iwasawa(loop, residual_tol=residual_tol)
    except (OutsideBigCell, MiddleSplitFailure, IllConditioned) as e:
        return None, f"{type(e).__name__}: {e}"
    F = _stack_from_loop(fac.real, trunc, dim)
    V = _stack_from_loop(fac.plusB, trunc, dim)[trunc:]
    return (F, V, fac.residual, fac.reality_residual, fac.near_boundary), None


def extract_frames(cfield, residual_tol=1e-6, threads=None):
    """Iwasawa-factor every vertex of a CFrameField into F * V+.

    Vertices where the factorization leaves the big cell (or the middle
    term cannot be split) are tagged with the failure reason instead of
    aborting the run.  Thread count comes from WILLMORE_THREADS when not
    given (factorizations are independent)."""
    grid = cfield.grid
    trunc = cfield.truncation
    dim = cfield.dim
    nu, nv = grid.shape
    K = 2 * trunc + 1
    if threads is None:
        threads = int(os.environ.get("WILLMORE_THREADS", "1"))

    F = np.zeros((nu, nv, K, dim, dim), dtype=complex)
    V = np.zeros((nu, nv, trunc + 1, dim, dim), dtype=complex)
    valid = np.zeros((nu, nv), dtype=bool)
    reason = np.full((nu, nv), None, dtype=object)
    res = np.full((nu, nv), np.nan)
    reality = np.full((nu, nv), np.nan)
    near = np.zeros((nu, nv), dtype=bool)

    jobs = [(cfield.coeffs[i, j], trunc, dim, residual_tol)
            for i in range(nu) for j in range(nv)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_factor_vertex, jobs))
    else:
        results = [_factor_vertex(job) for job in jobs]

    for flat, (ok, why) in enumerate(results):
        i, j = divmod(flat, nv)
        if ok is None:
            reason[i, j] = why
            continue
        F[i, j], V[i, j], res[i, j], reality[i, j], near[i, j] = ok
        valid[i, j] = True
    return FrameField(grid, trunc, cfield.coeffs, F, V, valid, reason,
                      res, reality, near,
                      cfield.local_error, cfield.edge_mass)


# ---------------------------------------------------------------------------
# surfaces

_SQRT2 = np.sqrt(2.0)


@dataclass
class SurfaceField:
    """Lightlike surface pair and normal fields on the grid, lambda = 1."""

    grid: DomainGrid
    Y: np.ndarray            # (Nu, Nv, dim)
    Yhat: np.ndarray
    normals: np.ndarray      # (Nu, Nv, n, dim)
    valid: np.ndarray
    reason: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    _projections: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self):
        return self.Y.shape[-1]

    @property
    def n(self):
        return self.normals.shape[-2]

    @property
    def psi(self):
        return self.normals[..., 0, :]

    def project(self, model="s3", which="Y", **kwargs):
        """Per-vertex space-form projection; rows are NaN where the vertex
        is invalid or the point crosses the model's ideal boundary."""
        key = (model, which, tuple(sorted(kwargs.items())))
        if key in self._projections:
            return self._projections[key]
        src = {"Y": self.Y, "Yhat": self.Yhat}[which]
        nu, nv = self.grid.shape
        width = None
        out = None
        for i in range(nu):
            for j in range(nv):
                if not self.valid[i, j]:
                    continue
                try:
                    pt = project_model(src[i, j], model, **kwargs)
                except (NotForwardLightlike, PointAtInfinity):
                    continue
                if out is None:
                    width = len(pt)
                    out = np.full((nu, nv, width), np.nan)
                out[i, j] = pt
        if out is None:
            out = np.full((nu, nv, 0), np.nan)
        self._projections[key] = out
        return out


def extract_surfaces(ff):
    """Read Y, Yhat, psi_j off the lambda = 1 frame columns.

    Y and Yhat are the half-sum/half-difference of the first two columns
    (scaled by 1/sqrt(2)); the remaining columns past the tangent pair are
    the normals.  Residual diagnostics (lightlike, duality, unit-normal,
    frame orthonormality, imaginary leakage) are stored per vertex."""
    E_c = ff.F.sum(axis=2)
    imag = np.max(np.abs(E_c.imag), axis=(-2, -1))
    E = E_c.real
    Y = (E[..., :, 0] - E[..., :, 1]) / _SQRT2
    Yhat = (E[..., :, 0] + E[..., :, 1]) / _SQRT2
    normals = np.moveaxis(E[..., :, 4:], -1, -2)

    eta = metric_diagonal(ff.dim)
    gram = np.max(np.abs(
        np.einsum("xyai,a,xyaj->xyij", E, eta, E) - np.diag(eta)), axis=(-2, -1))
    diagnostics = {
        "null_Y": np.abs(inner(Y, Y)),
        "null_Yhat": np.abs(inner(Yhat, Yhat)),
        "duality": np.abs(inner(Y, Yhat) + 1.0),
        "psi_unit": np.max(np.abs(inner(normals, normals) - 1.0), axis=-1),
        "psi_orth_Y": np.max(np.abs(inner(normals, Y[..., None, :])), axis=-1),
        "psi_orth_Yhat": np.max(
            np.abs(inner(normals, Yhat[..., None, :])), axis=-1),
        "frame_gram": gram,
        "frame_imag": imag,
        "local_error": ff.local_error.copy(),
        "factor_residual": ff.fac_residual.copy(),
    }
    bad = ~ff.valid
    for key in ("null_Y", "null_Yhat", "duality", "psi_unit",
                "psi_orth_Y", "psi_orth_Yhat", "frame_gram", "frame_imag"):
        diagnostics[key] = np.where(bad, np.nan, diagnostics[key])
    return SurfaceField(ff.grid, Y, Yhat, normals,
                        ff.valid.copy(), ff.reason.copy(), diagnostics)


# ---------------------------------------------------------------------------
# normalized potentials (degree -1 only), two routes

@dataclass
class SampledPotential:
    """A degree-(-1) potential known through a numeric evaluator.

    Quacks like HoloPotential where it matters (sample / loop_at / dim),
    but its single coefficient matrix is produced by quadrature rather
    than an expression tree.  Points where the underlying factorization
    left the big cell evaluate to NaN and are collected in `poles`."""

    base_point: complex
    n: int
    route: str
    _eval: object
    poles: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.n + 4

    def at(self, z):
        z = np.asarray(z, dtype=complex)
        flat = np.atleast_1d(z).ravel()
        vals = self._eval(flat, self.poles)
        return vals.reshape(z.shape + vals.shape[-2:])

    def sample(self, z):
        return {-1: self.at(z)}

    def loop_at(self, z, truncation=None):
        if truncation is None:
            truncation = DEFAULT_TRUNCATION
        return LaurentLoop({-1: self.at(complex(z))},
                           dim=self.dim, truncation=truncation)


def _lorentz_group_inverse(M):
    eta = metric_diagonal(M.shape[-1])
    return eta[:, None] * np.swapaxes(M, -1, -2) * eta[None, :]


def _gauge_rk4(D0_samples, zflat, z0, ns):
    """March D' = D * delta0 with midpoint samples already evaluated.

    D0_samples has shape (B, 2*ns+1, dim, dim) along straight segments from
    z0 to each z.  Returns D at the endpoints."""
    B = zflat.shape[0]
    dim = D0_samples.shape[-1]
    h = (zflat - z0) / ns
    hh = h[:, None, None]
    D = np.broadcast_to(np.eye(dim, dtype=complex), (B, dim, dim)).copy()
    for j in range(ns):
        a = D0_samples[:, 2 * j]
        mid = D0_samples[:, 2 * j + 1]
        b = D0_samples[:, 2 * j + 2]
        k1 = D @ a
        k2 = (D + 0.5 * hh * k1) @ mid
        k3 = (D + 0.5 * hh * k2) @ mid
        k4 = (D + hh * k3) @ b
        D = D + hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return D


def _wu_exact_evaluator(p, step, nsub):
    """Wu route for potentials with no positive lambda-degrees.

    When the potential has degrees in {-1, 0} its own frame already plays
    the role of the holomorphic slice in Wu's formula, so conjugating the
    degree-(-1) term by the degree-0 flow is exact (the frame of the
    conjugated potential lives in I + negative degrees, hence equals its
    own Birkhoff minus factor)."""
    z0 = complex(p.base_point)
    delta0 = p.terms.get(0)
    delta1 = p.terms[-1]

    def ev(zflat, poles):
        A1 = eval_expr_matrix(delta1, zflat)
        if delta0 is None:
            return A1
        maxlen = float(np.max(np.abs(zflat - z0)))
        ns = max(nsub, int(np.ceil(maxlen / step)))
        grid = np.arange(2 * ns + 1) / (2 * ns)
        pts = z0 + (zflat - z0)[:, None] * grid[None, :]
        D0 = eval_expr_matrix(delta0, pts)
        if not np.all(np.isfinite(D0)):
            raise StepUnderflow("degree-0 term not finite between base point "
                                "and evaluation point")
        D = _gauge_rk4(D0, zflat, z0, ns)
        return D @ A1 @ _lorentz_group_inverse(D)

    return ev


def _inverse_stacks(F):
    """Exact group inverses of coefficient-stacked twisted loops:
    (Phi^-1)_d = eta (Phi_d)^t eta, degree support preserved."""
    eta = metric_diagonal(F.shape[-1])
    return eta[:, None] * np.swapaxes(F, -1, -2) * eta[None, :]


def _alpha_prime_field(ff):
    """(1,0)-part of the Maurer-Cartan form of the real frames on the grid.

    alpha'(d/dz) = F^{-1} (F_u - i F_v) / 2 via 4th-order central stencils,
    returned as its degree-(-1) and degree-0 coefficients plus a mask of
    vertices where the stencil had full valid support and the largest mass
    the product leaves at degrees {-2, +1} (a health check: the (1,0) part
    of a harmonic frame's form has no other degrees)."""
    F = ff.F
    nu, nv = ff.grid.shape
    trunc = ff.truncation
    du, dv = ff.grid.du, ff.grid.dv
    ok = ff.valid
    mask = np.zeros((nu, nv), dtype=bool)
    mask[2:-2, 2:-2] = (
        ok[2:-2, 2:-2]
        & ok[:-4, 2:-2] & ok[1:-3, 2:-2] & ok[3:-1, 2:-2] & ok[4:, 2:-2]
        & ok[2:-2, :-4] & ok[2:-2, 1:-3] & ok[2:-2, 3:-1] & ok[2:-2, 4:])

    Fu = np.zeros_like(F)
    Fv = np.zeros_like(F)
    Fu[2:-2] = (F[:-4] - 8 * F[1:-3] + 8 * F[3:-1] - F[4:]) / (12 * du)
    Fv[:, 2:-2] = (F[:, :-4] - 8 * F[:, 1:-3]
                   + 8 * F[:, 3:-1] - F[:, 4:]) / (12 * dv)
    G = 0.5 * (Fu - 1j * Fv)
    Finv = _inverse_stacks(F)

    out = {}
    for d in (-2, -1, 0, 1):
        acc = np.zeros((nu, nv) + F.shape[-2:], dtype=complex)
        for b in range(-trunc, trunc + 1):
            kg = d - b
            if abs(kg) > trunc:
                continue
            acc += np.einsum("xyij,xyjk->xyik",
                             Finv[:, :, trunc + b], G[:, :, trunc + kg])
        out[d] = acc
    stray = np.maximum(np.max(np.abs(out[-2]), axis=(-2, -1)),
                       np.max(np.abs(out[1]), axis=(-2, -1)))
    return out[-1], out[0], mask, np.where(mask, stray, 0.0)


def _hol_fit(points, values, degree):
    """Least-squares Taylor fit in (z, conj z); keep the pure-z part.

    points are pre-scaled to the unit disc.  values has shape (Np, m).
    Returns (coeffs (degree+1, m), fit residual)."""
    zc = np.conj(points)
    cols = []
    hol_index = []
    for j in range(degree + 1):
        for k in range(degree + 1 - j):
            cols.append(points ** j * zc ** k)
            hol_index.append(j if k == 0 else -1)
    M = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(M, values, rcond=None)
    resid = float(np.max(np.abs(M @ coef - values)))
    out = np.zeros((degree + 1,) + values.shape[1:], dtype=complex)
    for row, j in enumerate(hol_index):
        if j >= 0:
            out[j] = coef[row]
    return out, resid


def _poly_eval(coeffs, zeta):
    """Horner evaluation of stacked polynomial coefficients at zeta (any
    shape); result shape zeta.shape + coeffs.shape[1:]."""
    zeta = np.asarray(zeta, dtype=complex)
    acc = np.broadcast_to(coeffs[-1], zeta.shape + coeffs.shape[1:]).copy()
    for j in range(coeffs.shape[0] - 2, -1, -1):
        acc = acc * zeta[..., None, None] + coeffs[j]
    return acc


def _fit_deltas_from_frames(ff, z0, fit_radius, degree):
    """Wu's delta_1, delta_0 as polynomials from a factored frame field."""
    a1, a0, mask, stray = _alpha_prime_field(ff)
    zs = ff.grid.points()
    rel = zs - z0
    use = mask & (np.abs(rel) <= fit_radius)
    npts = int(np.count_nonzero(use))
    dim = ff.dim
    nmono = (degree + 1) * (degree + 2) // 2
    if npts < 2 * nmono:
        raise ValueError(
            f"only {npts} usable vertices within fit radius {fit_radius:.3g} "
            f"for {nmono} monomials; enlarge the grid or lower the degree")
    pts = rel[use] / fit_radius
    vals = np.concatenate(
        [a1[use].reshape(npts, -1), a0[use].reshape(npts, -1)], axis=1)
    coef, resid = _hol_fit(pts, vals, degree)
    c1 = coef[:, :dim * dim].reshape(degree + 1, dim, dim)
    c0 = coef[:, dim * dim:].reshape(degree + 1, dim, dim)
    diag = {
        "fit_points": npts,
        "fit_residual": resid,
        "fit_radius": fit_radius,
        "stray_degree_mass": float(np.max(stray[use])),
    }
    return c1, c0, diag


def _wu_fitted_evaluator(c1, c0, z0, fit_radius, step_count=96):
    """Evaluator for Wu's formula with polynomial delta_0, delta_1."""

    def ev(zflat, poles):
        zeta = (zflat - z0) / fit_radius
        ns = max(24, int(np.ceil(np.max(np.abs(zeta)) * step_count)))
        grid = np.arange(2 * ns + 1) / (2 * ns)
        pts = zeta[:, None] * grid[None, :]
        D0 = _poly_eval(c0, pts)
        D = _gauge_rk4(D0, zflat, z0, ns)
        A1 = _poly_eval(c1, zeta)
        return D @ A1 @ _lorentz_group_inverse(D)

    return ev


def _minus_linear_coeff(loop):
    return birkhoff(loop).minus.coeff(-1)


def _birkhoff_potential_evaluator(p, eps, step, nsub, trunc):
    z0 = complex(p.base_point)
    dim = p.dim
    K = 2 * trunc + 1

    def ev(zflat, poles):
        B = zflat.shape[0]
        eye = np.zeros((B, K, dim, dim), dtype=complex)
        eye[:, trunc] = np.eye(dim)
        maxlen = float(np.max(np.abs(zflat - z0)))
        ns = max(nsub, int(np.ceil(maxlen / step)))
        stations = np.stack([np.full(B, z0, dtype=complex), zflat], axis=1)
        C, _ = _march(p, stations, eye, ns, label="normalized-potential path")
        Cz = C[:, 1]
        out = np.full((B, dim, dim), np.nan, dtype=complex)
        for sgn_idx, sgn in enumerate((1.0, -1.0)):
            legs = np.stack([zflat, zflat + sgn * eps], axis=1)
            Cside, _ = _march(p, legs, Cz, 2, label="difference step")
            if sgn_idx == 0:
                plus_side = Cside[:, 1]
            else:
                minus_side = Cside[:, 1]
        for b in range(B):
            try:
                f1p = _minus_linear_coeff(_loop_from_stack(plus_side[b], trunc))
                f1m = _minus_linear_coeff(_loop_from_stack(minus_side[b], trunc))
            except (OutsideBigCell, IllConditioned):
                poles.append(complex(zflat[b]))
                continue
            out[b] = (f1p - f1m) / (2.0 * eps)
        return out

    return ev


def _birkhoff_grid_evaluator(src, trunc):
    grid = src.grid
    us, vs = grid.us, grid.vs
    du = grid.du
    tol = 1e-6 * min(du, grid.dv)
    z0 = grid.base_point

    def locate(x, axis):
        k = int(np.argmin(np.abs(axis - x)))
        if abs(axis[k] - x) > tol:
            raise ValueError(
                f"point {x} is not a grid coordinate (grid route evaluates "
                "at vertices only)")
        return k

    i0 = locate(z0.real, us)
    j0 = locate(z0.imag, vs)
    C0inv = _loop_from_stack(src.coeffs[i0, j0], trunc).eta_inverse()
    cache = {}

    def f1(i, j, poles):
        if (i, j) in cache:
            return cache[(i, j)]
        loop = multiply(C0inv, _loop_from_stack(src.coeffs[i, j], trunc))
        try:
            val = _minus_linear_coeff(loop)
        except (OutsideBigCell, IllConditioned):
            val = None
        cache[(i, j)] = val
        return val

    def ev(zflat, poles):
        dim = src.dim
        out = np.full((zflat.shape[0], dim, dim), np.nan, dtype=complex)
        nu = len(us)
        for b, z in enumerate(zflat):
            i = locate(z.real, us)
            j = locate(z.imag, vs)
            if i < 1 or i > nu - 2:
                raise ValueError("grid route needs interior u-neighbors")
            if 2 <= i <= nu - 3:
                pts = [f1(i + k, j, poles) for k in (-2, -1, 1, 2)]
                if any(v is None for v in pts):
                    poles.append(complex(z))
                    continue
                m2, m1, p1, p2 = pts
                out[b] = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * du)
            else:
                m1 = f1(i - 1, j, poles)
                p1 = f1(i + 1, j, poles)
                if m1 is None or p1 is None:
                    poles.append(complex(z))
                    continue
                out[b] = (p1 - m1) / (2.0 * du)
        return out

    return ev


def _left_multiply_stacks(g_stack, C):
    """Per-vertex loop product g * C on coefficient stacks (shared g)."""
    K = g_stack.shape[0]
    trunc = (K - 1) // 2
    out = np.zeros_like(C)
    for ib in range(K):
        b = ib - trunc
        lo = max(0, -b)
        hi = min(K, K - b)
        if lo >= hi:
            continue
        out[..., lo + b:hi + b, :, :] += g_stack[ib] @ C[..., lo:hi, :, :]
    return out


def _normalized_frame_field(source, residual_tol, threads):
    """Real frames of the base-point-normalized field C(z0)^-1 C."""
    if isinstance(source, CFrameField):
        stacks, real = source, None
    else:
        stacks = CFrameField(source.grid, source.truncation, source.C,
                             source.local_error, source.edge_mass)
        real = source
    grid = stacks.grid
    trunc = stacks.truncation
    z0 = grid.base_point
    tol = 1e-6 * min(grid.du, grid.dv)
    i0 = int(np.argmin(np.abs(grid.us - z0.real)))
    j0 = int(np.argmin(np.abs(grid.vs - z0.imag)))
    if abs(grid.us[i0] - z0.real) > tol or abs(grid.vs[j0] - z0.imag) > tol:
        raise ValueError("wu route on a frame field needs the base point on "
                         "a grid vertex")
    base = stacks.coeffs[i0, j0]
    eye = np.zeros_like(base)
    eye[trunc] = np.eye(stacks.dim)
    if np.max(np.abs(base - eye)) <= 1e-9:
        ff = real if real is not None else extract_frames(
            stacks, residual_tol=residual_tol, threads=threads)
        return ff
    ginv = _inverse_stacks(base[None])[0]
    shifted = CFrameField(grid, trunc,
                          _left_multiply_stacks(ginv, stacks.coeffs),
                          stacks.local_error, stacks.edge_mass)
    return extract_frames(shifted, residual_tol=residual_tol, threads=threads)


class _WuHammer:
    """Lazy Wu evaluator for potentials with positive lambda-degrees.

    Wu's formula needs the holomorphic Taylor parts of the real frame's
    Maurer-Cartan coefficients, which the raw potential does not expose
    when it carries a positive degree (gauging changes its coefficients
    but not the normalized potential).  So: integrate the frame on a
    square patch around the base point, Iwasawa-factor it, difference the
    real frames for alpha', and keep the pure-z part of a 2D Taylor fit.
    Built on first evaluation, rebuilt if a later point falls outside."""

    def __init__(self, p, grid_points, radius, fit_degree, truncation,
                 nsub, residual_tol, threads, diagnostics):
        self.p = p
        self.ng = int(grid_points)
        self.radius = radius
        self.degree = int(fit_degree)
        self.trunc = int(truncation)
        self.nsub = nsub
        self.residual_tol = residual_tol
        self.threads = threads
        self.diagnostics = diagnostics
        self.fit_radius = 0.0
        self.inner = None

    def _build(self, needed):
        z0 = complex(self.p.base_point)
        margin = 1.0 - 5.0 / (self.ng - 1)
        half = max(needed * 1.02 / margin, 1e-3)
        grid = DomainGrid(u_range=(z0.real - half, z0.real + half),
                          v_range=(z0.imag - half, z0.imag + half),
                          shape=(self.ng, self.ng), base_point=z0)
        cf = integrate_frame(self.p, grid, truncation=self.trunc,
                             nsub=self.nsub)
        ff = extract_frames(cf, residual_tol=self.residual_tol,
                            threads=self.threads)
        self.fit_radius = half - 2.5 * grid.du
        c1, c0, diag = _fit_deltas_from_frames(ff, z0, self.fit_radius,
                                               self.degree)
        self.diagnostics.update(diag)
        self.diagnostics["patch_halfwidth"] = half
        self.diagnostics["factored_vertices"] = int(ff.valid.sum())
        self.inner = _wu_fitted_evaluator(c1, c0, z0, self.fit_radius)

    def __call__(self, zflat, poles):
        z0 = complex(self.p.base_point)
        needed = float(np.max(np.abs(zflat - z0))) if zflat.size else 0.0
        if self.radius is not None:
            needed = max(needed, float(self.radius))
            self.radius = None
        if self.inner is None or needed > self.fit_radius:
            self._build(max(needed, self.fit_radius))
        return self.inner(zflat, poles)


def normalized_potential(source, route="birkhoff", eps=1e-4, step=0.02,
                         nsub=8, truncation=None, radius=None,
                         grid_points=51, fit_degree=12, residual_tol=1e-6,
                         threads=None):
    """Recover the degree-(-1) potential normalized at the base point.

    Two independent routes, both accepting a potential or an integrated
    frame field.  "birkhoff": Birkhoff-split the holomorphic frame near
    each point and differentiate the minus factor's lambda^{-1}
    coefficient.  "wu": integrate the gauge ODE of Wu's formula and
    conjugate; for potentials with degrees in {-1, 0} the potential's own
    coefficients feed the formula exactly, otherwise the inputs are the
    pure-z Taylor parts of the factored real frames' Maurer-Cartan form,
    fitted on a patch around the base point.

    On the birkhoff route, points where the loop leaves the big cell come
    back NaN and are listed in `.poles` instead of raising."""
    if route not in ("birkhoff", "wu"):
        raise ValueError(f"unknown route {route!r}")
    if isinstance(source, HoloPotential):
        if -1 not in source.terms:
            raise ValueError("potential has no degree -1 term")
        if min(source.terms) < -1:
            raise ValueError("normalized recovery expects degrees >= -1")
        z0 = complex(source.base_point)
        if route == "birkhoff":
            trunc = 8 if truncation is None else int(truncation)
            ev = _birkhoff_potential_evaluator(source, eps, step, nsub, trunc)
            return SampledPotential(z0, source.n, route, ev)
        if max(source.terms) <= 0:
            return SampledPotential(z0, source.n, route,
                                    _wu_exact_evaluator(source, step, nsub))
        diag = {}
        trunc = 10 if truncation is None else int(truncation)
        ev = _WuHammer(source, grid_points, radius, fit_degree, trunc,
                       max(2, nsub // 2), residual_tol, threads, diag)
        return SampledPotential(z0, source.n, route, ev, diagnostics=diag)
    if not isinstance(source, (CFrameField, FrameField)):
        raise TypeError(
            "source must be a HoloPotential, CFrameField, or FrameField")
    grid = source.grid
    z0 = complex(grid.base_point)
    n = source.dim - 4
    if route == "birkhoff":
        stacks = source if isinstance(source, CFrameField) else CFrameField(
            grid, source.truncation, source.C,
            source.local_error, source.edge_mass)
        ev = _birkhoff_grid_evaluator(stacks, stacks.truncation)
        return SampledPotential(z0, n, route, ev)
    ff = _normalized_frame_field(source, residual_tol, threads)
    edge = min(z0.real - grid.u_range[0], grid.u_range[1] - z0.real,
               z0.imag - grid.v_range[0], grid.v_range[1] - z0.imag)
    fit_radius = edge - 2.5 * max(grid.du, grid.dv)
    if radius is not None:
        fit_radius = min(fit_radius, float(radius))
    if fit_radius <= 0:
        raise ValueError("base point too close to the grid edge for the wu "
                         "route fit")
    c1, c0, diag = _fit_deltas_from_frames(ff, z0, fit_radius, int(fit_degree))
    ev = _wu_fitted_evaluator(c1, c0, z0, fit_radius)
    return SampledPotential(z0, n, route, ev, diagnostics=diag)
