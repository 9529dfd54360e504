"""Closed-form reference surfaces and geometric verification.

Everything here is read-only post-processing of surface fields: residual
tables for the light-cone frame identities, an umbilic density built from
the central-sphere plane, equivariance checks against one-parameter Mobius
subgroups, and the constant-combination test that detects when a surface is
a space-form minimal surface in disguise.  The module also carries the
closed-form rotational/equivariant immersions used as oracles, and the
initial frames + infinitesimal generators for the equivariant families.
"""

import csv

import numpy as np
from dataclasses import dataclass, field
from scipy.integrate import quad
from scipy.linalg import expm

from .lorentz import (
    InvalidFrame,
    NotForwardLightlike,
    PointAtInfinity,
    inner,
    metric_diagonal,
    project_model,
)
from .dpw import DomainGrid, SurfaceField

_SQRT2 = np.sqrt(2.0)
_FRAME_TOL = 1e-10

UMBILIC_MEDIAN_FACTOR = 1e-5


# ---------------------------------------------------------------------------
# generators of the one-parameter subgroups

def so4_generator(r):
    """Rotation generator on lift coordinates: unit speed in the (1,2)
    plane, speed r in the (3,4) plane.  r = 0 is the surface-of-revolution
    subgroup, r = 1 the Hopf one."""
    X = np.zeros((5, 5))
    X[1, 2], X[2, 1] = -1.0, 1.0
    X[3, 4], X[4, 3] = -float(r), float(r)
    return X


def so13_generator(r):
    """Hyperbolic generator: unit boost in the (0,1) plane, rotation of
    speed r in the (2,3) plane, last slot fixed."""
    X = np.zeros((5, 5))
    X[0, 1] = X[1, 0] = 1.0
    X[2, 3], X[3, 2] = -float(r), float(r)
    return X


# ---------------------------------------------------------------------------
# initial frames for the equivariant families

def _complete_dual(Y, P1, P2, psi):
    # the dual lift is pinned down by orthogonality to P1, P2, psi, the
    # pairing <Yhat, Y> = -1, and <Yhat, Yhat> = 0; the linear part has Y
    # itself as kernel, so shift the particular solution along Y until null
    eta = metric_diagonal(len(Y))
    A = np.stack([P1, P2, psi, Y]) * eta
    rhs = np.array([0.0, 0.0, 0.0, -1.0])
    W, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return W + 0.5 * inner(W, W) * Y


def _assemble_frame(Y, Yhat, P1, P2, psi):
    F = np.stack([(Y + Yhat) / _SQRT2, (Yhat - Y) / _SQRT2, P1, P2, psi],
                 axis=-1)
    eta = metric_diagonal(len(Y))
    gram = F.T @ np.diag(eta) @ F
    err = float(np.max(np.abs(gram - np.diag(eta))))
    if err > _FRAME_TOL:
        raise InvalidFrame(f"frame gram defect {err:.3e}")
    if np.linalg.det(F) < 0.0 or F[0, 0] <= 0.0:
        raise InvalidFrame("frame is not in the identity component")
    return F


def circle_frame(m=0.0, beta=0.0):
    """Initial frame at u = 0 for the rotational families over the unit
    circle.  m = beta = 0 is also the frame of the Lawson-type potentials
    (lift of the circle with constant dual plane)."""
    m = float(m)
    beta = float(beta)
    Y = np.array([1.0, 1.0, 0.0, 0.0, 0.0])
    P1 = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
    P2 = np.array([-m, -m, 0.0, 1.0, 0.0])
    psi = np.array([-beta, -beta, 0.0, 0.0, -1.0])
    Yhat = _complete_dual(Y, P1, P2, psi)
    return _assemble_frame(Y, Yhat, P1, P2, psi)


def equivariant_so4_frame(r, theta, phi, ell, h):
    """Initial frame at u = 0 for the non-rotational families.

    The curve is t -> (a e^{it}, b e^{irt}) in C^2 with a = cos(theta),
    b = sin(theta); (cos(phi), sin(phi)) picks the normal direction and h
    tilts the normal along the lift.  Frame vectors are the u = 0 values of
    the subgroup-invariant frame along that curve.
    """
    r = float(r)
    if r == 0.0:
        raise ValueError("r = 0 is the rotational case, use circle_frame")
    a, b = np.cos(theta), np.sin(theta)
    c, d = np.cos(phi), np.sin(phi)
    ell = float(ell)
    h = float(h)
    R = np.sqrt(a * a + r * r * b * b)

    Y = np.array([1.0, a, 0.0, b, 0.0]) / R
    P1 = np.array([ell, ell * a, a, ell * b, r * b]) / R
    psi = np.array([0.0, -b * c, -b * d * r / R, a * c, a * d / R]) + h * Y
    P2 = (np.array([0.0, b * d, -b * c * R / r, -a * d, a * c * R])
          + (a * b * c * (1.0 - r * r) / (r * R))
          * np.array([ell, a * ell, a, b * ell, b * r])
          - (h * ell / r) * np.array([1.0, a, 0.0, b, 0.0]))
    Yhat = _complete_dual(Y, P1, P2, psi)
    return _assemble_frame(Y, Yhat, P1, P2, psi)


# ---------------------------------------------------------------------------
# closed-form immersions

def _parse_family(family, r):
    if isinstance(family, str):
        name = family.strip().lower()
        if name.endswith(")") and "(" in name:
            name, arg = name[:-1].split("(", 1)
            if r is not None:
                raise ValueError("radius ratio given twice")
            r = float(arg)
    else:
        raise TypeError("family must be a string")
    if name not in ("lawson", "hyperbolic_lawson", "clifford"):
        raise ValueError(f"unknown closed form {family!r}")
    if name == "clifford":
        if r is not None:
            raise ValueError("clifford takes no parameter")
        return name, None
    if r is None or float(r) == 0.0:
        raise ValueError(f"{name} needs a nonzero parameter r")
    return name, float(r)


def _conformal_speed(w, r, hyperbolic):
    if hyperbolic:
        return 1.0 / np.hypot(np.cosh(w), r * np.sinh(w))
    return 1.0 / np.hypot(np.cos(w), r * np.sin(w))


def _invert_vtilde(v_targets, r, hyperbolic, tol=1e-12):
    """Map conformal heights v to the geometric parameter vtilde by bisecting
    v(vtilde) = integral of the conformal speed.  Returns NaN for targets the
    (bounded, in the hyperbolic case) range does not reach."""
    speed = lambda w: _conformal_speed(w, r, hyperbolic)
    out = np.full(len(v_targets), np.nan)
    if hyperbolic:
        reach = quad(speed, 0.0, 50.0)[0]
    for i, v in enumerate(v_targets):
        target = abs(float(v))
        if target == 0.0:
            out[i] = 0.0
            continue
        if hyperbolic:
            if target >= reach - tol:
                continue
            lo, hi = 0.0, 50.0
        else:
            lo = target * min(1.0, abs(r))
            hi = target * max(1.0, abs(r))
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if quad(speed, 0.0, mid)[0] < target:
                lo = mid
            else:
                hi = mid
        out[i] = np.copysign(0.5 * (lo + hi), v)
    return out


@dataclass
class ClosedFormField(SurfaceField):
    """Surface field that also carries the displayed tangent frame."""

    P1: np.ndarray = None
    P2: np.ndarray = None

    def frame_matrix(self, i, j):
        return _assemble_frame(self.Y[i, j], self.Yhat[i, j],
                               self.P1[i, j], self.P2[i, j],
                               self.normals[i, j, 0])


def _lawson_arrays(r, U, VT):
    cu, su = np.cos(U), np.sin(U)
    cru, sru = np.cos(r * U), np.sin(r * U)
    cv, sv = np.cos(VT), np.sin(VT)
    R = np.hypot(cv, r * sv)
    one = np.ones_like(U)
    zero = np.zeros_like(U)
    y = np.stack([cu * cv, su * cv, cru * sv, sru * sv], axis=-1)
    Y = np.concatenate([one[..., None], y], axis=-1)
    Yhat = 0.5 * np.concatenate([one[..., None], -y], axis=-1)
    P1 = np.stack([zero, -su * cv, cu * cv, -r * sru * sv, r * cru * sv],
                  axis=-1) / R[..., None]
    P2 = np.stack([zero, -cu * sv, -su * sv, cru * cv, sru * cv], axis=-1)
    psi = np.stack([zero, -r * su * sv, r * cu * sv, sru * cv, -cru * cv],
                   axis=-1) / R[..., None]
    return Y, Yhat, P1, P2, psi


def _hyperbolic_lawson_arrays(r, U, VT):
    chu, shu = np.cosh(U), np.sinh(U)
    cru, sru = np.cos(r * U), np.sin(r * U)
    chv, shv = np.cosh(VT), np.sinh(VT)
    R = np.hypot(chv, r * shv)
    one = np.ones_like(U)
    zero = np.zeros_like(U)
    Y = np.stack([chv * chu, chv * shu, shv * cru, shv * sru, one], axis=-1)
    Yhat = 0.5 * np.stack([chv * chu, chv * shu, shv * cru, shv * sru, -one],
                          axis=-1)
    P1 = np.stack([chv * shu, chv * chu, -r * shv * sru, r * shv * cru, zero],
                  axis=-1) / R[..., None]
    P2 = np.stack([shv * chu, shv * shu, chv * cru, chv * sru, zero], axis=-1)
    psi = -np.stack([r * shv * shu, r * shv * chu, chv * sru, -chv * cru,
                     zero], axis=-1) / R[..., None]
    return Y, Yhat, P1, P2, psi


def _clifford_arrays(U, V):
    s = 1.0 / _SQRT2
    A, B = U + V, U - V
    ca, sa = np.cos(A), np.sin(A)
    cb, sb = np.cos(B), np.sin(B)
    one = np.ones_like(U)
    zero = np.zeros_like(U)
    y = s * np.stack([ca, sa, cb, sb], axis=-1)
    Y = np.concatenate([one[..., None], y], axis=-1)
    Yhat = 0.5 * np.concatenate([one[..., None], -y], axis=-1)
    P1 = s * np.stack([zero, -sa, ca, -sb, cb], axis=-1)
    P2 = s * np.stack([zero, -sa, ca, sb, -cb], axis=-1)
    psi = s * np.stack([zero, ca, sa, -cb, -sb], axis=-1)
    return Y, Yhat, P1, P2, psi


def closed_form(family, grid, r=None):
    """Reference surface field on the grid, from the explicit immersions.

    family: "lawson", "hyperbolic_lawson" (parameter r, either via the r
    keyword or spelled "lawson(2)") or "clifford".  The first two are
    displayed in the geometric parameter vtilde; the conformal height v of
    each grid row is converted by inverting the arclength integral
    (bisection to 1e-12).  Hyperbolic rows beyond the bounded conformal
    range are marked invalid.
    """
    name, rr = _parse_family(family, r)
    nu, nv = grid.shape
    U = np.broadcast_to(grid.us[:, None], (nu, nv))
    valid = np.ones((nu, nv), dtype=bool)
    reason = np.full((nu, nv), None, dtype=object)

    if name == "clifford":
        V = np.broadcast_to(grid.vs[None, :], (nu, nv))
        Y, Yhat, P1, P2, psi = _clifford_arrays(U, V)
    else:
        hyp = name == "hyperbolic_lawson"
        vt = _invert_vtilde(grid.vs, rr, hyp)
        bad = ~np.isfinite(vt)
        if bad.any():
            valid[:, bad] = False
            for j in np.nonzero(bad)[0]:
                reason[:, j] = "conformal height outside the bounded range"
            vt = np.where(bad, 0.0, vt)
        VT = np.broadcast_to(vt[None, :], (nu, nv))
        build = _hyperbolic_lawson_arrays if hyp else _lawson_arrays
        Y, Yhat, P1, P2, psi = build(rr, U, VT)
        if bad.any():
            Y = np.where(valid[..., None], Y, np.nan)
            Yhat = np.where(valid[..., None], Yhat, np.nan)
            P1 = np.where(valid[..., None], P1, np.nan)
            P2 = np.where(valid[..., None], P2, np.nan)
            psi = np.where(valid[..., None], psi, np.nan)

    normals = psi[:, :, None, :]
    diagnostics = {
        "null_Y": np.abs(inner(Y, Y)),
        "null_Yhat": np.abs(inner(Yhat, Yhat)),
        "duality": np.abs(inner(Y, Yhat) + 1.0),
        "psi_unit": np.abs(inner(psi, psi) - 1.0),
        "psi_orth_Y": np.abs(inner(psi, Y)),
        "psi_orth_Yhat": np.abs(inner(psi, Yhat)),
    }
    return ClosedFormField(grid, Y, Yhat, normals, valid, reason,
                           diagnostics, P1=P1, P2=P2)


# ---------------------------------------------------------------------------
# finite differences over a masked grid

def _masked_shift(F, k, axis):
    out = np.full_like(F, np.nan)
    src = [slice(None)] * F.ndim
    dst = [slice(None)] * F.ndim
    if k >= 0:
        src[axis] = slice(k, None)
        dst[axis] = slice(None, F.shape[axis] - k)
    else:
        src[axis] = slice(None, k)
        dst[axis] = slice(-k, None)
    out[tuple(dst)] = F[tuple(src)]
    return out


def _fd_first(F, h, axis):
    """First derivative along a grid axis.

    Five-point central where the stencil stays inside the valid set,
    three-point central next, one-sided as a last resort.  Returns
    (dF, order) with the per-vertex accuracy order 4, 2, 1 or 0.
    """
    p1 = _masked_shift(F, 1, axis)
    m1 = _masked_shift(F, -1, axis)
    p2 = _masked_shift(F, 2, axis)
    m2 = _masked_shift(F, -2, axis)

    def fin(A):
        return np.isfinite(A).all(axis=-1)

    dF = np.full_like(F, np.nan)
    order = np.zeros(F.shape[:-1], dtype=np.int8)
    c3 = fin(p1) & fin(m1)
    dF[c3] = (p1[c3] - m1[c3]) / (2.0 * h)
    order[c3] = 2
    c5 = c3 & fin(p2) & fin(m2)
    dF[c5] = (8.0 * (p1[c5] - m1[c5]) - (p2[c5] - m2[c5])) / (12.0 * h)
    order[c5] = 4
    fwd = fin(F) & fin(p1) & ~c3
    dF[fwd] = (p1[fwd] - F[fwd]) / h
    bwd = fin(F) & fin(m1) & ~c3
    dF[bwd] = (F[bwd] - m1[bwd]) / h
    order[fwd | bwd] = 1
    return dF, order


def _fd_second(F, h, axis):
    # five-point second derivative, NaN where the stencil is incomplete.
    # No lower-order fallback: the umbilic threshold needs uniform accuracy,
    # and a quietly degraded value is worse there than a hole.
    p1 = _masked_shift(F, 1, axis)
    m1 = _masked_shift(F, -1, axis)
    p2 = _masked_shift(F, 2, axis)
    m2 = _masked_shift(F, -2, axis)
    return (16.0 * (p1 + m1) - (p2 + m2) - 30.0 * F) / (12.0 * h * h)


def _fd_central(F, h, axis):
    # five-point first derivative for tensor fields, elementwise, same
    # no-fallback policy as _fd_second
    p1 = _masked_shift(F, 1, axis)
    m1 = _masked_shift(F, -1, axis)
    p2 = _masked_shift(F, 2, axis)
    m2 = _masked_shift(F, -2, axis)
    return (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)


def _nan_where_invalid(sf, arr):
    return np.where(sf.valid[..., None], arr, np.nan)


# ---------------------------------------------------------------------------
# residual report

_REPORT_COLUMNS = ("null_Y", "null_Yhat", "duality", "conformal",
                   "frame_orth", "normal_tangency", "immersion")


@dataclass
class ResidualReport:
    """Per-vertex residual table for the light-cone identities.

    columns maps each residual name to an (Nu, Nv) array of nonnegative
    values (NaN where undefined); aggregates holds {"max", "rms"} per
    column over the finite entries.  fd_order records how each vertex's
    z-derivative was formed (4 or 2 central, 1 one-sided, 0 unavailable).
    """

    grid: DomainGrid
    columns: dict
    immersed: np.ndarray
    valid: np.ndarray
    fd_order: np.ndarray
    aggregates: dict = field(default_factory=dict)

    def to_csv(self, path):
        names = list(self.columns)
        nu, nv = self.grid.shape
        us, vs = self.grid.us, self.grid.vs
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "v"] + names + ["valid", "immersed", "fd_order"])
            for i in range(nu):
                for j in range(nv):
                    row = [repr(us[i]), repr(vs[j])]
                    row += [repr(float(self.columns[k][i, j])) for k in names]
                    row += [int(self.valid[i, j]), int(self.immersed[i, j]),
                            int(self.fd_order[i, j])]
                    w.writerow(row)


def _aggregate(columns):
    out = {}
    for name, arr in columns.items():
        finite = arr[np.isfinite(arr)]
        if finite.size:
            out[name] = {"max": float(np.max(finite)),
                         "rms": float(np.sqrt(np.mean(finite ** 2)))}
        else:
            out[name] = {"max": np.nan, "rms": np.nan}
    return out


def residual_report(sf):
    """Evaluate the pointwise identities a surface field should satisfy.

    Inner-product residuals (null lifts, duality, normal orthogonality)
    need no differencing; the conformality residual <Y_z, Y_z> and the
    immersion indicator <Y_z, Y_zbar> use central differences where both
    neighbours are valid and fall back to one-sided ones at the edge of the
    valid set, so every valid vertex gets a finite row.
    """
    Y = _nan_where_invalid(sf, sf.Y)
    Yhat = _nan_where_invalid(sf, sf.Yhat)

    vecs = [Y, Yhat]
    if isinstance(sf, ClosedFormField):
        vecs += [_nan_where_invalid(sf, sf.P1), _nan_where_invalid(sf, sf.P2)]
    normal_vecs = [_nan_where_invalid(sf, sf.normals[:, :, j])
                   for j in range(sf.n)]
    vecs += normal_vecs
    k = len(vecs)
    expected = np.zeros((k, k))
    expected[0, 1] = expected[1, 0] = -1.0
    for a in range(2, k):
        expected[a, a] = 1.0
    frame_orth = np.zeros(sf.grid.shape)
    for a in range(k):
        for b in range(a, k):
            dev = np.abs(inner(vecs[a], vecs[b]) - expected[a, b])
            frame_orth = np.maximum(frame_orth, dev)

    Yu, ou = _fd_first(Y, sf.grid.du, 0)
    Yv, ov = _fd_first(Y, sf.grid.dv, 1)
    order = np.minimum(ou, ov)
    Yz = 0.5 * (Yu - 1j * Yv)
    conformal = np.abs(inner(Yz, Yz))
    indicator = inner(Yz, np.conj(Yz)).real
    # central stencils never sample the centre vertex, so an invalid vertex
    # between valid neighbours would otherwise get a finite derivative
    bad = ~sf.valid
    conformal[bad] = np.nan
    indicator[bad] = np.nan
    order[bad] = 0
    speed = np.sqrt(np.where(indicator > 0.0, indicator, np.nan))

    tangency = np.zeros(sf.grid.shape)
    for psi in normal_vecs:
        t = np.abs(inner(psi, Yu)) + np.abs(inner(psi, Yv))
        # a degenerate vertex has no tangent direction to be orthogonal to
        t = np.where(t == 0.0, 0.0, t / (2.0 * speed))
        tangency = np.maximum(tangency, t)

    columns = {
        "null_Y": np.abs(inner(Y, Y)),
        "null_Yhat": np.abs(inner(Yhat, Yhat)),
        "duality": np.abs(inner(Y, Yhat) + 1.0),
        "conformal": conformal,
        "frame_orth": frame_orth,
        "normal_tangency": tangency,
        "immersion": indicator,
    }
    immersed = np.isfinite(indicator) & (indicator > 0.0)
    return ResidualReport(sf.grid, columns, immersed, sf.valid.copy(),
                          order, _aggregate(columns))


# ---------------------------------------------------------------------------
# umbilic density from the central-sphere plane

def umbilic_density(sf):
    """Squared differential density of the central-sphere plane field.

    At every interior vertex the plane spanned by (Y, Y_u, Y_v, N) is
    encoded as the metric projector P onto it; the density is
    g = (tr((dP/du)^2) + tr((dP/dv)^2)) / 16, which for codimension one
    equals the squared norm of the conformal Hopf differential.  N is
    completed from the finite-difference Laplacian: N = 2 Y_{z zbar} mod Y,
    rescaled to <N, Y> = -1 and shifted along Y until null.

    Every stage uses five-point stencils with no lower-order fallback, so
    values are uniformly fourth-order accurate but the NaN margin around
    grid borders and invalid vertices is four cells instead of two.
    Vertices where the plane degenerates (not immersed) also come back NaN.
    """
    du, dv = sf.grid.du, sf.grid.dv
    Y = _nan_where_invalid(sf, sf.Y)
    Yu = _fd_central(Y, du, 0)
    Yv = _fd_central(Y, dv, 1)
    N0 = 0.5 * (_fd_second(Y, du, 0) + _fd_second(Y, dv, 1))

    pairing = inner(N0, Y)
    scale = np.maximum(np.sum(Y * Y, axis=-1), 1.0)
    degenerate = ~(np.abs(pairing) > 1e-12 * scale)
    pairing = np.where(degenerate, np.nan, pairing)
    N1 = -N0 / pairing[..., None]
    N = N1 + 0.5 * inner(N1, N1)[..., None] * Y

    B = np.stack([Y, Yu, Yv, N], axis=-2)
    eta = metric_diagonal(sf.dim)
    G = np.einsum("...ia,a,...ja->...ij", B, eta, B)
    ok = np.isfinite(G).all(axis=(-2, -1))
    ok &= np.abs(np.linalg.det(np.where(ok[..., None, None], G, np.eye(4)))) > 1e-10
    Ginv = np.linalg.inv(np.where(ok[..., None, None], G, np.eye(4)))
    P = np.einsum("...ia,...ij,...jb,b->...ab", B, Ginv, B, eta)
    P = np.where(ok[..., None, None], P, np.nan)

    Pu = _fd_central(P, du, 0)
    Pv = _fd_central(P, dv, 1)
    g = (np.einsum("...ab,...ba->...", Pu, Pu)
         + np.einsum("...ab,...ba->...", Pv, Pv)) / 16.0
    return g


def umbilic_flags(g):
    """Boolean mask of umbilic candidates: density below a scale-free cut of
    the grid median."""
    finite = g[np.isfinite(g)]
    if not finite.size:
        return np.zeros_like(g, dtype=bool)
    return g < UMBILIC_MEDIAN_FACTOR * np.median(finite)


# ---------------------------------------------------------------------------
# equivariance

def _project_points(Y, valid, model, **kwargs):
    nu, nv = Y.shape[:2]
    out = None
    for i in range(nu):
        for j in range(nv):
            if not valid[i, j] or not np.all(np.isfinite(Y[i, j])):
                continue
            try:
                pt = project_model(Y[i, j], model, **kwargs)
            except (NotForwardLightlike, PointAtInfinity):
                continue
            if out is None:
                out = np.full((nu, nv, len(pt)), np.nan)
            out[i, j] = pt
    if out is None:
        raise ValueError("no projectable vertices in the field")
    return out


def equivariance_check(sf, generator, t, model="s3", **kwargs):
    """Max distance between the surface shifted by t in u and the surface
    moved by exp(t * generator), after projection to the model space form.

    The grid must be closed under the shift: t has to be an integer multiple
    of the u spacing (to 1e-6 relative), otherwise the two samplings do not
    line up and a ValueError is raised rather than an interpolation guessed.
    """
    X = np.asarray(generator, dtype=float)
    dim = sf.dim
    if X.shape != (dim, dim):
        raise ValueError(f"generator must be {dim} x {dim}")
    eta = np.diag(metric_diagonal(dim))
    skew = np.max(np.abs(X.T @ eta + eta @ X))
    if skew > 1e-10:
        raise ValueError("generator is not Lorentz-skew")

    du = sf.grid.du
    ratio = t / du
    shift = int(round(ratio))
    if abs(ratio - shift) > 1e-6 * max(1.0, abs(ratio)):
        raise ValueError(
            f"t = {t} is not aligned with the grid (u spacing {du:.6g}); "
            "choose t as an integer multiple of the spacing")

    base = _project_points(sf.Y, sf.valid, model, **kwargs)
    moved = _project_points(sf.Y @ expm(t * X).T, sf.valid, model, **kwargs)
    if shift >= 0:
        lhs, rhs = base[shift:], moved[:base.shape[0] - shift]
    else:
        lhs, rhs = base[:shift], moved[-shift:]
    gap = np.linalg.norm(lhs - rhs, axis=-1)
    gap = gap[np.isfinite(gap)]
    if not gap.size:
        raise ValueError("shift leaves no comparable vertex pairs")
    return float(np.max(gap))


# ---------------------------------------------------------------------------
# minimal-surface detection through a constant combination of the lift pair

def find_constant_combination(sf, res_tol=1e-4, null_tol=1e-6):
    """Search for a constant vector lying in span{Y, Yhat} at every vertex.

    A surface is minimal in some space form exactly when such a vector
    exists; its causal type selects the form.  The vector is recovered as
    the bottom eigenvector of the averaged Euclidean projector onto the
    orthogonal complement of span{Y, Yhat}, the residual is the worst
    per-vertex distance of the (unit) vector from the span, and the causal
    label reads the Lorentz square against a tolerance that cannot dip
    below the fit quality.

    Returns {"character": "S3" | "R3" | "H3" | "none", "coeffs": (a, b),
    "residual": float, "vector": C, "lorentz_square": <C, C>}.
    """
    mask = sf.valid & np.isfinite(sf.Y).all(axis=-1) \
        & np.isfinite(sf.Yhat).all(axis=-1)
    idx = np.argwhere(mask)
    if len(idx) < 10:
        raise ValueError(f"need at least 10 valid vertices, have {len(idx)}")

    dim = sf.dim
    comp = np.zeros((dim, dim))
    spans = []
    for i, j in idx:
        Q, _ = np.linalg.qr(np.stack([sf.Y[i, j], sf.Yhat[i, j]], axis=1))
        spans.append(Q)
        comp += np.eye(dim) - Q @ Q.T
    comp /= len(idx)
    w, V = np.linalg.eigh(comp)
    C = V[:, 0]
    if C[np.argmax(np.abs(C))] < 0.0:
        C = -C

    residual = 0.0
    for Q in spans:
        residual = max(residual, float(np.linalg.norm(C - Q @ (Q.T @ C))))

    i, j = idx[0]
    basis = np.stack([sf.Y[i, j], sf.Yhat[i, j]], axis=1)
    coeffs, *_ = np.linalg.lstsq(basis, C, rcond=None)

    lorentz = float(inner(C, C))
    cut = max(null_tol, 10.0 * residual)
    if residual > res_tol:
        character = "none"
    elif abs(lorentz) <= cut:
        character = "R3"
    else:
        character = "S3" if lorentz < 0.0 else "H3"
    return {"character": character, "coeffs": (float(coeffs[0]),
                                               float(coeffs[1])),
            "residual": residual, "vector": C, "lorentz_square": lorentz}
