"""Lorentzian linear algebra on R^{1,n+3} and light-cone projections.

The ambient space for surfaces in S^{n+2} is R^{1,n+3} with the metric
<x,y> = -x0*y0 + x1*y1 + ... ; points of the sphere are rays of the forward
light cone, and a surface comes with a lightlike lift Y, a dual lift Yhat,
and an orthonormal frame completing them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LIGHTLIKE_TOL = 1e-9


class NotForwardLightlike(ValueError):
    """Vector is not in the forward light cone (within tolerance)."""


class PointAtInfinity(ValueError):
    """Projection divisor vanished: the vertex has no image in this model."""


class InvalidFrame(ValueError):
    """Matrix failed the Lorentz-orthonormality / orientation checks."""


def metric_diagonal(dim):
    """Diagonal of I_{1,dim-1}: one -1 in slot 0, then +1."""
    d = np.ones(dim)
    d[0] = -1.0
    return d


@dataclass(frozen=True)
class Signature:
    """Metric signature (1, dim-1) with the timelike slot first."""

    dim: int
    metric: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim < 5:
            raise ValueError(f"dim must be >= 5, got {self.dim}")
        object.__setattr__(self, "metric", metric_diagonal(self.dim))

    @property
    def eta(self):
        return np.diag(self.metric)


def inner(a, b):
    """Lorentz inner product <a,b> = -a0*b0 + sum_j aj*bj.

    Works on single vectors or on stacked arrays whose last axis is the
    vector axis (the product is taken along that axis).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    eta = metric_diagonal(a.shape[-1])
    return np.sum(a * b * eta, axis=-1)


def project_sphere(Y, tol=LIGHTLIKE_TOL):
    """Ray of a forward-lightlike vector as a unit vector: Y = Y0*(1, y).

    Scale-invariant by construction; raises NotForwardLightlike when the
    0-component is too small to divide by.
    """
    Y = np.asarray(Y, dtype=float)
    scale = np.max(np.abs(Y)) or 1.0
    if Y[0] <= tol * scale:
        raise NotForwardLightlike(f"Y0 = {Y[0]!r} not positive")
    return Y[1:] / Y[0]


def _householder_to_last(pole):
    """Orthogonal H with H @ pole = e_last (exact reflection, or identity)."""
    pole = np.asarray(pole, dtype=float)
    e = np.zeros_like(pole)
    e[-1] = 1.0
    w = pole - e
    wn = w @ w
    if wn < 1e-28:
        return np.eye(len(pole))
    return np.eye(len(pole)) - 2.0 * np.outer(w, w) / wn


def stereographic(y, pole=(0.0, 0.0, 0.0, 1.0), tol=1e-12):
    """Stereographic image of y in S^{n+2} from a unit pole.

    For the pole (0,0,0,1) this is (y1,y2,y3)/(1-y4); a general pole is
    reflected onto the last axis first, so round-trips are exact.
    """
    y = np.asarray(y, dtype=float)
    H = _householder_to_last(pole)
    w = H @ y
    den = 1.0 - w[-1]
    if abs(den) <= tol:
        raise PointAtInfinity("point coincides with the projection pole")
    return w[:-1] / den


def stereographic_inverse(x, pole=(0.0, 0.0, 0.0, 1.0)):
    """Inverse of `stereographic`: a point of R^{n+2} back onto the sphere."""
    x = np.asarray(x, dtype=float)
    r2 = x @ x
    w = np.concatenate([2.0 * x, [r2 - 1.0]]) / (r2 + 1.0)
    H = _householder_to_last(pole)
    return H @ w  # H is an involution


def project_model(Y, model="s3", slot=4, slots=((1, 2, 4), (0, 3)), tol=1e-12):
    """Image of a light-cone point in one space-form model.

    model "s3": unit-sphere ray (see project_sphere).
    model "h3": hyperboloid slice, divide by the coordinate `slot` and drop it.
    model "poincare": ball coordinates Y[nums] / (Y[a] - Y[b]) with
    slots = (nums, (a, b)).

    A divisor below tolerance means the surface crossed the ideal boundary
    of the model; the caller marks that vertex invalid.
    """
    Y = np.asarray(Y, dtype=float)
    if model == "s3":
        return project_sphere(Y)
    if model == "h3":
        den = Y[slot]
        if abs(den) <= tol * (np.max(np.abs(Y)) or 1.0):
            raise PointAtInfinity(f"coordinate {slot} vanished")
        keep = [i for i in range(len(Y)) if i != slot]
        return Y[keep] / den
    if model == "poincare":
        nums, (a, b) = slots
        den = Y[a] - Y[b]
        if abs(den) <= tol * (np.max(np.abs(Y)) or 1.0):
            raise PointAtInfinity("surface point lies on the ideal boundary")
        return Y[list(nums)] / den
    raise ValueError(f"unknown model {model!r}")


def frame_gram_residual(F):
    """sup-norm of F^t I_{1,k} F - I_{1,k}."""
    F = np.asarray(F)
    eta = np.diag(metric_diagonal(F.shape[0]))
    return float(np.max(np.abs(F.T @ eta @ F - eta)))


class LorentzFrame:
    """A matrix in SO+(1, dim-1): Lorentz-orthonormal columns, det 1, F00 > 0.

    Construction validates all three conditions; the raw matrix is exposed
    as `.matrix` and the column vectors index like a sequence.
    """

    def __init__(self, matrix, tol=1e-10):
        F = np.array(matrix, dtype=float)
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise InvalidFrame(f"expected a square matrix, got shape {F.shape}")
        res = frame_gram_residual(F)
        if res > tol:
            raise InvalidFrame(f"orthonormality residual {res:.3e} > {tol:.0e}")
        det = np.linalg.det(F)
        if abs(det - 1.0) > 1e-8:
            raise InvalidFrame(f"det F = {det!r}, want 1")
        if F[0, 0] <= 0:
            raise InvalidFrame("frame reverses time orientation (F00 <= 0)")
        self.matrix = F
        self.matrix.setflags(write=False)

    def __getitem__(self, j):
        return self.matrix[:, j]

    @property
    def dim(self):
        return self.matrix.shape[0]

    def __repr__(self):
        return f"LorentzFrame(dim={self.dim})"
