"""Truncated Laurent-polynomial loops in SO(1,n+3,C) with the parity twist.

A loop is a finite map degree -> (n+4)x(n+4) complex matrix. The twist
sigma(X)(lambda) = D X(-lambda) D^-1 with D = diag(-1,-1,1,..,1) forces
even-degree coefficients to be block-diagonal (2 + (n+2)) and odd-degree
ones block-off-diagonal. The real form consists of loops fixed by
c(X)(lambda) = conj(X(1/conj(lambda))), i.e. real matrices on |lambda|=1.

Products truncate symmetrically at a configurable max degree and record
the dropped coefficient mass, so downstream checks can assert the tail
stayed negligible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lorentz import metric_diagonal

DEFAULT_TRUNCATION = 12


class PoleAtZero(ValueError):
    """Evaluation at lambda = 0 of a loop with negative-degree terms."""


class IllConditioned(RuntimeError):
    """Coefficient linear system too singular to trust."""


def _as_matrix(M, dim):
    A = np.asarray(M, dtype=complex)
    if A.shape != (dim, dim):
        raise ValueError(f"expected {(dim, dim)} matrix, got {A.shape}")
    return A


class LaurentLoop:
    """Finitely supported Laurent series of square matrices in lambda."""

    def __init__(self, coeffs=None, dim=5, truncation=DEFAULT_TRUNCATION, tail=0.0):
        self.dim = dim
        self.truncation = int(truncation)
        self.tail = float(tail)
        data = {}
        if coeffs:
            items = coeffs.items() if isinstance(coeffs, dict) else coeffs
            for d, M in items:
                d = int(d)
                if abs(d) > self.truncation:
                    self.tail += float(np.linalg.norm(M))
                    continue
                A = _as_matrix(M, dim)
                if d in data:
                    data[d] = data[d] + A
                else:
                    data[d] = A.copy()
        self.coeffs = data

    # -- constructors -------------------------------------------------------

    @classmethod
    def identity(cls, dim=5, truncation=DEFAULT_TRUNCATION):
        return cls({0: np.eye(dim)}, dim=dim, truncation=truncation)

    @classmethod
    def constant(cls, M, truncation=DEFAULT_TRUNCATION):
        M = np.asarray(M, dtype=complex)
        return cls({0: M}, dim=M.shape[0], truncation=truncation)

    # -- basic access -------------------------------------------------------

    def coeff(self, d):
        M = self.coeffs.get(int(d))
        if M is None:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return M

    def degrees(self):
        return sorted(self.coeffs)

    @property
    def min_deg(self):
        return min(self.coeffs) if self.coeffs else 0

    @property
    def max_deg(self):
        return max(self.coeffs) if self.coeffs else 0

    def norm(self):
        """Sum of Frobenius norms of the coefficients (submultiplicative)."""
        return float(sum(np.linalg.norm(M) for M in self.coeffs.values()))

    def trim(self, tol=0.0):
        """Drop coefficients with norm <= tol (mass added to the tail)."""
        out = {}
        tail = self.tail
        for d, M in self.coeffs.items():
            nm = float(np.linalg.norm(M))
            if nm <= tol:
                tail += nm
            else:
                out[d] = M
        return LaurentLoop(out, dim=self.dim, truncation=self.truncation, tail=tail)

    def scale(self, c):
        return LaurentLoop(
            {d: c * M for d, M in self.coeffs.items()},
            dim=self.dim,
            truncation=self.truncation,
            tail=abs(c) * self.tail,
        )

    def add(self, other):
        data = {d: M.copy() for d, M in self.coeffs.items()}
        for d, M in other.coeffs.items():
            data[d] = data[d] + M if d in data else M.copy()
        return LaurentLoop(
            data,
            dim=self.dim,
            truncation=max(self.truncation, other.truncation),
            tail=self.tail + other.tail,
        )

    def __matmul__(self, other):
        return multiply(self, other)

    # -- involutions and inverses ------------------------------------------

    def reality_involution(self):
        """c(X)(lambda) = conj(X(1/conj(lambda))): degree d -> conj at -d."""
        return LaurentLoop(
            {-d: np.conj(M) for d, M in self.coeffs.items()},
            dim=self.dim,
            truncation=self.truncation,
            tail=self.tail,
        )

    def eta_inverse(self):
        """Exact inverse of a Lorentz-orthogonal loop: eta X(lambda)^t eta.

        Valid whenever X(lambda)^t eta X(lambda) = eta holds identically in
        lambda (Laurent-polynomial identity), which is the case for every
        group-valued loop handled here. Degree support is preserved.
        """
        eta = metric_diagonal(self.dim)
        return LaurentLoop(
            {d: (eta[:, None] * M.T) * eta[None, :] for d, M in self.coeffs.items()},
            dim=self.dim,
            truncation=self.truncation,
            tail=self.tail,
        )

    # -- evaluation ---------------------------------------------------------

    def __call__(self, lam):
        return evaluate(self, lam)

    def __repr__(self):
        if not self.coeffs:
            return f"LaurentLoop(zero, dim={self.dim})"
        return (
            f"LaurentLoop(degrees [{self.min_deg},{self.max_deg}], "
            f"dim={self.dim}, tail={self.tail:.2e})"
        )


def multiply(a, b):
    """Coefficient convolution, truncated at max(|deg|) <= truncation."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch {a.dim} vs {b.dim}")
    trunc = max(a.truncation, b.truncation)
    data = {}
    dropped = 0.0
    for da, Ma in a.coeffs.items():
        for db, Mb in b.coeffs.items():
            d = da + db
            P = Ma @ Mb
            if abs(d) > trunc:
                dropped += float(np.linalg.norm(P))
                continue
            if d in data:
                data[d] += P
            else:
                data[d] = P
    tail = a.tail + b.tail + dropped
    return LaurentLoop(data, dim=a.dim, truncation=trunc, tail=tail)


def evaluate(a, lam):
    """Horner evaluation of the Laurent polynomial at lambda."""
    if not a.coeffs:
        return np.zeros((a.dim, a.dim), dtype=complex)
    lam = complex(lam)
    lo, hi = a.min_deg, a.max_deg
    if lam == 0:
        if lo < 0:
            raise PoleAtZero("loop has negative-degree terms at lambda = 0")
        return a.coeff(0).copy()
    acc = np.zeros((a.dim, a.dim), dtype=complex)
    for d in range(hi, lo - 1, -1):
        acc = acc * lam + a.coeff(d)
    return acc * lam**lo


def reality_involution(a):
    return a.reality_involution()


def invert(a, residual_tol=1e-6, cond_limit=1e12):
    """Inverse loop by least squares on the coefficient convolution system.

    Unknown coefficients of the inverse live on [-N, N]; the equations
    request conv(a, b) = identity on every degree the product can reach, so
    the solve is overdetermined and exact whenever the true inverse fits in
    the truncation window. Raises IllConditioned when the system is too
    singular or the achieved residual is above residual_tol.
    """
    dim = a.dim
    N = a.truncation
    if not a.coeffs:
        raise IllConditioned("zero loop has no inverse")
    bdegs = list(range(-N, N + 1))
    rows = list(range(a.min_deg - N, a.max_deg + N + 1))
    eye = np.eye(dim)
    M = np.zeros((len(rows) * dim * dim, len(bdegs) * dim * dim), dtype=complex)
    rhs = np.zeros(len(rows) * dim * dim, dtype=complex)
    for r, d in enumerate(rows):
        if d == 0:
            rhs[r * dim * dim : (r + 1) * dim * dim] = eye.reshape(-1)
        for c, bd in enumerate(bdegs):
            Ad = a.coeffs.get(d - bd)
            if Ad is None:
                continue
            M[
                r * dim * dim : (r + 1) * dim * dim,
                c * dim * dim : (c + 1) * dim * dim,
            ] = np.kron(Ad, eye)
    sol, _, rank, sv = np.linalg.lstsq(M, rhs, rcond=None)
    if sv[0] > 0 and (sv[-1] == 0 or sv[0] / sv[-1] > cond_limit):
        raise IllConditioned(
            f"convolution system condition {sv[0] / max(sv[-1], 1e-300):.2e}"
        )
    coeffs = {}
    for c, bd in enumerate(bdegs):
        B = sol[c * dim * dim : (c + 1) * dim * dim].reshape(dim, dim)
        if np.linalg.norm(B) > 1e-13:
            coeffs[bd] = B
    b = LaurentLoop(coeffs, dim=dim, truncation=N)
    check = multiply(a, b)
    res = check.add(LaurentLoop.identity(dim, N).scale(-1.0)).norm()
    if res > residual_tol:
        raise IllConditioned(f"inverse residual {res:.3e} exceeds {residual_tol:.0e}")
    b.tail += res
    return b


def loop_exp(X, truncation=None, tol=1e-18):
    """exp of a loop-algebra element by scaling and squaring.

    Squaring truncates like any product, so the reported tail tracks the
    discarded high-degree mass.
    """
    trunc = X.truncation if truncation is None else truncation
    dim = X.dim
    nrm = X.norm()
    s = 0
    while nrm > 0.5:
        nrm /= 2.0
        s += 1
    Xs = X.scale(0.5**s)
    Xs = LaurentLoop(Xs.coeffs, dim=dim, truncation=trunc, tail=Xs.tail)
    acc = LaurentLoop.identity(dim, trunc)
    term = LaurentLoop.identity(dim, trunc)
    k = 1
    while True:
        term = multiply(term, Xs).scale(1.0 / k)
        acc = acc.add(term)
        if term.norm() < tol * max(1.0, acc.norm()) or k > 60:
            break
        k += 1
    for _ in range(s):
        acc = multiply(acc, acc)
    return acc


def bracket(X, Y):
    """Lie bracket [X, Y] = XY - YX of loop-algebra elements."""
    return multiply(X, Y).add(multiply(Y, X).scale(-1.0))


# ---------------------------------------------------------------------------
# membership diagnostics


@dataclass
class MembershipReport:
    """Residuals, all relative to the loop's coefficient norm."""

    orthogonality: float
    twist: float
    algebra: float
    parity_split: float
    loop_norm: float

    def is_twisted_group(self, tol=1e-9):
        return self.orthogonality < tol and self.twist < tol

    def is_twisted_algebra(self, tol=1e-9):
        return self.algebra < tol and self.parity_split < tol


def twist_residual(a):
    """Deviation from D X(-lambda) D = X(lambda), per coefficient."""
    scale = max(a.norm(), 1e-300)
    worst = 0.0
    for d, M in a.coeffs.items():
        T = M.copy()
        T[:2, 2:] *= -1.0
        T[2:, :2] *= -1.0  # D M D
        worst = max(worst, float(np.max(np.abs(T - (-1.0) ** d * M))))
    return worst / scale


def parity_split_residual(a):
    """Mass in the wrong block: even degrees must be block-diagonal."""
    scale = max(a.norm(), 1e-300)
    worst = 0.0
    for d, M in a.coeffs.items():
        if d % 2 == 0:
            bad = max(np.max(np.abs(M[:2, 2:])), np.max(np.abs(M[2:, :2])))
        else:
            bad = max(np.max(np.abs(M[:2, :2])), np.max(np.abs(M[2:, 2:])))
        worst = max(worst, float(bad))
    return worst / scale


def orthogonality_residual(a, samples=16):
    """max over unit-circle lambda of |X^t eta X - eta|, relative."""
    eta = np.diag(metric_diagonal(a.dim))
    scale = max(a.norm(), 1.0) ** 2
    worst = 0.0
    for t in np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False):
        lam = np.exp(1j * t)
        V = evaluate(a, lam)
        worst = max(worst, float(np.max(np.abs(V.T @ eta @ V - eta))))
    return worst / scale


def algebra_residual(a):
    """Per-coefficient deviation from X^t eta + eta X = 0."""
    eta = metric_diagonal(a.dim)
    scale = max(a.norm(), 1e-300)
    worst = 0.0
    for M in a.coeffs.values():
        defect = M.T * eta[None, :] + M * eta[:, None]
        worst = max(worst, float(np.max(np.abs(defect))))
    return worst / scale


def check_membership(a, samples=16):
    return MembershipReport(
        orthogonality=orthogonality_residual(a, samples),
        twist=twist_residual(a),
        algebra=algebra_residual(a),
        parity_split=parity_split_residual(a),
        loop_norm=a.norm(),
    )


def loops_close(a, b, tol=1e-10):
    """sup-norm distance across all coefficients, compared to tol."""
    degs = set(a.coeffs) | set(b.coeffs)
    worst = 0.0
    for d in degs:
        worst = max(worst, float(np.max(np.abs(a.coeff(d) - b.coeff(d)))))
    return worst <= tol


def loop_distance(a, b):
    degs = set(a.coeffs) | set(b.coeffs)
    if not degs:
        return 0.0
    return max(float(np.max(np.abs(a.coeff(d) - b.coeff(d)))) for d in degs)
