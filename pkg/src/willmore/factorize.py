"""Birkhoff and Iwasawa splittings of twisted loops, with big-cell detection.

birkhoff: Phi = minus * plus, minus = I + strictly negative degrees.
The unknown negative coefficients of minus satisfy a block-Toeplitz linear
system built from the exact group inverse Psi = eta Phi^t eta: requiring
all negative Fourier coefficients of Psi * minus to vanish makes
Phi^-1 * minus a loop with degrees >= 0, i.e. the inverse of the plus
factor. For a finitely supported loop inside the big cell the true minus
factor is itself finitely supported with min degree >= min degree of Phi,
so the overdetermined solve recovers it exactly up to rounding; outside
the big cell the system goes rank-deficient or inconsistent, which is the
detection signal.

iwasawa: Phi = real * plusB with c(real) = real and plusB(0) in the
solvable slice B. Algorithm: W = c(Phi)^-1 Phi depends only on the plusB
factor, Birkhoff-split W, then solve the constant middle term
M = conj(B0)^-1 B0 inside SO(1,1,C) x SO(n+2,C) block by block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import logm

from .loops import LaurentLoop, evaluate, loop_distance, multiply

COND_LIMIT = 1e12
NEAR_BOUNDARY_COND = 1e9

_SQ2 = np.sqrt(2.0)
# null basis of C^3: isotropic n+, real e3, isotropic n- (columns)
NULL_BASIS = np.array(
    [
        [1.0 / _SQ2, 0.0, 1.0 / _SQ2],
        [1j / _SQ2, 0.0, -1j / _SQ2],
        [0.0, 1.0, 0.0],
    ]
)
NULL_BASIS_INV = np.linalg.inv(NULL_BASIS)
# nilpotent raising element of so(3,C) in the null basis, E^3 = 0
E_RAISE = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, -1.0], [0.0, 0.0, 0.0]])


class OutsideBigCell(RuntimeError):
    """Loop left the open dense set where the factorization exists."""


class MiddleSplitFailure(RuntimeError):
    """Constant middle term admits no K * B splitting within tolerance."""


@dataclass
class BirkhoffFactors:
    minus: LaurentLoop
    plus: LaurentLoop
    residual: float
    cond: float
    near_boundary: bool


@dataclass
class IwasawaFactors:
    real: LaurentLoop
    plusB: LaurentLoop
    residual: float
    reality_residual: float
    solvable_residual: float
    cond: float
    near_boundary: bool


def _circle_residual(target, a, b, samples=32):
    """sup over unit-circle points of |target - a*b|, entrywise."""
    worst = 0.0
    for t in np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False):
        lam = np.exp(1j * t)
        diff = evaluate(target, lam) - evaluate(a, lam) @ evaluate(b, lam)
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def birkhoff(phi, residual_tol=1e-6, cond_limit=COND_LIMIT):
    """Split phi = minus * plus with minus = I + negative degrees.

    Raises OutsideBigCell when the coefficient system is numerically
    singular (condition > cond_limit) or inconsistent (relative residual
    above residual_tol): both witness nontrivial partial indices.
    """
    dim = phi.dim
    trunc = phi.truncation
    K = -min(0, phi.min_deg)
    if K == 0:
        minus = LaurentLoop.identity(dim, trunc)
        plus = LaurentLoop(
            {d: M.copy() for d, M in phi.coeffs.items()}, dim=dim, truncation=trunc
        )
        return BirkhoffFactors(minus, plus, 0.0, 1.0, False)

    psi = phi.eta_inverse()
    rows = list(range(psi.min_deg - K, 0))
    cols = list(range(-K, 0))
    nb = dim * dim
    A = np.zeros((len(rows) * nb, len(cols) * nb), dtype=complex)
    rhs = np.zeros(len(rows) * nb, dtype=complex)
    eye = np.eye(dim)
    for r, e in enumerate(rows):
        Pe = psi.coeffs.get(e)
        if Pe is not None:
            rhs[r * nb : (r + 1) * nb] = -Pe.reshape(-1)
        for c, d in enumerate(cols):
            Ped = psi.coeffs.get(e - d)
            if Ped is None:
                continue
            A[r * nb : (r + 1) * nb, c * nb : (c + 1) * nb] = np.kron(Ped, eye)

    sol, _, rank, sv = np.linalg.lstsq(A, rhs, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if cond > cond_limit:
        raise OutsideBigCell(f"minus-coefficient system condition {cond:.3e}")
    scale = max(1.0, float(np.linalg.norm(rhs)))
    ls_res = float(np.linalg.norm(A @ sol - rhs)) / scale
    if ls_res > residual_tol:
        raise OutsideBigCell(
            f"negative Fourier coefficients cannot be cancelled "
            f"(relative residual {ls_res:.3e})"
        )

    coeffs = {0: np.eye(dim, dtype=complex)}
    for c, d in enumerate(cols):
        Md = sol[c * nb : (c + 1) * nb].reshape(dim, dim)
        if np.linalg.norm(Md) > 1e-150:
            coeffs[d] = Md
    minus = LaurentLoop(coeffs, dim=dim, truncation=trunc)

    prod = multiply(minus.eta_inverse(), phi)
    plus_coeffs = {}
    dropped = 0.0
    for d, M in prod.coeffs.items():
        if d >= 0:
            plus_coeffs[d] = M
        else:
            dropped += float(np.linalg.norm(M))
    plus = LaurentLoop(plus_coeffs, dim=dim, truncation=trunc, tail=prod.tail)
    residual = _circle_residual(phi, minus, plus)
    if residual > residual_tol * max(1.0, phi.norm()):
        raise OutsideBigCell(f"reconstruction residual {residual:.3e}")
    return BirkhoffFactors(minus, plus, residual, cond, cond >= NEAR_BOUNDARY_COND)


# ---------------------------------------------------------------------------
# middle-term split inside K^C = SO(1,1,C) x SO(n+2,C)


def boost_slice(theta):
    """2x2 factor [[cos t, i sin t], [i sin t, cos t]] of the solvable set."""
    return np.array(
        [
            [np.cos(theta), 1j * np.sin(theta)],
            [1j * np.sin(theta), np.cos(theta)],
        ]
    )


def rotation_slice(s, w):
    """Solvable SO(3,C) element diag(e^s,1,e^-s)*unipotent(w) in null basis."""
    U = np.eye(3, dtype=complex) + w * E_RAISE + 0.5 * w * w * (E_RAISE @ E_RAISE)
    D = np.diag([np.exp(s), 1.0, np.exp(-s)]).astype(complex)
    return NULL_BASIS @ (D @ U) @ NULL_BASIS_INV


def solvable_residual(B0, tol_scale=1.0):
    """Distance of a constant block matrix from the solvable slice form."""
    B0 = np.asarray(B0)
    b1 = B0[:2, :2]
    b2 = B0[2:, 2:]
    off = max(float(np.max(np.abs(B0[:2, 2:]))), float(np.max(np.abs(B0[2:, :2]))))
    theta = np.angle(b1[0, 0] + b1[0, 1])
    r1 = float(np.max(np.abs(b1 - boost_slice(theta))))
    bn = NULL_BASIS_INV @ b2 @ NULL_BASIS
    lower = max(abs(bn[1, 0]), abs(bn[2, 0]), abs(bn[2, 1]))
    d0, d1, d2 = bn[0, 0], bn[1, 1], bn[2, 2]
    r2 = max(
        float(lower),
        abs(d0.imag),
        abs(d1 - 1.0),
        abs(d0 * d2 - 1.0),
        max(0.0, -d0.real),
    )
    return max(off, r1, r2)


def _split_boost_block(M1, tol):
    """Solve conj(b1)^-1 b1 = M1 with b1 = boost_slice(theta)."""
    ev = M1[0, 0] + M1[0, 1]  # eigenvalue on the (1,1) null direction
    if abs(ev) < 1e-14:
        raise MiddleSplitFailure("degenerate boost block")
    m = np.log(ev)
    if abs(m.real) > tol:
        raise MiddleSplitFailure(
            f"boost middle term not unimodular (log real part {m.real:.3e})"
        )
    theta = 0.5 * m.imag
    resid = float(np.max(np.abs(boost_slice(2.0 * theta) - M1)))
    if resid > max(tol, 1e-9):
        raise MiddleSplitFailure(f"boost block off the SO(1,1,C) slice by {resid:.3e}")
    return theta


def _rotation_equations(x, M2):
    s, wr, wi = x
    b2 = rotation_slice(s, wr + 1j * wi)
    R = b2 - np.conj(b2) @ M2
    return np.concatenate([R.real.reshape(-1), R.imag.reshape(-1)])


def _solve_rotation_block(M2, tol):
    """Damped Gauss-Newton for conj(b2)^-1 b2 = M2 in the solvable slice.

    Seeded at the identity; a second seed reads the solvable coordinates of
    the principal matrix logarithm, which lands on top of the solution for
    middle terms that are close to normal form already.
    """
    seeds = [np.zeros(3)]
    try:
        m2 = logm(np.asarray(M2, dtype=complex))
        if np.max(np.abs(np.conj(m2) + m2)) < 1e-6 * max(1.0, np.max(np.abs(m2))):
            half = NULL_BASIS_INV @ (0.5 * m2) @ NULL_BASIS
            seeds.append(
                np.array([half[0, 0].real, half[0, 1].real, half[0, 1].imag])
            )
    except Exception:
        pass
    rng = np.random.default_rng(0)
    for _ in range(6):
        seeds.append(rng.standard_normal(3) * 0.4)

    best = None
    for x0 in seeds:
        x = x0.astype(float).copy()
        r = _rotation_equations(x, M2)
        for _ in range(80):
            nr = float(np.linalg.norm(r))
            if nr < tol:
                break
            J = np.zeros((r.size, 3))
            h = 1e-7
            for j in range(3):
                xp = x.copy()
                xp[j] += h
                J[:, j] = (_rotation_equations(xp, M2) - r) / h
            step, *_ = np.linalg.lstsq(J, -r, rcond=None)
            t = 1.0
            while t > 1e-6:
                cand = x + t * step
                rc = _rotation_equations(cand, M2)
                if np.linalg.norm(rc) < (1.0 - 0.25 * t) * nr:
                    x, r = cand, rc
                    break
                t *= 0.5
            else:
                break
        nr = float(np.linalg.norm(r))
        if best is None or nr < best[1]:
            best = (x, nr)
        if nr < tol:
            return x[0], x[1] + 1j * x[2]
    raise MiddleSplitFailure(
        f"rotation-block split did not converge (best residual {best[1]:.3e})"
    )


def split_middle_term(M, tol=1e-10):
    """Find B0 in the solvable slice with conj(B0)^-1 B0 = M."""
    M = np.asarray(M, dtype=complex)
    off = max(float(np.max(np.abs(M[:2, 2:]))), float(np.max(np.abs(M[2:, :2]))))
    if off > 1e-7 * max(1.0, float(np.max(np.abs(M)))):
        raise MiddleSplitFailure(f"middle term not block-diagonal (mass {off:.3e})")
    unitary_defect = float(np.max(np.abs(np.conj(M) @ M - np.eye(M.shape[0]))))
    if unitary_defect > 1e-6 * max(1.0, float(np.max(np.abs(M))) ** 2):
        raise MiddleSplitFailure(
            f"middle term violates conj(M) M = I by {unitary_defect:.3e}"
        )
    # the split equations are inconsistent below the defect of M itself, so
    # floor the block tolerances there instead of chasing an unreachable root
    floor = 4.0 * unitary_defect
    theta = _split_boost_block(M[:2, :2], max(tol, 1e-8, floor))
    s, w = _solve_rotation_block(M[2:, 2:], max(tol, 1e-11, floor))
    B0 = np.zeros_like(M)
    B0[:2, :2] = boost_slice(theta)
    B0[2:, 2:] = rotation_slice(s, w)
    return B0


def iwasawa(phi, residual_tol=1e-6):
    """Split phi = real * plusB, c(real) = real, plusB(0) in the slice."""
    trunc = phi.truncation
    cphi = phi.reality_involution()
    W = multiply(cphi.eta_inverse(), phi)
    W = W.trim(1e-15 * max(1.0, W.norm()))
    bf = birkhoff(W, residual_tol=residual_tol)
    M = bf.plus.coeff(0)
    B0 = split_middle_term(M)
    B = multiply(LaurentLoop.constant(np.conj(B0), truncation=trunc), bf.plus)
    F = multiply(phi, B.eta_inverse())
    cF = F.reality_involution()
    reality_residual = loop_distance(F, cF)
    F = F.add(cF).scale(0.5)
    if evaluate(F, 1.0)[0, 0].real < 0.0:
        # fix the branch theta -> theta + pi of the boost split so the real
        # factor preserves time orientation; -E(i theta) is still in the slice
        fd = np.ones(phi.dim)
        fd[:2] = -1.0
        flip = np.diag(fd)
        F = multiply(F, LaurentLoop.constant(flip, truncation=trunc))
        B = multiply(LaurentLoop.constant(flip, truncation=trunc), B)
    residual = _circle_residual(phi, F, B)
    if residual > residual_tol * max(1.0, phi.norm()):
        raise OutsideBigCell(f"iwasawa reconstruction residual {residual:.3e}")
    return IwasawaFactors(
        real=F,
        plusB=B,
        residual=residual,
        reality_residual=reality_residual,
        solvable_residual=solvable_residual(B.coeff(0)),
        cond=bf.cond,
        near_boundary=bf.near_boundary,
    )
