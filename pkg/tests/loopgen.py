"""Construction kit for exact finite-degree test loops.

Everything here is an exact twisted group loop by algebra, not by numerical
truncation: nilpotent one-step factors (N^2 = 0, so I + lambda^d N is
orthogonal identically in lambda), three-step rotation-block exponentials
(N3^3 = 0), genuinely real rotation loops, and constant group elements.
These feed the factorization round-trip tests, where reconstruction has to
hold to 1e-9 and a truncated exp would already spend that budget.
"""

import numpy as np
from scipy.linalg import expm

from willmore.loops import LaurentLoop, multiply

ETA1 = np.diag([-1.0, 1.0])


def isotropic_triple(rng, scale=1.0):
    """q in C^3 with q^t q = 0 (plain transpose), via the Veronese map."""
    c1, c2 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    q = np.array([c1 * c1 - c2 * c2, 1j * (c1 * c1 + c2 * c2), 2.0 * c1 * c2])
    nrm = np.linalg.norm(q)
    if nrm < 1e-6:
        return isotropic_triple(rng, scale)
    return q * (scale / nrm)


def p_type_nilpotent(rng, scale=0.45):
    """Off-diagonal N with N^2 = 0: N = [[0, p q^t], [-(p q^t)^t eta1, 0]]."""
    p = np.array([1.0, rng.choice([-1.0, 1.0])], dtype=complex)
    q = isotropic_triple(rng, scale)
    B = np.outer(p, q)
    N = np.zeros((5, 5), dtype=complex)
    N[:2, 2:] = B
    N[2:, :2] = -B.T @ ETA1
    return N


def rotation_block_nilpotent(rng, scale=0.5):
    """so(3,C) element N3 = q s^t - s q^t with N3^3 = 0, embedded in 5x5."""
    q = isotropic_triple(rng)
    r = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    s = np.cross(q, r)  # q^t s = 0 over C as well
    if abs(s @ s) < 1e-8:
        return rotation_block_nilpotent(rng, scale)
    N3 = np.outer(q, s) - np.outer(s, q)
    N3 *= scale / np.linalg.norm(N3)
    N = np.zeros((5, 5), dtype=complex)
    N[2:, 2:] = N3
    return N


def one_step_factor(d, N, trunc=12):
    """I + lambda^d N for nilpotent N of square zero: exact group loop."""
    return LaurentLoop({0: np.eye(5), d: N}, truncation=trunc)


def three_step_factor(d, N, trunc=12):
    """exp(lambda^d N) for N^3 = 0: I + lambda^d N + lambda^{2d} N^2/2."""
    return LaurentLoop(
        {0: np.eye(5), d: N, 2 * d: N @ N / 2.0}, truncation=trunc
    )


def rotation_loop(a, b, n, phi, trunc=12):
    """Plane rotation by angle n*t + phi in coordinates (a, b), lambda=e^{it}.

    Real on the unit circle and exactly orthogonal as a Laurent identity.
    n must be even for the twisting (the (a,b) plane sits inside the
    3x3 rotation block).
    """
    assert n % 2 == 0 and n != 0
    assert a >= 2 and b >= 2 and a != b
    e = np.exp(1j * phi) / 2.0
    M = np.zeros((5, 5), dtype=complex)
    M[a, a] = M[b, b] = e
    M[a, b] = 1j * e
    M[b, a] = -1j * e
    C0 = np.eye(5, dtype=complex)
    for j in (a, b):
        C0[j, j] = 0.0
    return LaurentLoop({0: C0, n: M, -n: np.conj(M)}, truncation=trunc)


def boost_constant(s):
    """Constant SO+(1,1) boost extended by the identity."""
    M = np.eye(5)
    M[0, 0] = M[1, 1] = np.cosh(s)
    M[0, 1] = M[1, 0] = np.sinh(s)
    return M


def rotation_constant(rng, scale=1.0):
    """Constant element of SO(3) in the lower block."""
    S = rng.standard_normal((3, 3)) * scale
    S = S - S.T
    M = np.eye(5, dtype=float)
    M[2:, 2:] = expm(S)
    return M


def random_real_loop(rng, trunc=12, max_rotations=2):
    """Exact twisted group loop fixed by the reality involution."""
    out = LaurentLoop.constant(
        boost_constant(rng.uniform(-0.8, 0.8)) @ rotation_constant(rng),
        truncation=trunc,
    )
    for _ in range(rng.integers(1, max_rotations + 1)):
        a, b = rng.choice([2, 3, 4], size=2, replace=False)
        n = int(rng.choice([2, 4]))
        out = multiply(out, rotation_loop(int(a), int(b), n, rng.uniform(0, 2 * np.pi), trunc))
    return out


def random_minus_loop(rng, trunc=12, max_deg=4):
    """Exact group loop with degrees in [-max_deg, 0] and value I at infinity."""
    out = LaurentLoop.identity(5, trunc)
    budget = max_deg
    if rng.random() < 0.5 and budget >= 4:
        out = multiply(out, three_step_factor(-2, rotation_block_nilpotent(rng), trunc))
        budget -= 4
    while budget >= 1:
        out = multiply(out, one_step_factor(-1, p_type_nilpotent(rng), trunc))
        budget -= 1
        if rng.random() < 0.35:
            break
    return out


def random_kc_constant(rng, scale=0.5):
    """Constant in the complexified stabilizer: block-diag, group-valued."""
    w = rng.standard_normal() * scale + 1j * rng.standard_normal() * scale
    M = np.zeros((5, 5), dtype=complex)
    M[0, 0] = M[1, 1] = np.cosh(w)
    M[0, 1] = M[1, 0] = np.sinh(w)
    S = (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))) * scale
    S = S - S.T
    M[2:, 2:] = expm(S)
    return M


def random_plus_loop(rng, trunc=12, max_deg=4, constant="kc"):
    """Exact group loop with degrees in [0, max_deg].

    constant "kc": generic invertible value at lambda=0;
    constant "unitB": value at 0 normalized in the real-positive slice
    (identity boost content, so it can serve as an Iwasawa plus factor).
    """
    if constant == "kc":
        out = LaurentLoop.constant(random_kc_constant(rng), truncation=trunc)
    else:
        out = LaurentLoop.constant(positive_slice_constant(rng), truncation=trunc)
    budget = max_deg
    if rng.random() < 0.45 and budget >= 4:
        out = multiply(out, three_step_factor(2, rotation_block_nilpotent(rng), trunc))
        budget -= 4
    while budget >= 1:
        out = multiply(out, one_step_factor(1, p_type_nilpotent(rng), trunc))
        budget -= 1
        if rng.random() < 0.35:
            break
    return out


_E21 = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, -1.0], [0.0, 0.0, 0.0]])
_NULL_T = np.array(
    [
        [1.0 / np.sqrt(2.0), 0.0, 1.0 / np.sqrt(2.0)],
        [1j / np.sqrt(2.0), 0.0, -1j / np.sqrt(2.0)],
        [0.0, 1.0, 0.0],
    ]
)


def positive_slice_constant(rng, theta_range=0.5, s_range=0.7, w_range=0.6):
    """Random constant in the solvable Iwasawa slice.

    Boost block [[cos t, i sin t], [i sin t, cos t]] with real t, and the
    rotation block conjugated from diag(e^s,1,e^-s) * unipotent(w) in the
    null basis. This is exactly the normal form the Iwasawa middle split
    produces, so factorizations can be compared factor by factor.
    """
    t = rng.uniform(-theta_range, theta_range)
    M = np.zeros((5, 5), dtype=complex)
    M[0, 0] = M[1, 1] = np.cos(t)
    M[0, 1] = M[1, 0] = 1j * np.sin(t)
    s = rng.uniform(-s_range, s_range)
    w = rng.standard_normal() * w_range + 1j * rng.standard_normal() * w_range
    U = (np.eye(3) + w * _E21 + w * w * (_E21 @ _E21) / 2.0) * 1.0
    D = np.diag([np.exp(s), 1.0, np.exp(-s)])
    M[2:, 2:] = _NULL_T @ (D @ U) @ np.linalg.inv(_NULL_T)
    return M


def p_algebra_matrix(rng, scale=0.4):
    """Generic odd-parity algebra matrix (off-diagonal blocks)."""
    B = scale * (rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3)))
    N = np.zeros((5, 5), dtype=complex)
    N[:2, 2:] = B
    N[2:, :2] = -B.T @ ETA1
    return N


def k_algebra_matrix(rng, scale=0.4):
    """Generic even-parity algebra matrix (block-diagonal)."""
    w = scale * (rng.standard_normal() + 1j * rng.standard_normal())
    S = scale * (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    S = S - S.T
    M = np.zeros((5, 5), dtype=complex)
    M[0, 1] = M[1, 0] = w
    M[2:, 2:] = S
    return M


def random_twisted_group_loop(rng, trunc=12, max_deg=4):
    """Generic exact twisted group loop mixing all factor families."""
    out = random_minus_loop(rng, trunc, max_deg=rng.integers(1, max_deg + 1))
    out = multiply(out, random_plus_loop(rng, trunc, max_deg=rng.integers(1, max_deg + 1)))
    return out
