"""Independent reference values used by the tests.

The dual oracles rest on convexity of the numerical range of a matrix: with
two Hermitian forms on the unit sphere, the Lagrangian dual of each problem
has no gap, so a one-dimensional concave maximisation gives the optimum.
"""

import numpy as np
from scipy.linalg import sqrtm
from scipy.optimize import brentq, minimize_scalar


def _lam_min(M):
    return np.linalg.eigvalsh(M)[0]


def _maximise_concave(f, scale):
    bound = 1e3 * scale
    res = minimize_scalar(lambda t: -f(t), bounds=(-bound, bound), method="bounded",
                          options={"xatol": 1e-13 * scale, "maxiter": 2000})
    return -res.fun, res.x, bound


def dual_phase_objective(G):
    """``min z*(G + G*)z`` over ``|z| = 1, |Gz| = 1``, or None when infeasible."""
    G = np.asarray(G, dtype=complex)
    _, s, Vh = np.linalg.svd(G)
    tol = 1e-9
    if not (s[-1] <= 1 + tol and s[0] >= 1 - tol):
        return None
    U = G + G.conj().T
    if s[-1] >= 1 - tol or s[0] <= 1 + tol:
        # V - I is semidefinite: the dual supremum is the limit mu -> inf, i.e. the
        # bottom of U on the singular subspace where sigma = 1.
        S = Vh.conj().T[:, np.abs(s - 1) <= tol]
        return _lam_min(S.conj().T @ U @ S)
    n = G.shape[0]
    V = G.conj().T @ G
    val, _, _ = _maximise_concave(lambda mu: _lam_min(U + mu * (V - np.eye(n))), 1 + s[0] ** 2)
    return val


def dual_phase_margin(G):
    obj = dual_phase_objective(G)
    return None if obj is None else float(np.arccos(np.clip(-obj / 2, -1, 1)))


def _gain_dual(G):
    """Dual value ``h`` (``obj = 1 / -h``) and the eigenvalues of ``Y`` in whitened coordinates."""
    G = np.asarray(G, dtype=complex)
    n = G.shape[0]
    W = G.conj().T @ G + np.eye(n)
    Wi = np.linalg.inv(sqrtm(W))
    Wi = 0.5 * (Wi + Wi.conj().T)
    T = Wi @ G @ Wi
    H = 0.5 * (T + T.conj().T)
    Y = -0.5j * (T - T.conj().T)
    ly, E = np.linalg.eigh(Y)
    tol = 1e-9 * (1 + np.abs(ly).max())
    if ly[0] >= -tol or ly[-1] <= tol:
        # Semidefinite Y: the dual limit is the bottom of H on the kernel of Y.
        S = E[:, np.abs(ly) <= tol]
        if S.shape[1] == 0:
            return np.inf, ly
        return _lam_min(S.conj().T @ H @ S), ly
    h, _, _ = _maximise_concave(lambda t: _lam_min(H + t * Y), 1.0)
    return h, ly


def dual_gain_margin(G):
    """``arccosh(obj / 2)`` for ``min z*(G*G + I)z`` with ``z*Gz = -1``, or None when infeasible."""
    h, _ = _gain_dual(G)
    # Values above about -1e-8 are the dual optimum 0 blurred by the scalar search.
    if h >= -1e-8:
        return None
    return float(np.arccosh(max(1 / (-h) / 2, 1.0)))


def gain_feasibility_ambiguous(G, band=1e-6):
    """True when feasibility hinges on tolerances: ``|h| < band`` or Y within ``band`` of semidefinite."""
    h, ly = _gain_dual(G)
    tol = 1e-9 * (1 + np.abs(ly).max())
    near_psd = tol < -ly[0] < band or tol < ly[-1] < band
    return bool(abs(h) < band or near_psd)


def siso_phase_margin(a, k):
    """Loop ``k / (s + a)``: unit-gain crossover and phase margin, valid for ``k > a > 0``."""
    wc = np.sqrt(k * k - a * a)
    return wc, np.pi - np.arctan2(wc, a)


def siso_gain_margin(a, k):
    """Loop ``-k / (s + a)`` with ``0 < k < a``: log gain margin at zero frequency."""
    return np.log(a / k)


def exact_scalar_delay_margin(A, B, K, gain, w_lo=1e-3, w_hi=1e2, points=20000):
    """Smallest delay destabilising the single-input loop ``gain K (sI - A)^{-1} B``."""

    def L(w):
        return (gain * K @ np.linalg.solve(1j * w * np.eye(A.shape[0]) - A, B))[0, 0]

    ws = np.logspace(np.log10(w_lo), np.log10(w_hi), points)
    m = np.array([abs(L(w)) - 1 for w in ws])
    best = np.inf
    for i in np.where(np.sign(m[:-1]) != np.sign(m[1:]))[0]:
        w = brentq(lambda x: abs(L(x)) - 1, ws[i], ws[i + 1], xtol=1e-14)
        th = np.angle(-1 / L(w))
        best = min(best, ((-th) % (2 * np.pi)) / w)
    return best


def random_unitary(rng, n):
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))
