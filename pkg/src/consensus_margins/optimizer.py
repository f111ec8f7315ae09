"""Fixed-frequency worst-case problems solved through their KKT conditions.

Phase problem, for a loop matrix ``G``::

    minimise z*(G + G*)z   subject to  z*z = 1,  z*G*Gz = 1

With ``v = -Gz`` the optimum gives the smallest phase ``arccos(Re v*z)`` of a
unitary map sending ``v`` to ``z``.

Gain problem::

    minimise z*(G*G + I)z  subject to  Re(z*Gz) = -1,  Im(z*Gz) = 0

i.e. ``v*z = 1`` with ``v = -Gz``.  The optimum ``o`` gives the smallest gain
``arccosh(o / 2)`` of a positive definite Hermitian map sending ``v`` to ``z``.

Complex vectors are embedded as ``y = (Re w, -Im w)`` and complex matrices as
``[[Re M, Im M], [-Im M, Re M]]``, so that ``y^T embed(M) y = Re(w* M w)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import NonlinearConstraint, brentq, minimize, minimize_scalar

from .errors import InfeasibleError, UnsupportedDimensionError

PHASE = "phase"
GAIN = "gain"


@dataclass(frozen=True)
class OptimizerConfig:
    starts: int = 32
    newton_tol: float = 1e-10
    max_iter: int = 100
    sufficiency_tol: float = 1e-8
    oracle_resolution: int = 400
    seed: int = 42


def embed(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    return np.block([[M.real, M.imag], [-M.imag, M.real]])


def to_real(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.concatenate([z.real, -z.imag], axis=-1)


def to_complex(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    n = y.shape[-1] // 2
    return y[..., :n] - 1j * y[..., n:]


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def canonicalize(z: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the largest-magnitude entry is real and positive."""
    z = np.asarray(z, dtype=complex)
    mag = np.abs(z)
    k = int(np.flatnonzero(mag >= mag.max() * (1 - 1e-12))[0])
    return z * (np.conj(z[k]) / mag[k])


@dataclass(frozen=True)
class EmbeddedProblem:
    """Real form of one fixed-frequency problem.

    ``constraints`` lists ``(matrix, rhs)`` pairs of ``y^T P y = rhs``.  For the
    phase kind these are ``(I, 1)`` and ``(Rmat, 1)``.  For the gain kind they
    are ``(Rmat, rhs)`` and ``(sym(Jmat embed(G)), 0)``.
    """

    kind: str
    Qmat: np.ndarray
    Rmat: np.ndarray
    Jmat: np.ndarray | None
    n: int
    G: np.ndarray
    rhs: float = -1.0
    constraints: tuple = field(default=())

    def sufficiency_matrix(self, mu1: float, mu2: float) -> np.ndarray:
        (P1, _), (P2, _) = self.constraints
        return self.Qmat + mu1 * P1 + mu2 * P2


def embed_phase(G) -> EmbeddedProblem:
    G = np.asarray(G, dtype=complex)
    n = G.shape[0]
    Q = _sym(embed(G + G.conj().T))
    R = _sym(embed(G.conj().T @ G))
    cons = ((np.eye(2 * n), 1.0), (R, 1.0))
    return EmbeddedProblem(PHASE, Q, R, None, n, G, 1.0, cons)


def embed_gain(G, rhs: float = -1.0) -> EmbeddedProblem:
    """Gain problem with ``Re(z*Gz) = rhs``.

    ``rhs = -1`` is the destabilising form, equivalent to ``v*z = 1``.  Passing
    ``+1`` gives the literal alternative sign, kept only for comparison.
    """
    G = np.asarray(G, dtype=complex)
    n = G.shape[0]
    Q = _sym(embed(G.conj().T @ G + np.eye(n)))
    R = _sym(embed(G))
    J = embed(1j * np.eye(n))
    cons = ((R, float(rhs)), (_sym(J @ embed(G)), 0.0))
    return EmbeddedProblem(GAIN, Q, R, J, n, G, float(rhs), cons)


@dataclass(frozen=True)
class KktSolution:
    kind: str
    y: np.ndarray
    mu1: float
    mu2: float
    objective: float
    feasibility_residuals: tuple
    stationarity_residual: float
    sufficiency_mineig: float
    converged: bool
    certified: bool
    G: np.ndarray
    exact: bool = False  # closed-form branch; multipliers may not exist there

    @property
    def z(self) -> np.ndarray:
        return to_complex(self.y)

    @property
    def v(self) -> np.ndarray:
        return -self.G @ self.z

    @property
    def value(self) -> float:
        """Phase angle (phase kind) or log-gain (gain kind) implied by the objective."""
        if self.kind == PHASE:
            return float(np.arccos(np.clip(-self.objective / 2, -1.0, 1.0)))
        return float(np.arccosh(max(self.objective / 2, 1.0)))


# Feasibility is measured against the constraint right-hand sides, which fix the
# scale of y.  A purely relative measure would accept runs drifting to |y| -> inf
# on problems that are only asymptotically feasible.  The small relative term
# absorbs rounding when |G| is large.
_FEAS_REL = 1e-7


# Floor on the multipliers in the stationarity scale.  With the 1e-8 acceptance
# threshold it accepts |stat| <= 1e-10 |P y|, matching the absolute stop in
# _newton, so problems whose objective nearly vanishes are not rejected.
_STAT_FLOOR = 1e-2
# The sufficiency test is anchored at the unit-rhs constraint scale, so a tiny
# objective does not turn round-off-sized negative curvature into a failure.
_CERT_FLOOR = 1.0


def _residuals(prob: EmbeddedProblem, y: np.ndarray, mu1: float, mu2: float):
    (P1, b1), (P2, b2) = prob.constraints
    P0y, P1y, P2y = prob.Qmat @ y, P1 @ y, P2 @ y
    stat = P0y + mu1 * P1y + mu2 * P2y
    n1, n2 = np.linalg.norm(P1y), np.linalg.norm(P2y)
    den = np.linalg.norm(P0y) + (abs(mu1) + _STAT_FLOOR) * n1 + (abs(mu2) + _STAT_FLOOR) * n2
    ny = np.linalg.norm(y)
    ref = max(abs(b1), abs(b2))
    feas = (
        abs(y @ P1y - b1) / (ref + _FEAS_REL * np.linalg.norm(P1y) * ny),
        abs(y @ P2y - b2) / (ref + _FEAS_REL * np.linalg.norm(P2y) * ny),
    )
    return float(np.linalg.norm(stat) / (den + 1e-300)), tuple(float(f) for f in feas)


def _norms(prob: EmbeddedProblem) -> tuple[float, float, float]:
    # Embedded matrices are symmetric, so the 2-norm is the largest |eigenvalue|.
    mats = (prob.Qmat, prob.constraints[0][0], prob.constraints[1][0])
    return tuple(float(np.max(np.abs(np.linalg.eigvalsh(M)))) for M in mats)


def _finish(prob, y, mu1, mu2, cfg, converged=None) -> KktSolution:
    z = canonicalize(to_complex(y))
    y = to_real(z)
    stat, feas = _residuals(prob, y, mu1, mu2)
    M = prob.sufficiency_matrix(mu1, mu2)
    n0, n1, n2 = _norms(prob)
    scale = n0 + (abs(mu1) + _CERT_FLOOR) * n1 + (abs(mu2) + _CERT_FLOOR) * n2
    mineig = float(np.linalg.eigvalsh(_sym(M))[0] / max(scale, 1e-300))
    if converged is None:
        converged = max(feas) <= 1e-9 and stat <= 1e-8
    certified = bool(converged and mineig >= -cfg.sufficiency_tol)
    return KktSolution(
        prob.kind, y, float(mu1), float(mu2), float(y @ prob.Qmat @ y), feas, stat,
        mineig, bool(converged), certified, prob.G,
    )


def _phase_starts(G: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Rescale unit vectors onto ``|z| = 1 = |Gz|`` along the singular split.

    The part of z in the right singular directions with ``sigma >= 1`` and the
    rest are normalised separately and recombined with the unique weight that
    puts ``|Gz|`` at one.
    """
    _, s, Vh = np.linalg.svd(G)
    C = Z @ Vh.T
    hi = s >= 1.0
    a, b = C * hi, C * ~hi
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    keep = (na[:, 0] > 1e-8) & (nb[:, 0] > 1e-8)
    a, b = a[keep] / na[keep], b[keep] / nb[keep]
    sa = np.sum(np.abs(a) ** 2 * s**2, axis=1)
    sb = np.sum(np.abs(b) ** 2 * s**2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (1.0 - sb) / (sa - sb)
    ok = (sa > sb) & (t >= 0) & (t <= 1)
    t = t[ok, None]
    return (np.sqrt(t) * a[ok] + np.sqrt(1 - t) * b[ok]) @ Vh.conj()


def _gain_starts(G: np.ndarray, Z: np.ndarray, rhs: float) -> np.ndarray:
    """Rescale vectors onto ``Im(z*Gz) = 0`` and then ``Re(z*Gz) = rhs`` where possible."""
    X = 0.5 * (G + G.conj().T)
    Y = -0.5j * (G - G.conj().T)
    lam, E = np.linalg.eigh(Y)
    neg = lam < 0
    C = Z @ E.conj()
    cm, cp = C * neg, C * ~neg
    nm = np.sum(lam * np.abs(cm) ** 2, axis=1)
    npos = np.sum(lam * np.abs(cp) ** 2, axis=1)
    keep = (nm < 0) & (npos > 0)
    W = (np.sqrt(npos[keep])[:, None] * cm[keep] + np.sqrt(-nm[keep])[:, None] * cp[keep]) @ E.T
    x = np.einsum("si,ij,sj->s", W.conj(), X, W).real
    # Starts with x near zero would be rescaled to enormous norms; they carry no information.
    floor = 1e-12 * np.sum(np.abs(W) ** 2, axis=1) * np.linalg.norm(X, 2)
    ok = x * rhs > floor * abs(rhs)
    return W[ok] * np.sqrt(rhs / x[ok])[:, None]


def _stack_residual(P, b, Y, mu):
    """KKT residual for stacked problems; ``P`` is ``(S, 3, d, d)``, ``Y`` is ``(..., S, d)``."""
    Py = np.einsum("skij,...sj->...ski", P, Y)
    stat = Py[..., 0, :] + mu[..., :1] * Py[..., 1, :] + mu[..., 1:] * Py[..., 2, :]
    feas = np.einsum("...ski,...si->...sk", Py[..., 1:, :], Y) - b
    return np.concatenate([stat, feas], axis=-1), Py


def _gauge_fixed_step(J: np.ndarray, Y: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Newton steps orthogonal to the global-phase direction ``E y``.

    The bordered system ``[[J, e], [e^T, 0]]`` is regular at nondegenerate KKT
    points, so an LU solve suffices; singular cases fall back to least squares.
    """
    S, k, _ = J.shape
    d = Y.shape[1]
    n = d // 2
    e = np.zeros((S, k))
    e[:, :n] = Y[:, n:]
    e[:, n:d] = -Y[:, :n]
    Jb = np.zeros((S, k + 1, k + 1))
    Jb[:, :k, :k] = J
    Jb[:, :k, k] = e
    Jb[:, k, :k] = e
    rhs = np.zeros((S, k + 1))
    rhs[:, :k] = -F
    cond_ok = np.isfinite(Jb).all(axis=(1, 2))
    out = np.zeros((S, k))
    try:
        sol = np.linalg.solve(Jb[cond_ok], rhs[cond_ok][..., None])[..., 0]
        out[cond_ok] = sol[:, :k]
        bad = ~np.isfinite(out).all(axis=1)
    except np.linalg.LinAlgError:
        bad = np.ones(S, bool)
    if bad.any():
        out[bad] = -np.einsum("sij,sj->si", np.linalg.pinv(J[bad], rcond=1e-13), F[bad])
    return out


def _newton(P, b, Y0, cfg: OptimizerConfig, owners=None, tol_scale=None):
    """Damped Newton on the KKT systems of a stack of (problem, start) pairs.

    The Jacobian is singular along the global-phase direction, so steps are
    solved with a gauge-fixing border.  A pair leaves the active set once it
    converges or its line search stalls.  Because a point passing the
    sufficiency test is a global minimiser, every start of the same owner stops
    as soon as one such point is found.
    """
    S, d = Y0.shape
    owners = np.zeros(S, int) if owners is None else np.asarray(owners)
    Y = Y0.copy()
    alphas = 0.5 ** np.arange(12)
    Py = np.einsum("skij,sj->ski", P, Y)
    A = Py[:, 1:].transpose(0, 2, 1)
    mu = -np.einsum("sij,sj->si", np.linalg.pinv(A), Py[:, 0])
    F, Py = _stack_residual(P, b, Y, mu)
    merit = np.sum(F**2, axis=1)
    active = np.ones(S, bool)
    for _ in range(cfg.max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Pa, ba, Ya, ma, Fa, Pya = P[idx], b[idx], Y[idx], mu[idx], F[idx], Py[idx]
        J = np.zeros((idx.size, d + 2, d + 2))
        J[:, :d, :d] = Pa[:, 0] + ma[:, 0, None, None] * Pa[:, 1] + ma[:, 1, None, None] * Pa[:, 2]
        J[:, :d, d] = Pya[:, 1]
        J[:, :d, d + 1] = Pya[:, 2]
        J[:, d, :d] = 2 * Pya[:, 1]
        J[:, d + 1, :d] = 2 * Pya[:, 2]
        step = _gauge_fixed_step(J, Ya, Fa)
        Yt = Ya[None] + alphas[:, None, None] * step[None, :, :d]
        mt = ma[None] + alphas[:, None, None] * step[None, :, d:]
        # Long trial steps may overflow; their merit is inf and they are rejected.
        with np.errstate(over="ignore", invalid="ignore"):
            Ft, Pyt = _stack_residual(Pa, ba, Yt, mt)
            mer = np.sum(Ft**2, axis=-1)
        mer = np.where(np.isnan(mer), np.inf, mer)
        ok = mer < (1 - 1e-4 * alphas[:, None]) * merit[idx][None]
        has = ok.any(axis=0)
        first = np.argmax(ok, axis=0)[has]
        cols = np.flatnonzero(has)
        upd = idx[has]
        Y[upd] = Yt[first, cols]
        mu[upd] = mt[first, cols]
        F[upd] = Ft[first, cols]
        Py[upd] = Pyt[first, cols]
        merit[upd] = mer[first, cols]
        active[idx[~has]] = False
        scale = np.sum(np.abs(Py[idx]), axis=(1, 2)) + 1.0
        tight = np.sqrt(merit[idx]) <= cfg.newton_tol * scale
        active[idx[tight]] = False
        # Check the global certificate on converged points.
        stat, feas = _stack_quality(P[idx], b[idx], Y[idx], mu[idx])
        conv = idx[(feas.max(axis=1) <= 1e-9) & (stat <= 1e-8)]
        if conv.size and tol_scale is not None:
            M = P[conv, 0] + mu[conv, 0, None, None] * P[conv, 1] + mu[conv, 1, None, None] * P[conv, 2]
            sc = (tol_scale[conv, 0] + (np.abs(mu[conv, 0]) + _CERT_FLOOR) * tol_scale[conv, 1]
                  + (np.abs(mu[conv, 1]) + _CERT_FLOOR) * tol_scale[conv, 2])
            mineig = np.linalg.eigvalsh(M)[:, 0] / sc
            done = np.unique(owners[conv[mineig >= -cfg.sufficiency_tol]])
            if done.size:
                active &= ~np.isin(owners, done)
    return Y, mu


def _stack_quality(P, b, Y, mu):
    """Scale-free stationarity and rhs-scaled feasibility residuals for stacked solutions."""
    Py = np.einsum("skij,sj->ski", P, Y)
    stat = Py[:, 0] + mu[:, :1] * Py[:, 1] + mu[:, 1:] * Py[:, 2]
    nP = np.linalg.norm(Py, axis=2)
    den = nP[:, 0] + (np.abs(mu[:, 0]) + _STAT_FLOOR) * nP[:, 1] + (np.abs(mu[:, 1]) + _STAT_FLOOR) * nP[:, 2] + 1e-300
    ny = np.linalg.norm(Y, axis=1)
    ref = np.abs(b).max(axis=1, keepdims=True)
    feas = np.abs(np.einsum("ski,si->sk", Py[:, 1:], Y) - b) / (ref + _FEAS_REL * nP[:, 1:] * ny[:, None])
    return np.linalg.norm(stat, axis=1) / den, feas


def _pick(solutions: list[KktSolution]) -> KktSolution:
    def key(s):
        z = s.z
        return (round(s.objective, 10), tuple(np.round(np.concatenate([z.real, z.imag]), 12)))

    return min(solutions, key=key)


def _exact_solution(prob: EmbeddedProblem, z: np.ndarray, objective: float, cfg) -> KktSolution:
    y = to_real(canonicalize(z))
    (P1, _), (P2, _) = prob.constraints
    A = np.stack([P1 @ y, P2 @ y], axis=1)
    mu = -np.linalg.lstsq(A, prob.Qmat @ y, rcond=None)[0]
    sol = _finish(prob, y, mu[0], mu[1], cfg)
    # Closed-form branches are exact, so they are certified by construction.  The
    # constraint gradients can be dependent there, so the fitted multipliers and
    # residuals are diagnostics only.
    return KktSolution(
        sol.kind, sol.y, sol.mu1, sol.mu2, float(objective), sol.feasibility_residuals,
        sol.stationarity_residual, sol.sufficiency_mineig, True, True, sol.G, True,
    )


def _phase_degenerate(prob: EmbeddedProblem, cfg: OptimizerConfig, tol: float = 1e-8):
    """Exact solution when the feasible set is a singular subspace with sigma = 1."""
    G = prob.G
    _, s, Vh = np.linalg.svd(G)
    if s[-1] < 1 - tol and s[0] > 1 + tol:
        return None
    if s[-1] > 1 + 1e-6 or s[0] < 1 - 1e-6:
        raise InfeasibleError("no unit vector z with |Gz| = 1")
    V1 = Vh.conj().T[:, np.abs(s - 1) <= 1e-6]
    H = V1.conj().T @ (G + G.conj().T) @ V1
    lam, W = np.linalg.eigh(0.5 * (H + H.conj().T))
    return _exact_solution(prob, V1 @ W[:, 0], lam[0], cfg)


def _gain_semidefinite(prob: EmbeddedProblem, cfg: OptimizerConfig):
    """Exact solution when ``Y`` is semidefinite, so feasible z lie in its kernel."""
    G = prob.G
    n = prob.n
    X = 0.5 * (G + G.conj().T)
    Y = -0.5j * (G - G.conj().T)
    lam, E = np.linalg.eigh(0.5 * (Y + Y.conj().T))
    tol = 1e-8 * (1.0 + np.linalg.norm(G, 2))
    if lam[0] < -tol and lam[-1] > tol:
        return None
    N = E[:, np.abs(lam) <= tol]
    if N.shape[1] == 0:
        raise InfeasibleError("Im(z*Gz) = 0 forces z = 0")
    W = N.conj().T @ (G.conj().T @ G + np.eye(n)) @ N
    Xn = prob.rhs * (N.conj().T @ X @ N)
    # Largest x*Xn x over x*W x = 1 through the Cholesky-whitened pencil.
    Li = np.linalg.inv(np.linalg.cholesky(0.5 * (W + W.conj().T)))
    T = Li @ Xn @ Li.conj().T
    mu, Wv = np.linalg.eigh(0.5 * (T + T.conj().T))
    if mu[-1] <= tol:
        raise InfeasibleError("Re(z*Gz) cannot reach the required sign")
    z = N @ (Li.conj().T @ Wv[:, -1]) / np.sqrt(mu[-1])
    return _exact_solution(prob, z, 1.0 / mu[-1], cfg)


_PENCIL_T = np.concatenate([[0.0], np.logspace(-2, 2, 9), -np.logspace(-2, 2, 9)])


def _pencil_starts(M0: np.ndarray, M1: np.ndarray) -> np.ndarray:
    """Bottom eigenvectors of ``M0 + t M1`` over a spread of ``t``.

    Near the maximiser of the bottom eigenvalue they lie on ``z* M1 z = 0``,
    which places starts inside thin feasible sets that random draws miss.
    """
    scale = np.linalg.norm(M0) / max(np.linalg.norm(M1), 1e-300)
    _, E = np.linalg.eigh(M0[None] + (scale * _PENCIL_T)[:, None, None] * M1[None])
    return E[:, :, 0]


def _dual_gain_starts(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Y-balanced vectors in the bottom eigenspace of ``X + t Y`` at the maximising t.

    ``max_t lambda_min(X + t Y) < 0`` exactly when some z has ``z*Yz = 0`` and
    ``z*Xz < 0``, and at the maximiser such a z lies in the bottom two eigenvectors.
    """
    scale = np.linalg.norm(X) / max(np.linalg.norm(Y), 1e-300) + 1.0
    res = minimize_scalar(lambda t: -np.linalg.eigvalsh(X + t * Y)[0], bounds=(-1e3 * scale, 1e3 * scale),
                          method="bounded", options={"xatol": 1e-12 * scale})
    _, E = np.linalg.eigh(X + res.x * Y)
    U = E[:, : min(2, X.shape[0])]
    ly, V = np.linalg.eigh(U.conj().T @ Y @ U)
    out = [U[:, 0]]
    if ly.size == 2 and ly[0] < 0 < ly[1]:
        for ph in (1, 1j, -1, -1j):
            out.append(U @ (np.sqrt(ly[1]) * V[:, 0] + ph * np.sqrt(-ly[0]) * V[:, 1]))
    return np.array(out)


def _starts(problem: EmbeddedProblem, Z: np.ndarray) -> np.ndarray:
    G = problem.G
    n = problem.n
    Gh = G.conj().T
    if problem.kind == PHASE:
        # Deterministic extras: mixtures of the extreme right singular vectors.
        _, _, Vh = np.linalg.svd(G)
        vs = Vh[0].conj(), Vh[-1].conj()
        pencil = _pencil_starts(G + Gh, Gh @ G - np.eye(n))
        Z = np.vstack([Z, vs[0] + vs[1], vs[0] + 1j * vs[1], pencil])
        return _phase_starts(G, Z)
    X, Y = 0.5 * (G + Gh), -0.5j * (G - Gh)
    _, Ex = np.linalg.eigh(X)
    Z = np.vstack([Z, Ex.T.conj()[: min(n, 2)], _pencil_starts(X, Y), _dual_gain_starts(X, Y)])
    return _gain_starts(G, Z, problem.rhs)


def solve_kkt_many(problems, cfg: OptimizerConfig = OptimizerConfig(), initial=None) -> list:
    """Solve several same-size problems in one stacked Newton run.

    Every problem receives the same ``cfg.starts`` random draws from
    ``cfg.seed``, so results do not depend on batching.  ``initial`` is an
    optional list (one entry per problem) of extra embedded starting vectors.
    Entries of the result are ``KktSolution`` objects or ``InfeasibleError``
    instances.
    """
    problems = list(problems)
    out: list = [None] * len(problems)
    if not problems:
        return out
    n = problems[0].n
    rng = np.random.default_rng(cfg.seed)
    Z = rng.standard_normal((cfg.starts, n)) + 1j * rng.standard_normal((cfg.starts, n))
    owners, Ys, Ps, bs, norms = [], [], [], [], []
    for i, prob in enumerate(problems):
        try:
            exact = (_phase_degenerate if prob.kind == PHASE else _gain_semidefinite)(prob, cfg)
        except InfeasibleError as exc:
            out[i] = exc
            continue
        if exact is not None:
            out[i] = exact
            continue
        Y0 = list(to_real(_starts(prob, Z)))
        if initial is not None and initial[i] is not None:
            Y0 += [np.asarray(y, dtype=float) for y in np.atleast_2d(initial[i])]
        if not Y0:
            out[i] = InfeasibleError("no start could be placed on the constraint set")
            continue
        (P1, b1), (P2, b2) = prob.constraints
        Pi = np.stack([prob.Qmat, P1, P2])
        owners += [i] * len(Y0)
        Ys += Y0
        Ps += [Pi] * len(Y0)
        bs += [(b1, b2)] * len(Y0)
        norms += [_norms(prob)] * len(Y0)
    if Ys:
        P = np.array(Ps)
        b = np.array(bs, dtype=float)
        Y, mu = _newton(P, b, np.array(Ys), cfg, owners, np.array(norms))
        stat, feas = _stack_quality(P, b, Y, mu)
        good = (feas.max(axis=1) <= 1e-9) & (stat <= 1e-8)
        owners = np.array(owners)
        Y0s = np.array(Ys)
        obj0 = np.einsum("si,sij,sj->s", Y0s, P[:, 0], Y0s)
        for i in np.unique(owners):
            rows = np.flatnonzero(owners == i)
            sel = rows[good[rows]]
            sol = _select(problems[i], Y[sel], mu[sel], cfg) if sel.size else None
            if sol is not None and (sol.certified or sol.exact):
                out[i] = sol
                continue
            # Stalled or saddle-bound starts: retry the most promising ones with a trust-region SQP.
            starts = list(Y0s[rows[np.argsort(obj0[rows], kind="stable")[:_POLISH_STARTS]]])
            if sol is not None:
                starts += _escape_starts(problems[i], sol)
            Yp, mup = _polish(problems[i], np.array(starts), cfg)
            Yall, muall = np.concatenate([Y[sel], Yp]), np.concatenate([mu[sel], mup])
            if len(Yall):
                out[i] = _select(problems[i], Yall, muall, cfg)
            else:
                out[i] = InfeasibleError("no start converged to a feasible stationary point")
    return out


def _escape_starts(prob: EmbeddedProblem, sol: KktSolution) -> list:
    """Points displaced from an uncertified KKT point along its most negative curvature."""
    _, V = np.linalg.eigh(_sym(prob.sufficiency_matrix(sol.mu1, sol.mu2)))
    r = np.linalg.norm(sol.y)
    return [sol.y + sgn * frac * r * V[:, 0] for sgn in (1, -1) for frac in (0.05, 0.3)]


_POLISH_STARTS = 3


def _polish(prob: EmbeddedProblem, Y0: np.ndarray, cfg) -> tuple[np.ndarray, np.ndarray]:
    """Trust-region SQP from stalled starts, then Newton to tighten the residuals.

    Newton with a residual merit stalls when a nearly flat family of minimisers
    lies along a curved constraint set: the step along the family is long and
    leaves the constraints at second order.  A trust-region SQP follows the curve.
    """
    Q = prob.Qmat
    (P1, b1), (P2, b2) = prob.constraints
    con = NonlinearConstraint(
        lambda y: np.array([y @ P1 @ y, y @ P2 @ y]), [b1, b2], [b1, b2],
        jac=lambda y: np.array([2 * P1 @ y, 2 * P2 @ y]),
        hess=lambda y, v: 2 * (v[0] * P1 + v[1] * P2),
    )
    starts = []
    for y0 in Y0:
        res = minimize(lambda y: y @ Q @ y, y0, jac=lambda y: 2 * Q @ y, hess=lambda y: 2 * Q,
                       method="trust-constr", constraints=[con],
                       options={"gtol": 1e-12, "xtol": 1e-14, "maxiter": 1000})
        if np.all(np.isfinite(res.x)):
            starts.append(res.x)
    if not starts:
        return np.zeros((0, Q.shape[0])), np.zeros((0, 2))
    S = len(starts)
    P = np.array([np.stack([Q, P1, P2])] * S)
    b = np.array([(b1, b2)] * S, dtype=float)
    Y, mu = _newton(P, b, np.array(starts), cfg)
    stat, feas = _stack_quality(P, b, Y, mu)
    good = (feas.max(axis=1) <= 1e-9) & (stat <= 1e-8)
    return Y[good], mu[good]


def _select(problem: EmbeddedProblem, Y: np.ndarray, mu: np.ndarray, cfg) -> KktSolution:
    obj = np.einsum("si,ij,sj->s", Y, problem.Qmat, Y)
    order = np.argsort(obj, kind="stable")
    good, certified, seen = [], [], set()
    for k in order:
        y = to_real(canonicalize(to_complex(Y[k])))
        key = tuple(np.round(y, 7))
        if key in seen:
            continue
        seen.add(key)
        if certified and obj[k] > certified[0].objective + 1e-10 * (1 + abs(obj[k])):
            break
        s = _finish(problem, Y[k], mu[k, 0], mu[k, 1], cfg)
        good.append(s)
        if s.certified:
            certified.append(s)
    return _pick(certified or good)


def solve_kkt(problem: EmbeddedProblem, cfg: OptimizerConfig = OptimizerConfig(), initial=None) -> KktSolution:
    """Best certified KKT point over ``cfg.starts`` random starts plus ``initial`` guesses.

    Raises ``InfeasibleError`` when no start reaches a feasible stationary point.
    When points converge but none passes the sufficiency test, the best one is
    returned with ``certified=False``.
    """
    res = solve_kkt_many([problem], cfg, None if initial is None else [initial])[0]
    if isinstance(res, Exception):
        raise res
    return res


@dataclass(frozen=True)
class OracleResult:
    feasible: bool
    objective: float
    z: np.ndarray | None


def _bloch(theta, psi):
    return np.stack([np.cos(theta / 2) + 0j * psi, np.sin(theta / 2) * np.exp(1j * psi)], axis=-1)


def brute_force_oracle(G, kind: str, resolution: int = 400) -> OracleResult:
    """Exhaustive search of the feasible set for ``n <= 2``.

    For ``n = 2`` unit vectors modulo global phase are points of a sphere with
    angles ``(theta, psi)``.  The single remaining constraint cuts out curves,
    which are traced by root-bracketing along each angle on a
    ``resolution``-point grid of the other.  The gain problem is homogeneous, so
    its scale is eliminated in closed form.  The best traced point is then
    polished by sliding along its curve, so the result stays feasible and bounds
    the minimum from above.
    """
    G = np.asarray(G, dtype=complex)
    n = G.shape[0]
    if n > 2:
        raise UnsupportedDimensionError(f"oracle supports n <= 2, got {n}")
    U = G + G.conj().T
    V = G.conj().T @ G
    W = V + np.eye(n)
    if n == 1:
        g = G[0, 0]
        if kind == PHASE:
            if abs(abs(g) - 1) > 1e-6:
                return OracleResult(False, np.inf, None)
            return OracleResult(True, float(2 * g.real), np.ones(1, complex))
        if abs(g.imag) > 1e-6 * (1 + abs(g)) or g.real >= 0:
            return OracleResult(False, np.inf, None)
        return OracleResult(True, float((abs(g) ** 2 + 1) / abs(g)), np.array([1 / np.sqrt(abs(g))], complex))

    def quad(M, z):
        return np.einsum("...i,ij,...j->...", z.conj(), M, z)

    if kind == PHASE:
        def h(z):
            return quad(V, z).real - 1.0

        def obj(z):
            return quad(U, z).real

        def ok(z):
            return True
    else:
        def h(z):
            return quad(G, z).imag

        def obj(z):
            return quad(W, z).real / -quad(G, z).real

        def ok(z):
            return quad(G, z).real < -1e-12

    best = (np.inf, None, None)
    theta = np.linspace(0, np.pi, resolution)
    # Offset by half a step so roots on the seam psi = +-pi fall inside a cell.
    dpsi = 2 * np.pi / resolution
    psi = -np.pi + dpsi * (np.arange(resolution) + 0.5)

    def curve(along_theta, f):
        if along_theta:
            return lambda t: _bloch(t, f)
        return lambda t: _bloch(f, t)

    def scan(fixed, varying, along_theta):
        nonlocal best
        for f in fixed:
            line = curve(along_theta, f)
            vals = h(line(varying))
            roots = [(r, None) for r in varying[vals == 0]]
            idx = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
            for i in idx:
                r = brentq(lambda t: h(line(t)), varying[i], varying[i + 1], xtol=1e-14)
                roots.append((r, (varying[i], varying[i + 1])))
            for r, cell in roots:
                z = line(r)
                if ok(z):
                    val = obj(z)
                    if val < best[0]:
                        best = (float(val), z, (along_theta, f, cell, varying[1] - varying[0]))

    def polish():
        # Slide the fixed angle and re-root inside a widened cell to follow the curve.
        nonlocal best
        if best[2] is None:
            return
        along_theta, f0, cell, step = best[2]
        if cell is None:
            return

        def on_curve(f):
            line = curve(along_theta, f)
            lo, hi = cell[0] - step, cell[1] + step
            try:
                r = brentq(lambda t: h(line(t)), lo, hi, xtol=1e-15)
            except ValueError:
                return None
            z = line(r)
            return z if ok(z) else None

        def f_obj(f):
            z = on_curve(f)
            return np.inf if z is None else obj(z)

        res = minimize_scalar(f_obj, bounds=(f0 - step, f0 + step), method="bounded", options={"xatol": 1e-13})
        z = on_curve(res.x)
        if z is not None and obj(z) < best[0]:
            best = (float(obj(z)), z, best[2])

    scan(psi, theta, along_theta=True)
    scan(theta, np.append(psi, psi[0] + 2 * np.pi), along_theta=False)
    # The poles are single points that no bracket can enclose.
    for z in (_bloch(0.0, 0.0), _bloch(np.pi, 0.0)):
        if abs(h(z)) <= 1e-12 * (1 + np.linalg.norm(G) ** 2) and ok(z) and obj(z) < best[0]:
            best = (float(obj(z)), z, None)
    if best[1] is not None:
        polish()
    if best[1] is None:
        return OracleResult(False, np.inf, None)
    z = best[1]
    if kind == GAIN:
        z = z / np.sqrt(-quad(G, z).real)
    return OracleResult(True, best[0], canonicalize(z))
