"""Independent checks of margin claims: spectra, certificates and time-domain runs.

The networked system with a uniform input delay is

    x'(t) = (I_N kron A) x(t) - c (L kron BK) x(t - tau),

integrated with the classical four-stage scheme on a uniform step.  Delayed
states are read from the stored trajectory by linear interpolation, with the
history held at ``x0`` for ``t <= 0``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import HorizonTooShortError, StepTooLargeError
from .freqresp import loop_matrix
from .model import HURWITZ_MARGIN, AgentModel, NetworkGraph, TransformedLoop
from .perturb import Perturbation, pd_hermitian_map, plane_rotation_unitary

CONVERGED = "Converged"
DIVERGED = "Diverged"
INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class SimConfig:
    horizon: float = 60.0
    dt: float = 1e-3
    consensus_tol: float = 1e-6
    divergence_factor: float = 1e3
    tail_fraction: float = 0.2
    tail_windows: int = 10


@dataclass(frozen=True)
class SimResult:
    times: np.ndarray
    states: np.ndarray  # (steps, N, n), complex for perturbed runs
    disagreement: np.ndarray
    verdict: str
    final_consensus_value: np.ndarray | None

    def write_csv(self, path, stride: int = 1) -> None:
        """Rows of ``time, agent, x1, ...``; complex states get ``re``/``im`` columns."""
        cplx = np.iscomplexobj(self.states)
        n = self.states.shape[2]
        if cplx:
            cols = [f"x{j + 1}_{part}" for j in range(n) for part in ("re", "im")]
        else:
            cols = [f"x{j + 1}" for j in range(n)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "agent"] + cols)
            for k in range(0, len(self.times), stride):
                for i, x in enumerate(self.states[k]):
                    vals = [v for c in x for v in (c.real, c.imag)] if cplx else list(x)
                    w.writerow([f"{self.times[k]:.10g}", i + 1] + [f"{v:.12g}" for v in vals])


def perturbed_loop_stable(loop: TransformedLoop, delta) -> tuple[bool, float]:
    """Spectral stability of ``A - c lambda_p B K Delta``."""
    a = loop.spectral_abscissa(delta)
    return bool(a < -HURWITZ_MARGIN), float(a)


def destabilization_residual(loop: TransformedLoop, omega: float, delta) -> float:
    """``sigma_min(I + G_p(j omega) Delta)``; zero exactly when Delta destabilises at omega."""
    D = np.asarray(getattr(delta, "matrix", delta), dtype=complex)
    G = loop_matrix(loop, omega)
    return float(np.linalg.svd(np.eye(G.shape[0]) + G @ D, compute_uv=False)[-1])


def phase_certificate(ext) -> Perturbation:
    """Minimal-phase unitary sending ``v`` to ``z`` at a phase extremum."""
    return plane_rotation_unitary(ext.v / np.linalg.norm(ext.v), ext.z / np.linalg.norm(ext.z))


def gain_certificate(ext) -> Perturbation:
    """Minimal-gain positive definite map sending ``v`` to ``z`` at a gain extremum."""
    v, z = ext.v, ext.z
    s = np.vdot(v, z)
    # v*z is 1 up to solver round-off; strip the residual phase before mapping.
    z = z * (abs(s) / s)
    return pd_hermitian_map(v, z, balanced=True)


def _disagreement(states: np.ndarray) -> np.ndarray:
    mean = states.mean(axis=1, keepdims=True)
    return np.max(np.linalg.norm(states - mean, axis=2), axis=1)


def _verdict(times, states, cfg: SimConfig, x0) -> tuple[np.ndarray, str, np.ndarray | None]:
    d = _disagreement(states)
    d0 = d[0]
    tol = cfg.consensus_tol * (1 + np.linalg.norm(x0))
    if not np.all(np.isfinite(d)) or (d0 > 0 and d.max() > cfg.divergence_factor * d0):
        return d, DIVERGED, None
    tail = d[int(len(d) * (1 - cfg.tail_fraction)):]
    # Oscillatory decay is not pointwise monotone, so compare window maxima.
    peaks = [w.max() for w in np.array_split(tail, cfg.tail_windows) if len(w)]
    decreasing = all(b <= a * (1 + 1e-12) + 1e-300 for a, b in zip(peaks, peaks[1:]))
    if d[-1] <= tol and (decreasing or tail.max() <= tol):
        return d, CONVERGED, states[-1].mean(axis=0)
    return d, INCONCLUSIVE, None


def _rk4_coefficients(M0: np.ndarray, M1: np.ndarray, h: float):
    """Matrices of one RK4 step for ``x' = M0 x + M1 d(t)`` as a linear map.

    Returns ``(Cx, C0, Ch, C1)`` with ``x_next = Cx x + C0 d(t) + Ch d(t + h/2) + C1 d(t + h)``.
    """
    m = M0.shape[0]
    I = np.eye(m, dtype=M0.dtype)
    Z = np.zeros_like(I)

    def step(x, d0, dh, d1):
        k1 = M0 @ x + M1 @ d0
        k2 = M0 @ (x + 0.5 * h * k1) + M1 @ dh
        k3 = M0 @ (x + 0.5 * h * k2) + M1 @ dh
        k4 = M0 @ (x + h * k3) + M1 @ d1
        return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    return step(I, Z, Z, Z), step(Z, I, Z, Z), step(Z, Z, I, Z), step(Z, Z, Z, I)


def _check_steps(tau, horizon, dt):
    if dt <= 0:
        raise StepTooLargeError("dt must be positive")
    if tau > 0 and dt > tau / 10 * (1 + 1e-12):
        raise StepTooLargeError(f"dt={dt:g} exceeds tau/10={tau / 10:g}")
    if horizon < 50 * dt:
        raise HorizonTooShortError(f"horizon {horizon:g} is shorter than 50 steps")


def _initial(graph: NetworkGraph, model: AgentModel, x0) -> np.ndarray:
    x0 = np.asarray(x0)
    if x0.shape != (graph.N, model.n):
        raise ValueError(f"x0 must have shape {(graph.N, model.n)}, got {x0.shape}")
    return x0


def simulate_delayed_consensus(
    model: AgentModel,
    graph: NetworkGraph,
    tau: float,
    x0,
    horizon: float | None = None,
    dt: float | None = None,
    cfg: SimConfig = SimConfig(),
) -> SimResult:
    horizon = cfg.horizon if horizon is None else float(horizon)
    dt = cfg.dt if dt is None else float(dt)
    tau = float(tau)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    _check_steps(tau, horizon, dt)
    x0 = _initial(graph, model, x0).astype(float)
    N, n = x0.shape
    M0 = np.kron(np.eye(N), model.A)
    M1 = -model.c * np.kron(graph.laplacian, model.BK)
    steps = int(round(horizon / dt))
    X = np.empty((steps + 1, N * n))
    X[0] = x0.ravel()
    limit = cfg.divergence_factor * max(_disagreement(x0[None])[0], 1e-300)
    if tau == 0:
        # Without delay the input is the state itself, so integrate M0 + M1 directly.
        Cx = _rk4_coefficients(M0 + M1, np.zeros_like(M1), dt)[0]
        for k in range(steps):
            X[k + 1] = Cx @ X[k]
    else:
        Cx, C0, Ch, C1 = _rk4_coefficients(M0, M1, dt)
        # Delayed sample positions relative to step k, as (index offset, weight) pairs.
        taps = []
        for C, shift in ((C0, 0.0), (Ch, 0.5), (C1, 1.0)):
            q = tau / dt - shift
            i0 = int(np.floor(q + 1e-12))
            f = q - i0
            if f < 1e-12:
                f = 0.0
            taps.append((C, i0, f))
        for k in range(steps):
            acc = Cx @ X[k]
            for C, i0, f in taps:
                j = k - i0
                a = X[j] if j >= 0 else X[0]
                if f:
                    b = X[j - 1] if j - 1 >= 0 else X[0]
                    a = (1 - f) * a + f * b
                acc += C @ a
            X[k + 1] = acc
            if k % 2000 == 0 and _disagreement(X[k + 1].reshape(1, N, n))[0] > limit:
                X = X[: k + 2]
                break
    states = X.reshape(-1, N, n)
    times = dt * np.arange(len(states))
    d, verdict, final = _verdict(times, states, cfg, x0)
    return SimResult(times, states, d, verdict, final)


def simulate_perturbed_consensus(
    model: AgentModel,
    graph: NetworkGraph,
    delta,
    x0,
    horizon: float | None = None,
    dt: float | None = None,
    cfg: SimConfig = SimConfig(),
) -> SimResult:
    """Delay-free network with the complex perturbation inserted after K."""
    horizon = cfg.horizon if horizon is None else float(horizon)
    dt = cfg.dt if dt is None else float(dt)
    _check_steps(0.0, horizon, dt)
    D = np.asarray(getattr(delta, "matrix", delta), dtype=complex)
    x0 = _initial(graph, model, x0).astype(complex)
    N, n = x0.shape
    M = np.kron(np.eye(N), model.A) - model.c * np.kron(graph.laplacian, model.BK @ D)
    rho = np.max(np.abs(np.linalg.eigvals(M)))
    if rho * dt > 2.5:
        raise StepTooLargeError(f"dt={dt:g} is outside the RK4 stability region (|lambda| dt = {rho * dt:.3g})")
    Cx = _rk4_coefficients(M, np.zeros_like(M), dt)[0]
    steps = int(round(horizon / dt))
    X = np.empty((steps + 1, N * n), dtype=complex)
    X[0] = x0.ravel()
    for k in range(steps):
        X[k + 1] = Cx @ X[k]
    states = X.reshape(-1, N, n)
    times = dt * np.arange(len(states))
    d, verdict, final = _verdict(times, states, cfg, x0)
    return SimResult(times, states, d, verdict, final)


def empirical_critical_delay(
    model: AgentModel,
    graph: NetworkGraph,
    x0,
    lo: float,
    hi: float,
    horizon: float,
    rel_tol: float = 1e-3,
    cfg: SimConfig = SimConfig(),
    steps_per_delay: int = 10,
) -> float:
    """Bisect the delay between a converging ``lo`` and a diverging ``hi``.

    Near the critical delay both verdicts take arbitrarily long to appear, so
    each run is classified by the growth rate of its disagreement envelope:
    the slope of log window-maxima over the second half of the horizon.  Each
    run uses ``dt = tau / steps_per_delay``; history interpolation then biases
    the estimate by roughly ``(omega dt)^2 / 8`` at crossover frequency omega.
    """

    def rate(tau):
        res = simulate_delayed_consensus(model, graph, tau, x0, horizon, tau / steps_per_delay, cfg)
        if res.verdict == DIVERGED:
            return 1.0
        d = res.disagreement
        half = d[len(d) // 2:]
        t = res.times[len(d) // 2:]
        chunks = np.array_split(np.arange(len(half)), 20)
        peaks = np.array([half[c].max() for c in chunks])
        tc = np.array([t[c[np.argmax(half[c])]] for c in chunks])
        return float(np.polyfit(tc, np.log(peaks + 1e-300), 1)[0])

    if rate(lo) >= 0 or rate(hi) <= 0:
        raise ValueError("bracket does not straddle the critical delay")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if rate(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
