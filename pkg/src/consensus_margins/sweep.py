"""Critical frequency sets of a loop.

The phase set collects frequencies where the singular values of ``G_p(j omega)``
straddle one (``sigma_min <= 1 <= sigma_max``); only there can a unitary
perturbation place an eigenvalue of ``G_p Delta`` at -1.  The gain candidates
are frequencies where ``z*Gz`` can be real and negative for some z, screened by
``Y`` being indefinite or singular and ``G + G*`` having a negative eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import GridTooCoarseError
from .freqresp import COND_LIMIT, eval_loop_batch, loop_matrix
from .model import TransformedLoop

PHASE = "phase"
GAIN = "gain"


@dataclass(frozen=True)
class SweepConfig:
    grid_points: int = 2000
    omega_min: float | None = None
    omega_max: float | None = None
    bisection_tol: float = 1e-10
    refinement_max_iter: int = 200
    max_log_sigma_step: float = 2.0


def frequency_scale(loop: TransformedLoop) -> float:
    m = loop.model
    rho_a = np.max(np.abs(np.linalg.eigvals(m.A)))
    rho_cl = np.max(np.abs(np.linalg.eigvals(loop.closed_loop_matrix())))
    return float(max(1.0, rho_a, rho_cl))


def frequency_grid(loop: TransformedLoop, cfg: SweepConfig = SweepConfig()) -> np.ndarray:
    """Log-spaced grid, preceded by ``omega = 0`` when A is nonsingular."""
    rho = frequency_scale(loop)
    lo = cfg.omega_min if cfg.omega_min is not None else 1e-4 * rho
    hi = cfg.omega_max if cfg.omega_max is not None else 1e4 * rho
    if not 0 < lo < hi:
        raise ValueError(f"need 0 < omega_min < omega_max, got {lo}, {hi}")
    if cfg.grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    grid = np.geomspace(lo, hi, cfg.grid_points)
    if np.linalg.cond(loop.model.A) < COND_LIMIT:
        grid = np.concatenate([[0.0], grid])
    return grid


@dataclass(frozen=True)
class SweepData:
    """Per-frequency quantities shared by both critical sets and the CSV exports."""

    p: int
    omega: np.ndarray
    G: np.ndarray
    sv: np.ndarray
    near_pole: np.ndarray
    herm_min: np.ndarray
    y_eigs: np.ndarray

    @property
    def y_small(self) -> np.ndarray:
        """Smallest-magnitude eigenvalue of Y with its sign, a proxy for det(Y)."""
        k = np.argmin(np.abs(self.y_eigs), axis=1)
        return self.y_eigs[np.arange(len(k)), k]


def sweep_loop(loop: TransformedLoop, cfg: SweepConfig = SweepConfig()) -> SweepData:
    w = frequency_grid(loop, cfg)
    G, sv, near = eval_loop_batch(loop, w)
    Gs = np.where(near[:, None, None], 0.0, G)
    H = Gs + np.conj(np.swapaxes(Gs, 1, 2))
    Y = -0.5j * (Gs - np.conj(np.swapaxes(Gs, 1, 2)))
    herm_min = np.linalg.eigvalsh(H)[:, 0]
    y_eigs = np.linalg.eigvalsh(Y)
    herm_min[near] = np.nan
    y_eigs[near] = np.nan
    _check_resolution(w, sv, near, cfg)
    return SweepData(loop.p, w, G, sv, near, herm_min, y_eigs)


def _check_resolution(w, sv, near, cfg):
    pos = (w > 0) & ~near
    s = sv[pos]
    smax = s[:, 0]
    tiny = s <= 1e-12 * smax[:, None]
    with np.errstate(divide="ignore"):
        ls = np.where(tiny, np.nan, np.log(s))
    jump = np.abs(np.diff(ls, axis=0))
    adjacent = np.diff(np.flatnonzero(pos)) == 1
    jump = jump[adjacent]
    if jump.size and np.nanmax(jump, initial=0.0) > cfg.max_log_sigma_step:
        raise GridTooCoarseError(
            f"singular values change by a factor of {np.exp(np.nanmax(jump)):.3g} between "
            "adjacent grid points; increase grid_points"
        )


@dataclass(frozen=True)
class CriticalSet:
    """Union of half-open intervals ``(lo, hi]`` plus the evaluation frequencies inside.

    ``intervals`` hold the frequencies that satisfy the defining condition
    pointwise, and ``grid`` the points where the optimiser is run.  ``cells`` is
    the coarser root-to-root classification: a cell ``(r_{k-1}, r_k]`` between
    consecutive boundary roots (starting at 0) is kept when the condition is met
    anywhere in it, including at its closing root.
    """

    p: int
    kind: str
    intervals: tuple
    grid: np.ndarray
    boundary_roots: np.ndarray
    cells: tuple = ()
    data: SweepData | None = field(default=None, repr=False, compare=False)

    @property
    def is_empty(self) -> bool:
        return len(self.grid) == 0

    def measure(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    def contains(self, omega: float) -> bool:
        # Left ends are open at boundary roots only; a domain end is a member.
        roots = set(np.asarray(self.boundary_roots).tolist())
        return any(lo < omega <= hi or (omega == lo and lo not in roots) for lo, hi in self.intervals)

    def bracket(self, omega: float) -> tuple[float, float]:
        """Neighbouring evaluation points of ``omega``, clipped to its interval."""
        g = self.grid
        k = int(np.argmin(np.abs(g - omega)))
        lo = g[k - 1] if k > 0 else g[k]
        hi = g[k + 1] if k + 1 < len(g) else g[k]
        for a, b in self.intervals:
            if a <= omega <= b:
                lo, hi = max(lo, a), min(hi, b)
        return float(lo), float(hi)


def _sign_change_roots(w, f, valid, func, cfg):
    """Roots of ``func`` in cells where the sampled ``f`` changes sign."""
    roots = []
    ok = valid[:-1] & valid[1:]
    idx = np.flatnonzero(ok & (np.sign(f[:-1]) * np.sign(f[1:]) < 0))
    for k in idx:
        a, b = w[k], w[k + 1]
        r = brentq(func, a, b, xtol=max(1e-15 * b, 1e-300), rtol=1e-15, maxiter=cfg.refinement_max_iter)
        roots.append((k, r))
    # Exact zeros on the grid count too.
    for k in np.flatnonzero(valid & (f == 0)):
        roots.append((k, float(w[k])))
    return roots


def _runs(mask):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    splits = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[splits + 1]])
    ends = np.concatenate([idx[splits], [idx[-1]]])
    return list(zip(starts, ends))


def _assemble(w, member, edge_roots):
    """Turn membership runs into intervals whose ends are refined crossing points."""
    by_cell: dict[int, list[float]] = {}
    for k, r in edge_roots:
        by_cell.setdefault(k, []).append(r)
    intervals = []
    for k1, k2 in _runs(member):
        if k1 == 0:
            lo = w[0]
        else:
            # Without a refined crossing the cell itself is the half-open start.
            lo = max(by_cell.get(k1 - 1, [w[k1 - 1]]))
        hi = min(by_cell[k2]) if k2 + 1 < len(w) and k2 in by_cell else w[k2]
        intervals.append((float(lo), float(hi)))
    return tuple(intervals)


def _cells(w, roots, member, closing_ok):
    """Root-to-root cells ``(a, b]`` that contain a member point or close on a qualifying root."""
    edges = [0.0 if w[0] == 0 else float(w[0])] + [float(r) for r in roots] + [float(w[-1])]
    out = []
    for a, b, is_root in zip(edges[:-1], edges[1:], [True] * len(roots) + [False]):
        inside = member[(w > a) & (w <= b)]
        if (is_root and closing_ok(b)) or inside.any():
            if out and out[-1][1] == a:
                out[-1] = (out[-1][0], b)
            else:
                out.append((a, b))
    return tuple(out)


def phase_critical_set(loop: TransformedLoop, cfg: SweepConfig = SweepConfig(), data: SweepData | None = None) -> CriticalSet:
    data = sweep_loop(loop, cfg) if data is None else data
    w, sv, near = data.omega, data.sv, data.near_pole
    n = sv.shape[1]
    member = np.zeros(len(w), bool)
    ok = ~near
    member[ok] = (sv[ok, -1] <= 1.0) & (sv[ok, 0] >= 1.0)
    # Poles of A: sigma_max blows up, so only sigma_min decides.
    for k in np.flatnonzero(near):
        nb = [j for j in (k - 1, k + 1) if 0 <= j < len(w) and ok[j]]
        member[k] = any(sv[j, -1] <= 1.0 for j in nb)
    roots = []
    for i in range(n):
        def f(om, i=i):
            return np.linalg.svd(loop_matrix(loop, om), compute_uv=False)[i] - 1.0
        roots += _sign_change_roots(w, sv[:, i] - 1.0, ok, f, cfg)
    intervals = _assemble(w, member, roots)
    rvals = np.unique([r for _, r in roots if r > 0])
    pts = np.unique(np.concatenate([w[member & ok], rvals]))
    cells = _cells(w, rvals, member, lambda r: True)
    return CriticalSet(loop.p, PHASE, intervals, pts, rvals, cells, data)


def gain_critical_candidates(loop: TransformedLoop, cfg: SweepConfig = SweepConfig(), data: SweepData | None = None) -> CriticalSet:
    data = sweep_loop(loop, cfg) if data is None else data
    w, near = data.omega, data.near_pole
    ok = ~near
    ye = data.y_eigs
    n = ye.shape[1]
    scale = 1.0 + data.sv[:, 0]
    ytol = 1e-12 * scale
    indefinite = np.zeros(len(w), bool)
    indefinite[ok] = ye[ok, 0] * ye[ok, -1] <= 0
    singular = np.zeros(len(w), bool)
    singular[ok] = np.min(np.abs(ye[ok]), axis=1) <= ytol[ok]
    negative = np.zeros(len(w), bool)
    negative[ok] = data.herm_min[ok] < 0
    member = (indefinite | singular) & negative

    def y_eig(om, i):
        G = loop_matrix(loop, om)
        return np.linalg.eigvalsh(-0.5j * (G - G.conj().T))[i]

    def h_min(om):
        G = loop_matrix(loop, om)
        return np.linalg.eigvalsh(G + G.conj().T)[0]

    det_roots = []
    for i in range(n):
        det_roots += _sign_change_roots(w, ye[:, i], ok & ~singular, lambda om, i=i: y_eig(om, i), cfg)
    herm_roots = _sign_change_roots(w, data.herm_min, ok, h_min, cfg)
    intervals = _assemble(w, member, det_roots + herm_roots)
    rvals = np.unique([r for _, r in det_roots if r > 0])
    cand = [r for r in rvals if h_min(r) < 0]
    pts = np.unique(np.concatenate([w[member], cand]))
    cells = _cells(w, rvals, member, lambda r: h_min(r) < 0)
    return CriticalSet(loop.p, GAIN, intervals, pts, rvals, cells, data)
