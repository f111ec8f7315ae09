"""Phase, gain and input-delay margins assembled from the per-frequency optima.

For each loop p and each frequency in its critical set the worst-case problem
is solved, giving the phase ``phi(omega)`` (or log-gain ``g(omega)``) of the
smallest destabilising perturbation at that frequency.  The margins are minima
over frequencies and loops; the delay margin minimises ``phi(omega) / omega``.
Grid minima are polished with a bounded scalar search inside their grid cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InfeasibleError
from .freqresp import loop_matrix
from .model import AgentModel, TransformedLoop, is_hurwitz
from .optimizer import (
    OptimizerConfig,
    KktSolution,
    embed_gain,
    embed_phase,
    solve_kkt,
    solve_kkt_many,
)
from .sweep import CriticalSet, SweepConfig, gain_critical_candidates, phase_critical_set, sweep_loop

INF = float("inf")
_PENALTY = 1e6


@dataclass(frozen=True)
class MarginConfig:
    sweep: SweepConfig = SweepConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    refine_iter: int = 60
    refine_candidates: int = 3


@dataclass(frozen=True)
class Extremum:
    """A minimising frequency with the worst-case vectors found there (``v = -G z``)."""

    omega: float
    value: float
    z: np.ndarray
    v: np.ndarray
    certified: bool
    refined: bool


@dataclass
class LoopMargins:
    p: int
    lambda_p: complex
    phase_set: CriticalSet | None = None
    gain_set: CriticalSet | None = None
    phase_omega: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phase_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gain_omega: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gain_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phase: Extremum | None = None
    delay: Extremum | None = None
    gain: Extremum | None = None
    warnings: list = field(default_factory=list)

    @property
    def phase_margin(self) -> float:
        return self.phase.value if self.phase else INF

    @property
    def delay_margin(self) -> float:
        return self.delay.value if self.delay else INF

    @property
    def gain_margin(self) -> float:
        return self.gain.value if self.gain else INF


@dataclass
class MarginReport:
    phase_margin_rad: float
    phase_interval: tuple
    delay_margin_s: float
    gain_margin: float
    gain_sv_interval: tuple
    phase_independent: bool
    gain_independent: bool
    delay_independent: bool
    per_loop: list
    warnings: list

    def loop(self, p: int) -> LoopMargins:
        return next(lm for lm in self.per_loop if lm.p == p)


def _phase_angle(sol: KktSolution, warnings: list, where: str) -> float:
    c = -sol.objective / 2
    if abs(c) > 1 + 1e-9:
        warnings.append(f"{where}: arccos argument {c:.12g} clamped to [-1, 1]")
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def _local_minima(values: np.ndarray, count: int) -> list[int]:
    """Indices of the smallest interior-or-edge local minima, best first."""
    v = np.asarray(values)
    finite = np.isfinite(v)
    idx = [
        k for k in range(len(v))
        if finite[k]
        and (k == 0 or not finite[k - 1] or v[k] <= v[k - 1])
        and (k == len(v) - 1 or not finite[k + 1] or v[k] <= v[k + 1])
    ]
    idx.sort(key=lambda k: v[k])
    return idx[:count]


def _refine(f, bracket, x0, v0, cfg):
    lo, hi = bracket
    if not hi > lo:
        return x0, v0
    res = minimize_scalar(
        f, bounds=(lo, hi), method="bounded",
        options={"maxiter": cfg.refine_iter, "xatol": max(1e-13 * hi, 1e-300)},
    )
    if res.fun < v0:
        return float(res.x), float(res.fun)
    return x0, v0


def _extremum(loop, omega, sol: KktSolution, value, refined) -> Extremum:
    z = sol.z
    return Extremum(float(omega), float(value), z, -loop_matrix(loop, omega) @ z, sol.certified, refined)


def analyze_phase(loop: TransformedLoop, cfg: MarginConfig = MarginConfig(), pset: CriticalSet | None = None) -> LoopMargins:
    """Phase and delay extrema of one loop."""
    pset = phase_critical_set(loop, cfg.sweep) if pset is None else pset
    out = LoopMargins(loop.p, loop.lambda_p, phase_set=pset)
    if pset.is_empty:
        return out
    w = pset.grid
    sols = solve_kkt_many([embed_phase(loop_matrix(loop, om)) for om in w], cfg.optimizer)
    phi = np.full(len(w), np.nan)
    uncertified = 0
    for k, s in enumerate(sols):
        if isinstance(s, Exception):
            out.warnings.append(f"p={loop.p}: phase problem failed at omega={w[k]:.6g}: {s}")
            continue
        phi[k] = _phase_angle(s, out.warnings, f"p={loop.p}, omega={w[k]:.6g}")
        uncertified += not s.certified
    if uncertified:
        out.warnings.append(f"p={loop.p}: {uncertified} phase solutions lack a global certificate")
    out.phase_omega, out.phase_values = w, phi
    if not np.isfinite(phi).any():
        return out

    def solve_at(om, k):
        try:
            return solve_kkt(embed_phase(loop_matrix(loop, om)), cfg.optimizer, initial=sols[k].y)
        except InfeasibleError:
            return None

    def best(objective, values):
        best_ext = None
        for k in _local_minima(values, cfg.refine_candidates):
            def f(om, k=k):
                s = solve_at(om, k)
                return _PENALTY if s is None else objective(om, _phase_angle(s, [], ""))
            x, val = _refine(f, pset.bracket(w[k]), w[k], values[k], cfg)
            s = sols[k] if x == w[k] else solve_at(x, k)
            if s is None:
                x, val, s = w[k], values[k], sols[k]
            if best_ext is None or val < best_ext.value:
                best_ext = _extremum(loop, x, s, val, x != w[k])
        return best_ext

    out.phase = best(lambda om, ph: ph, phi)
    pos = w > 0
    tau = np.where(pos, phi / np.where(pos, w, 1.0), np.nan)
    if np.isfinite(tau).any():
        out.delay = best(lambda om, ph: ph / om if om > 0 else _PENALTY, tau)
    return out


def analyze_gain(loop: TransformedLoop, cfg: MarginConfig = MarginConfig(), gset: CriticalSet | None = None) -> LoopMargins:
    """Gain extremum of one loop; infeasible candidate frequencies are dropped."""
    gset = gain_critical_candidates(loop, cfg.sweep) if gset is None else gset
    out = LoopMargins(loop.p, loop.lambda_p, gain_set=gset)
    if gset.is_empty:
        return out
    w = gset.grid
    sols = solve_kkt_many([embed_gain(loop_matrix(loop, om)) for om in w], cfg.optimizer)
    g = np.full(len(w), np.nan)
    uncertified = 0
    for k, s in enumerate(sols):
        if isinstance(s, Exception):
            continue
        g[k] = s.value
        uncertified += not s.certified
    if uncertified:
        out.warnings.append(f"p={loop.p}: {uncertified} gain solutions lack a global certificate")
    confirmed = np.isfinite(g)
    out.gain_omega, out.gain_values = w[confirmed], g[confirmed]
    if not confirmed.any():
        return out

    def solve_at(om, k):
        try:
            return solve_kkt(embed_gain(loop_matrix(loop, om)), cfg.optimizer, initial=sols[k].y)
        except InfeasibleError:
            return None

    best_ext = None
    for k in _local_minima(np.where(confirmed, g, np.inf), cfg.refine_candidates):
        def f(om, k=k):
            s = solve_at(om, k)
            return _PENALTY if s is None else s.value
        x, val = _refine(f, gset.bracket(w[k]), w[k], g[k], cfg)
        s = sols[k] if x == w[k] else solve_at(x, k)
        if s is None:
            x, val, s = w[k], g[k], sols[k]
        if best_ext is None or val < best_ext.value:
            best_ext = _extremum(loop, x, s, val, x != w[k])
    out.gain = best_ext
    return out


def phase_independence(loops, cfg: MarginConfig = MarginConfig()) -> bool:
    return all(phase_critical_set(lp, cfg.sweep).is_empty for lp in loops)


def delay_independence(model: AgentModel, loops, cfg: MarginConfig = MarginConfig()) -> bool:
    return is_hurwitz(model.A) and phase_independence(loops, cfg)


def gain_independence(loops, cfg: MarginConfig = MarginConfig()) -> bool:
    return all(analyze_gain(lp, cfg).gain is None for lp in loops)


def compute_phase_margin(loops, cfg: MarginConfig = MarginConfig()):
    per = [analyze_phase(lp, cfg) for lp in loops]
    return min((lm.phase_margin for lm in per), default=INF), per


def compute_delay_margin(loops, cfg: MarginConfig = MarginConfig()):
    per = [analyze_phase(lp, cfg) for lp in loops]
    return min((lm.delay_margin for lm in per), default=INF), per


def compute_gain_margin(loops, cfg: MarginConfig = MarginConfig()):
    per = [analyze_gain(lp, cfg) for lp in loops]
    return min((lm.gain_margin for lm in per), default=INF), per


def compute_margins(model: AgentModel, loops, cfg: MarginConfig = MarginConfig()) -> MarginReport:
    """All margins in one pass over the loops, sharing each loop's frequency sweep."""
    per = []
    warnings: list[str] = []
    for lp in loops:
        data = sweep_loop(lp, cfg.sweep)
        ph = analyze_phase(lp, cfg, phase_critical_set(lp, cfg.sweep, data))
        ga = analyze_gain(lp, cfg, gain_critical_candidates(lp, cfg.sweep, data))
        ph.gain_set, ph.gain_omega, ph.gain_values, ph.gain = ga.gain_set, ga.gain_omega, ga.gain_values, ga.gain
        ph.warnings += ga.warnings
        per.append(ph)
        warnings += ph.warnings
    phi = min((lm.phase_margin for lm in per), default=INF)
    tau = min((lm.delay_margin for lm in per), default=INF)
    g = min((lm.gain_margin for lm in per), default=INF)
    phase_ind = all(lm.phase_set.is_empty for lm in per)
    delay_ind = phase_ind and is_hurwitz(model.A)
    gain_ind = all(lm.gain is None for lm in per)
    if phase_ind and per and not is_hurwitz(model.A):
        warnings.append("no loop has a phase-critical frequency, yet A is not Hurwitz")
    if not per:
        warnings.append("single agent: no interconnection, all margins are infinite")
    return MarginReport(
        phase_margin_rad=phi,
        phase_interval=(-phi, phi),
        delay_margin_s=tau,
        gain_margin=g,
        gain_sv_interval=(float(np.exp(-g)), float(np.exp(g))),
        phase_independent=phase_ind,
        gain_independent=gain_ind,
        delay_independent=delay_ind,
        per_loop=per,
        warnings=warnings,
    )
