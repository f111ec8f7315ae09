"""JSON and CSV serialisation of margin reports."""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from . import __version__
from .freqresp import eval_loop_batch
from .margins import Extremum, LoopMargins, MarginReport
from .sweep import CriticalSet, SweepData
from .verify import destabilization_residual, gain_certificate, perturbed_loop_stable, phase_certificate

SWEEP_COLUMNS = ["p", "omega", "sigma_max", "sigma_min", "phi", "g", "tau_candidate"]


def jsonable(x):
    """Plain JSON types; non-finite floats become the strings ``inf``, ``-inf`` and ``nan``."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [jsonable(x.real), jsonable(x.imag)]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def _vector(v) -> list:
    return [[float(c.real), float(c.imag)] for c in np.asarray(v, dtype=complex)]


def _set_summary(s: CriticalSet | None) -> dict | None:
    if s is None:
        return None
    return {
        "intervals": [list(iv) for iv in s.intervals],
        "cells": [list(iv) for iv in s.cells],
        "boundary_roots": list(s.boundary_roots),
        "evaluation_points": len(s.grid),
    }


def _extremum(ext: Extremum | None, key: str) -> dict | None:
    if ext is None:
        return None
    return {
        "omega": ext.omega,
        key: ext.value,
        "z": _vector(ext.z),
        "v": _vector(ext.v),
        "certified": ext.certified,
        "refined": ext.refined,
    }


def certificate_summary(lm: LoopMargins, loop) -> dict:
    """Residual and perturbed abscissa of the constructed worst-case perturbations."""
    out = {}
    for name, ext, build in (("phase", lm.phase, phase_certificate), ("gain", lm.gain, gain_certificate)):
        if ext is None:
            continue
        D = build(ext)
        out[name] = {
            "residual": destabilization_residual(loop, ext.omega, D),
            "abscissa": perturbed_loop_stable(loop, D)[1],
            "phase_max": float(np.max(np.abs(D.phases))),
            "log_gain_max": float(np.max(np.abs(np.log(D.gains)))),
        }
    return out


def loop_summary(lm: LoopMargins, loop=None) -> dict:
    d = {
        "p": lm.p,
        "lambda": lm.lambda_p,
        "phase_margin_rad": lm.phase_margin,
        "delay_margin_s": lm.delay_margin,
        "gain_margin": lm.gain_margin,
        "phase_set": _set_summary(lm.phase_set),
        "gain_candidates": _set_summary(lm.gain_set),
        "gain_confirmed_points": len(lm.gain_omega),
        "phase": _extremum(lm.phase, "phi"),
        "delay": _extremum(lm.delay, "tau"),
        "gain": _extremum(lm.gain, "g"),
        "warnings": list(lm.warnings),
    }
    if loop is not None:
        d["certificates"] = certificate_summary(lm, loop)
    return d


def report_to_dict(report: MarginReport, loops=None, config_echo=None, assumptions=None) -> dict:
    by_p = {lp.p: lp for lp in loops or []}
    doc = {
        "tool_version": __version__,
        "phase_margin_rad": report.phase_margin_rad,
        "phase_interval": report.phase_interval,
        "gain_margin": report.gain_margin,
        "gain_sv_interval": report.gain_sv_interval,
        "delay_margin_s": report.delay_margin_s,
        "phase_independent": report.phase_independent,
        "gain_independent": report.gain_independent,
        "delay_independent": report.delay_independent,
        "per_loop": [loop_summary(lm, by_p.get(lm.p)) for lm in report.per_loop],
        "warnings": list(report.warnings),
    }
    if assumptions is not None:
        doc["assumptions"] = assumptions
    doc["config_echo"] = config_echo
    return jsonable(doc)


def dumps(doc: dict) -> str:
    return json.dumps(jsonable(doc), indent=2) + "\n"


def _fmt(x) -> str:
    x = float(x)
    return "" if not math.isfinite(x) else f"{x:.12g}"


def margin_rows(report: MarginReport, loops) -> list[list]:
    """Per-frequency rows of ``SWEEP_COLUMNS`` over every optimiser evaluation point."""
    rows = []
    by_p = {lp.p: lp for lp in loops}
    for lm in report.per_loop:
        phi = dict(zip(lm.phase_omega.tolist(), lm.phase_values.tolist()))
        g = dict(zip(lm.gain_omega.tolist(), lm.gain_values.tolist()))
        w = np.array(sorted(set(phi) | set(g)))
        if len(w) == 0:
            continue
        _, sv, _ = eval_loop_batch(by_p[lm.p], w)
        for k, om in enumerate(w):
            ph = phi.get(om, math.nan)
            tau = ph / om if om > 0 else math.nan
            rows.append([lm.p, om, sv[k, 0], sv[k, -1], ph, g.get(om, math.nan), tau])
    return rows


def write_margin_csv(path, report: MarginReport, loops) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in margin_rows(report, loops):
            w.writerow([r[0]] + [_fmt(x) for x in r[1:]])


def write_sweep_csv(path, sweeps: list[tuple[SweepData, CriticalSet, CriticalSet]], n: int) -> None:
    """Raw sweep grid: singular values, Hermitian and skew-part diagnostics, set membership."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "omega"] + [f"sigma_{i + 1}" for i in range(n)]
                   + ["herm_min", "y_small", "in_phase_set", "in_gain_candidates"])
        for data, pset, gset in sweeps:
            ys = data.y_small
            for k, om in enumerate(data.omega):
                w.writerow([data.p, _fmt(om)] + [_fmt(s) for s in data.sv[k]]
                           + [_fmt(data.herm_min[k]), _fmt(ys[k]),
                              int(pset.contains(om)), int(gset.contains(om))])
