import numpy as np
import pytest

from consensus_margins.errors import GridTooCoarseError
from consensus_margins.model import AgentModel, TransformedLoop
from consensus_margins.sweep import (
    SweepConfig,
    frequency_grid,
    gain_critical_candidates,
    phase_critical_set,
    sweep_loop,
)


def scalar_loop(a, k):
    """``G(s) = k / (s + a)`` as a one-state loop with lambda = c = 1."""
    return TransformedLoop(2, 1.0, AgentModel([[-a]], [[1.0]], [[k]], 1.0))


def test_grid_includes_zero_when_a_nonsingular(three):
    lp = scalar_loop(1.0, 2.0)
    w = frequency_grid(lp, SweepConfig(grid_points=50))
    assert w[0] == 0 and len(w) == 51
    assert np.all(np.diff(w) > 0)
    from consensus_margins.model import transformed_loops

    lp3 = transformed_loops(three.model, three.graph)[0]
    assert frequency_grid(lp3)[0] > 0  # A has an eigenvalue at zero


def test_grid_validation():
    with pytest.raises(ValueError):
        frequency_grid(scalar_loop(1, 2), SweepConfig(omega_min=2.0, omega_max=1.0))
    with pytest.raises(ValueError):
        frequency_grid(scalar_loop(1, 2), SweepConfig(grid_points=1))


def test_scalar_unit_gain_crossing():
    # |2 / (j w + 1)| = 1 at w = sqrt(3); below it |G| > 1.
    ps = phase_critical_set(scalar_loop(1.0, 2.0))
    np.testing.assert_allclose(ps.boundary_roots, [np.sqrt(3)], rtol=1e-12)
    assert ps.intervals == ()  # sigma_min = sigma_max, so the pointwise set has no length
    assert ps.cells == ((0.0, pytest.approx(np.sqrt(3), rel=1e-12)),)
    np.testing.assert_allclose(ps.grid, [np.sqrt(3)], rtol=1e-12)
    assert not ps.is_empty


def test_small_loop_has_empty_phase_set():
    ps = phase_critical_set(scalar_loop(1.0, 0.5))
    assert ps.is_empty and ps.measure() == 0 and ps.cells == ()


def test_three_agent_phase_sets(three_report):
    loops, rep = three_report
    s2, s3 = (lm.phase_set for lm in rep.per_loop)
    # Frozen from the sweep of this build; the ends are unit-gain crossings of sigma_max.
    assert s2.intervals[0][1] == pytest.approx(0.1659193, rel=1e-6)
    assert s3.intervals[0][1] == pytest.approx(0.9927358, rel=1e-6)
    for lp, s in zip(loops, (s2, s3)):
        from consensus_margins.freqresp import eval_loop

        assert eval_loop(lp, s.intervals[0][1]).sigma_max == pytest.approx(1.0, abs=1e-9)
        mid = 0.5 * s.intervals[0][1]
        r = eval_loop(lp, mid)
        assert r.sigma_min <= 1 <= r.sigma_max
        assert s.contains(mid) and s.contains(s.intervals[0][0])
        assert not s.contains(2 * s.intervals[0][1])


def test_gain_candidates_follow_indefinite_y(three_report):
    loops, _ = three_report
    lp = loops[1]
    data = sweep_loop(lp)
    gs = gain_critical_candidates(lp, data=data)
    # Rank-one loops have an indefinite skew part wherever it is nonzero.
    assert gs.measure() == pytest.approx(data.omega[-1] - data.omega[0], rel=1e-9)
    assert (data.y_eigs.min(axis=1) <= 0).all() and (data.y_eigs.max(axis=1) >= 0).all()


def test_scalar_gain_candidate_at_zero():
    # Y = Im G vanishes only at omega = 0 for a first-order loop.
    gs = gain_critical_candidates(scalar_loop(2.0, -0.5))
    assert 0.0 in gs.grid


def test_grid_too_coarse():
    # A resonance with damping 1e-4 is invisible to a 20-point grid.
    m = AgentModel([[0, 1], [-1, -1e-4]], [[0], [1]], [[1, 1]], 1.0)
    lp = TransformedLoop(2, 1.0, m)
    with pytest.raises(GridTooCoarseError):
        sweep_loop(lp, SweepConfig(grid_points=20, max_log_sigma_step=0.5, omega_min=0.5, omega_max=2.0))
