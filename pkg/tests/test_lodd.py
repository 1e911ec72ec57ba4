import math

import numpy as np
import pytest

from ddlab.coherence import chi
from ddlab.filters import filter_function
from ddlab.lodd import (TERMINATIONS, OptimizerConfig, compare_sequences, default_start_family,
                        optimize, sweep_optimize, violation)
from ddlab.sequences import PulseSequence, family_sequence, make_sequence
from ddlab.spectra import ambient_preset, ohmic_preset, one_over_f_preset

SHORT = OptimizerConfig(max_iterations=40)


@pytest.fixture(scope="module")
def udd4_run():
    seq = family_sequence("udd", 4, 2.0e-3, 100e-6)
    return seq, optimize(seq, ohmic_preset(), SHORT)


def test_config_validation():
    for bad in [dict(max_iterations=0), dict(position_tol=0.0), dict(position_tol_s=-1.0),
                dict(objective_tol=0.0), dict(reflection=0.0), dict(expansion=1.0),
                dict(contraction=1.0), dict(shrink=0.0), dict(simplex_scale=0.0),
                dict(penalty=-1.0), dict(mode="gradient"),
                dict(mode="monte-carlo", mc_realizations=1)]:
        with pytest.raises(ValueError):
            OptimizerConfig(**bad)


def test_position_tolerance_default_is_50ns():
    assert OptimizerConfig().resolved_position_tol(10e-3) == pytest.approx(5e-6)
    assert OptimizerConfig(position_tol=1e-3).resolved_position_tol(10e-3) == 1e-3


def test_violation_measure():
    assert violation(np.array([0.25, 0.75]), 0.1) == 0.0
    assert violation(np.array([0.75, 0.25]), 0.0) == pytest.approx(0.5)
    assert violation(np.array([0.02, 0.5]), 0.1) == pytest.approx(0.03)
    assert violation(np.array([0.5, 0.55]), 0.1) == pytest.approx(0.05)


def test_history_nonincreasing_and_best_feasible(udd4_run):
    seq, res = udd4_run
    h = np.array(res.history)
    assert len(h) == res.iterations + 1
    assert np.all(np.diff(h) <= 0)
    assert h[-1] == res.best_value
    assert violation(res.best.delta_array, res.best.phi_pi) == 0
    rebuilt = make_sequence(res.best.deltas, res.best.tau, res.best.tau_pi)
    assert isinstance(rebuilt, PulseSequence)
    assert (res.best.tau, res.best.tau_pi) == (seq.tau, seq.tau_pi)
    assert res.termination in TERMINATIONS
    assert res.best_value < res.start_value
    assert res.best_value == pytest.approx(chi(res.best, ohmic_preset()).chi, rel=1e-12)


def test_analytic_determinism(udd4_run):
    seq, res = udd4_run
    again = optimize(seq, ohmic_preset(), SHORT)
    assert again.best == res.best and again.history == res.history


def test_fixed_point_rerun():
    seq = family_sequence("udd", 4, 2.0e-3, 100e-6)
    first = optimize(seq, ohmic_preset())
    second = optimize(first.best, ohmic_preset())
    assert first.best_value - second.best_value < OptimizerConfig().objective_tol


def test_negligible_noise_returns_start():
    seq = family_sequence("udd", 4, 2.0e-3, 100e-6)
    res = optimize(seq, ohmic_preset(1e-9))
    assert res.best is seq
    assert res.termination == "objective-converged"


def test_start_validation():
    with pytest.raises(ValueError):
        optimize(make_sequence([], 1e-3), ohmic_preset())


def test_mc_determinism_and_seed_dependence():
    seq = family_sequence("udd", 3, 2.0e-3, 100e-6)
    cfg = OptimizerConfig(mode="monte-carlo", mc_realizations=100, max_iterations=5, seed=7)
    a = optimize(seq, ohmic_preset(), cfg)
    b = optimize(seq, ohmic_preset(), cfg)
    c = optimize(seq, ohmic_preset(), OptimizerConfig(mode="monte-carlo", mc_realizations=100,
                                                      max_iterations=5, seed=8))
    assert a.best == b.best and a.history == b.history
    assert a.history != c.history
    assert np.all(np.diff(a.history) <= 0)


@pytest.mark.slow
def test_mc_robust_to_measurement_noise():
    # R = 500 noisy objective against the analytic optimum, ohmic preset, n = 6
    seq = family_sequence("udd", 6, 2.2e-3, 185e-6)
    spec = ohmic_preset()
    ref = optimize(seq, spec)
    noisy = optimize(seq, spec, OptimizerConfig(mode="monte-carlo", mc_realizations=500, seed=1))
    assert violation(noisy.best.delta_array, noisy.best.phi_pi) == 0
    assert chi(noisy.best, spec).chi <= 1.25 * ref.best_value


def test_default_start_family():
    assert default_start_family(ohmic_preset()) == "udd"
    assert default_start_family(ambient_preset(1.46, 0.23)) == "cpmg"
    assert default_start_family(one_over_f_preset()) == "udd"


def test_sweep_dominates_baselines_and_warm_starts():
    taus = [2.0e-3, 2.2e-3, 2.4e-3]
    pts = sweep_optimize("udd", 4, ohmic_preset(), taus, 100e-6, SHORT)
    assert [p.tau for p in pts] == taus
    tol = SHORT.objective_tol
    for p in pts:
        assert p.failure is None
        assert p.chi_best <= min(p.chi_cpmg, p.chi_udd) + tol
        assert p.chi_best == pytest.approx(chi(p.best, ohmic_preset()).chi, rel=1e-9)
    # smooth spectrum: positions move little between neighbouring tau
    steps = [np.max(np.abs(a.best.delta_array - b.best.delta_array)) for a, b in zip(pts, pts[1:])]
    assert max(steps) < 0.05


def test_sweep_reports_infeasible_points():
    pts = sweep_optimize("udd", 6, ohmic_preset(), [1.0e-3, 2.2e-3], 185e-6,
                         OptimizerConfig(max_iterations=3))
    assert pts[0].failure and math.isnan(pts[0].chi_best)
    assert pts[1].failure is None


def test_compare_cpmg2_udd2_identical():
    spec = ambient_preset(1.46, 0.23)
    t = compare_sequences([family_sequence("cpmg", 2, 5e-3, 185e-6),
                           family_sequence("udd", 2, 5e-3, 185e-6)], spec)
    assert t.rows[0][1:] == t.rows[1][1:]
    assert np.all(t.improvement["UDD2"] == 0)


def test_compare_udd_beats_cpmg_ohmic():
    t = compare_sequences([family_sequence("cpmg", 6, 2.2e-3, 185e-6),
                           family_sequence("udd", 6, 2.2e-3, 185e-6)], ohmic_preset())
    assert t.rows[1][3] < t.rows[0][3]


def test_compare_lodd_improves_on_udd_in_band():
    seq = family_sequence("udd", 4, 2.0e-3, 100e-6)
    best = optimize(seq, ohmic_preset(), SHORT).best
    # the ohmic noise power sits below 500 Hz, i.e. omega tau < 2 pi 500 tau
    z = np.linspace(0.5, 2 * math.pi * 500 * 2.0e-3, 200)
    t = compare_sequences([seq, best], ohmic_preset(), z)
    assert t.rows[1][1] < t.rows[0][1]
    S = ohmic_preset().evaluate(z / 2.0e-3)
    w_ref = S * filter_function(seq, z) / z**2
    w_opt = S * filter_function(best, z) / z**2
    assert np.sum(w_opt) < np.sum(w_ref)
    heavy = w_ref > 0.1 * w_ref.max()
    assert np.mean(t.improvement["LODD4"][heavy]) > 0


def test_compare_rejects_mismatched_tau():
    with pytest.raises(ValueError):
        compare_sequences([family_sequence("cpmg", 2, 5e-3), family_sequence("udd", 2, 6e-3)],
                          ohmic_preset())
    with pytest.raises(ValueError):
        compare_sequences([family_sequence("cpmg", 2, 5e-3, 10e-6),
                           family_sequence("udd", 2, 5e-3, 20e-6)], ohmic_preset())
    with pytest.raises(ValueError):
        compare_sequences([], ohmic_preset())
