import functools
import math
import warnings

import numpy as np
import pytest

from ddlab.coherence import CoherenceResult, QuadratureWarning, chi, decay_curve
from ddlab.sequences import family_sequence, make_sequence
from ddlab.spectra import (TWO_PI, PowerLawSpectrum, ambient_preset, load_tabulated, ohmic_preset,
                           one_over_f_preset)

# references: scipy quad over closed-form free-evolution / Hahn filters (epsrel 1e-13)
HAHN_OHMIC_2MS = 793.63385772102
FREE_1F_1MS = 0.0066646821742616285
HAHN_AMBIENT_10MS = 4621.732893413603


def test_hahn_ohmic_reference():
    r = chi(make_sequence([0.5], 2e-3), ohmic_preset())
    assert r.chi == pytest.approx(HAHN_OHMIC_2MS, rel=1e-8)
    assert r.converged


def test_free_evolution_one_over_f_reference():
    r = chi(make_sequence([], 1e-3), one_over_f_preset())
    assert r.chi == pytest.approx(FREE_1F_1MS, rel=1e-8)


def test_hahn_ambient_reference():
    r = chi(make_sequence([0.5], 10e-3), ambient_preset(1.46, 0.23))
    assert r.chi == pytest.approx(HAHN_AMBIENT_10MS, rel=1e-8)


def test_zero_noise():
    r = chi(family_sequence("udd", 6, 30e-3, 185e-6), ohmic_preset(0.0))
    assert (r.chi, r.W, r.p) == (0.0, 1.0, 0.0)


@pytest.mark.parametrize("spec", [ohmic_preset(), one_over_f_preset(), ambient_preset(1.0, 0.23)])
def test_linear_in_alpha(spec):
    seq = family_sequence("cpmg", 4, 5e-3, 185e-6)
    a = chi(seq, spec.with_alpha(1.0)).chi
    b = chi(seq, spec.with_alpha(2.0)).chi
    assert b == pytest.approx(2 * a, rel=1e-10)


def test_w_and_p_consistent():
    r = chi(family_sequence("cpmg", 2, 3e-3), ohmic_preset(0.05))
    assert r.W == pytest.approx(math.exp(-r.chi), rel=1e-15)
    assert r.p == pytest.approx((1 - r.W) / 2, rel=1e-15)
    assert 0 <= r.p <= 0.5


def test_udd_beats_cpmg_ohmic_short_tau():
    spec = ohmic_preset()
    for tau in (1.9e-3, 2.1e-3):
        u = chi(family_sequence("udd", 6, tau, 185e-6), spec).chi
        c = chi(family_sequence("cpmg", 6, tau, 185e-6), spec).chi
        assert u < c


def test_composite_additivity():
    a, b = ohmic_preset(0.3), ambient_preset(1.0, 0.23)
    seq = family_sequence("udd", 4, 8e-3, 185e-6)
    assert chi(seq, a + b).chi == pytest.approx(chi(seq, a).chi + chi(seq, b).chi, rel=1e-8)


def test_scale_invariance():
    # tau -> c tau with S'(w) = S(c w) / c keeps chi fixed; for S = A w that
    # leaves A unchanged and moves the cutoff to omega_c / c
    c = 3.0
    s1 = PowerLawSpectrum(1.0, 150.0, 0.0, TWO_PI * 500, "sharp")
    s2 = PowerLawSpectrum(1.0, 150.0, 0.0, TWO_PI * 500 / c, "sharp")
    q1 = chi(family_sequence("udd", 5, 2e-3, 50e-6), s1).chi
    q2 = chi(family_sequence("udd", 5, 2e-3 * c, 50e-6 * c), s2).chi
    assert q2 == pytest.approx(q1, rel=1e-8)


def test_tabulated_matches_analytic():
    f = np.geomspace(1.0, 500.0, 40)
    tab = load_tabulated(zip(f, 150.0 * TWO_PI * f))
    ref = PowerLawSpectrum(1.0, 150.0, TWO_PI * 1.0, TWO_PI * 500.0, "sharp")
    seq = family_sequence("cpmg", 3, 4e-3)
    assert chi(seq, tab).chi == pytest.approx(chi(seq, ref).chi, rel=1e-8)


def test_strict_mode_raises_when_unconverged(monkeypatch):
    # cap the panel budget so the impossible tolerance fails fast
    from ddlab import coherence, quadrature

    monkeypatch.setattr(coherence, "integrate_panels",
                        functools.partial(quadrature.integrate_panels, max_panels=300))
    seq = family_sequence("cpmg", 2, 3e-3)
    with pytest.raises(ArithmeticError):
        chi(seq, ohmic_preset(), rtol=1e-17, strict=True)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        r = chi(seq, ohmic_preset(), rtol=1e-17)
    assert not r.converged
    assert any(issubclass(w.category, QuadratureWarning) for w in rec)


@pytest.mark.parametrize("fam", ["cpmg", "udd", "pdd"])
@pytest.mark.parametrize("spec", [ohmic_preset(), ambient_preset(1.46, 0.23)])
def test_decay_curve_small_tau_limit(fam, spec):
    # even-n PDD keeps a net free-evolution area, so under the 1/w^4 preset its
    # chi only falls as tau^2 and needs much shorter tau to vanish
    taus = np.geomspace(1e-10, 1e-8, 3)
    res = decay_curve(fam, 4, spec, taus)
    p = [r.p for r in res]
    assert p[0] < 1e-6
    assert p[0] <= p[1] <= p[2]


def test_decay_curve_cpmg2_equals_udd2():
    taus = np.geomspace(1e-3, 50e-3, 8)
    spec = ambient_preset(1.46, 0.23)
    a = decay_curve("cpmg", 2, spec, taus, 185e-6)
    b = decay_curve("udd", 2, spec, taus, 185e-6)
    assert [r.chi for r in a] == [r.chi for r in b]


def test_decay_curve_reports_infeasible_points():
    # UDD6 pulses overlap below about 1.87 ms at tau_pi = 185 us
    res = decay_curve("udd", 6, ohmic_preset(), [1.0e-3, 3.0e-3], 185e-6)
    assert res[0].failure and math.isnan(res[0].chi)
    assert res[1].failure is None and res[1].chi > 0


def test_decay_curve_order_with_workers():
    taus = list(np.geomspace(2e-3, 20e-3, 6))[::-1]
    serial = decay_curve("cpmg", 4, ohmic_preset(), taus, 185e-6)
    par = decay_curve("cpmg", 4, ohmic_preset(), taus, 185e-6, workers=3)
    assert [r.tau for r in par] == taus
    assert [r.chi for r in par] == [r.chi for r in serial]


def test_failed_result_shape():
    r = CoherenceResult.failed(1e-3, "overlap")
    assert math.isnan(r.p) and not r.converged and r.failure == "overlap"
