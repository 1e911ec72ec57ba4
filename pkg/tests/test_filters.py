import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddlab.filters import (filter_curve, filter_function, filter_via_fft_oracle,
                           series_coefficients, suppression_order)
from ddlab.sequences import family_sequence, make_sequence, udd_positions


def test_free_evolution_identity():
    seq = make_sequence([], 1.0)
    z = np.geomspace(1e-3, 1e3, 200)
    np.testing.assert_allclose(filter_function(seq, z), 4 * np.sin(z / 2) ** 2, rtol=1e-12)
    assert filter_function(seq, math.pi) == pytest.approx(4.0, rel=1e-15)


def test_hahn_identity():
    seq = make_sequence([0.5], 1.0)
    z = np.geomspace(1e-3, 1e3, 200)
    np.testing.assert_allclose(filter_function(seq, z), 16 * np.sin(z / 4) ** 4, rtol=1e-12)
    assert filter_function(seq, 2 * math.pi) == pytest.approx(16.0, rel=1e-14)


def test_zero_frequency():
    seq = family_sequence("udd", 6, 30e-3, 185e-6)
    assert filter_function(seq, 0.0) == 0.0
    assert filter_via_fft_oracle(seq, [0.0])[0] == 0.0


def test_free_evolution_small_angle():
    seq = make_sequence([], 1.0)
    z = np.array([1e-6, 1e-5, 1e-4])
    np.testing.assert_allclose(filter_via_fft_oracle(seq, z) / z**2, 1.0, rtol=1e-8)


def test_negative_frequency_rejected():
    with pytest.raises(ValueError):
        filter_function(make_sequence([0.5], 1.0), -1.0)


@pytest.mark.parametrize("z, ref", [(0.5, 3.4265790211644497e-13), (10.0, 2.2342497217276898),
                                    (100.0, 0.9866881547653876), (1000.0, 34.88015425069694)])
def test_udd6_lab_settings_frozen(z, ref):
    # values from the multiprecision segment-integration oracle
    seq = family_sequence("udd", 6, 30e-3, 185e-6)
    assert filter_function(seq, z) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("z, ref", [(3.0, 0.022126292843028493), (30.0, 8.224074392311309)])
def test_cpmg4_finite_pulse_frozen(z, ref):
    seq = family_sequence("cpmg", 4, 1.0, 0.01)
    assert filter_function(seq, z) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("family", ["cpmg", "udd", "pdd"])
@pytest.mark.parametrize("n", [1, 3, 6])
@pytest.mark.parametrize("phi", [0.0, 0.01])
def test_matches_oracle_sparse_grid(family, n, phi):
    seq = family_sequence(family, n, 1.0, phi)
    z = np.geomspace(1e-3, 1e3, 25)
    np.testing.assert_allclose(filter_function(seq, z), filter_via_fft_oracle(seq, z), rtol=1e-9)


def test_pulse_width_separates_curves_at_high_frequency():
    fin = family_sequence("udd", 6, 30e-3, 185e-6)
    dlt = family_sequence("udd", 6, 30e-3, 0.0)

    def median_gap(a, b):
        z = np.geomspace(a, b, 200)
        return np.median(np.abs(filter_function(fin, z) / filter_function(dlt, z) - 1))

    assert median_gap(5, 30) < 0.01
    assert median_gap(300, 1000) > 0.3
    # finite pulses also spoil the high-order low-frequency cancellation
    assert suppression_order(fin) < suppression_order(dlt)


def test_delta_limit_continuity():
    for family, n in [("cpmg", 4), ("udd", 6), ("pdd", 3)]:
        z = np.geomspace(1e-2, 1e3, 200)
        d = filter_function(family_sequence(family, n, 1.0, 0.0), z)
        f = filter_function(family_sequence(family, n, 1.0, 1e-8), z)
        keep = d > 1e-12 * d.max()
        assert np.max(np.abs(f[keep] / d[keep] - 1)) < 1e-6


def test_filter_curve_variants():
    seq = family_sequence("cpmg", 2, 1.0, 0.05)
    z = np.linspace(0, 50, 11)
    fin = filter_curve(seq, z)
    dlt = filter_curve(seq, z, "delta-pulse")
    assert fin.F[0] == dlt.F[0] == 0
    assert not np.allclose(fin.F, dlt.F)
    zero_width = family_sequence("cpmg", 2, 1.0, 0.0)
    np.testing.assert_array_equal(filter_curve(zero_width, z).F,
                                  filter_curve(zero_width, z, "delta-pulse").F)
    with pytest.raises(ValueError):
        filter_curve(seq, z, "gaussian")


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6, 7, 8])
def test_udd_suppression_order(n):
    seq = make_sequence(udd_positions(n), 1.0)
    assert suppression_order(seq) == n + 1
    z = np.geomspace(1e-4, 1e-3, 20)
    slope = np.polyfit(np.log(z), np.log(filter_function(seq, z)), 1)[0]
    assert slope == pytest.approx(2 * (n + 1), rel=0.02)


def test_other_family_suppression_orders():
    # F ~ z^(2 * order): CPMG reaches order 2 (odd n) or 3 (even n); even-n PDD
    # leaves a net free-evolution area and stays at order 1
    assert suppression_order(make_sequence([], 1.0)) == 1
    assert suppression_order(family_sequence("cpmg", 3, 1.0)) == 2
    assert suppression_order(family_sequence("cpmg", 4, 1.0)) == 3
    assert suppression_order(family_sequence("pdd", 3, 1.0)) == 2
    assert suppression_order(family_sequence("pdd", 4, 1.0)) == 1


def test_series_coefficients_free_evolution():
    # amplitude 1 - e^{iz} = -sum_{k>=1} (iz)^k / k!
    assert series_coefficients(make_sequence([], 1.0), terms=6) == [0, -1, -1, -1, -1, -1]


def test_series_coefficients_hahn():
    # 1 + e^{iz} - 2 e^{iz/2}: b_k = [k=0] + 1 - 2 (1/2)^k
    c = series_coefficients(make_sequence([0.5], 1.0), terms=5)
    assert c == [0, 0, Fraction(1, 2), Fraction(3, 4), Fraction(7, 8)]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.02, 0.98), min_size=1, max_size=10, unique=True).map(sorted),
       st.floats(0, 1e4))
def test_filter_nonnegative_and_bounded(deltas, z):
    try:
        seq = make_sequence(deltas, 1.0)
    except ValueError:
        return
    F = filter_function(seq, z)
    assert 0.0 <= F <= (2 * seq.n + 2) ** 2 * (1 + 1e-12)
