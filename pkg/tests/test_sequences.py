from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddlab.sequences import (BoundaryError, OrderingError, OverlapError, PulseSequence,
                             SequenceError, cpmg_positions, family_sequence, make_sequence,
                             max_pulse_fraction, pdd_positions, render_time_domain,
                             udd_positions)


def test_cpmg_positions():
    assert cpmg_positions(1) == [Fraction(1, 2)]
    assert cpmg_positions(2) == [Fraction(1, 4), Fraction(3, 4)]
    assert cpmg_positions(4) == [Fraction(k, 8) for k in (1, 3, 5, 7)]


def test_udd_small_n_exact():
    assert udd_positions(1) == [Fraction(1, 2)]
    assert udd_positions(2) == [Fraction(1, 4), Fraction(3, 4)]
    assert udd_positions(2) == cpmg_positions(2)


def test_udd6_against_multiprecision():
    # reference: sin^2(pi j / 14) at 50 digits
    with mpmath.workdps(50):
        ref = [mpmath.sin(mpmath.pi * j / 14) ** 2 for j in range(1, 7)]
        got = udd_positions(6)
        for g, r in zip(got, ref):
            assert abs(mpmath.mpf(g.numerator) / g.denominator - r) < mpmath.mpf("1e-45")
    d = np.array([float(x) for x in got])
    assert np.all(np.diff(d) > 0)
    np.testing.assert_allclose(d + d[::-1], 1.0, rtol=0, atol=1e-16)


def test_udd6_frozen_values():
    frozen = [0.049515566048790437, 0.18825509907063323, 0.3887395330218428,
              0.6112604669781572, 0.81174490092936677, 0.95048443395120956]
    np.testing.assert_allclose([float(x) for x in udd_positions(6)], frozen, rtol=1e-15)


def test_pdd_positions():
    assert pdd_positions(1) == [Fraction(1, 2)]
    assert pdd_positions(3) == [Fraction(1, 4), Fraction(1, 2), Fraction(3, 4)]
    assert pdd_positions(4) == [Fraction(k, 5) for k in range(1, 5)]


@pytest.mark.parametrize("ctor", [cpmg_positions, udd_positions, pdd_positions])
@pytest.mark.parametrize("bad", [0, -1, 2.5])
def test_family_rejects_bad_count(ctor, bad):
    with pytest.raises(SequenceError):
        ctor(bad)


def test_hahn_echo_at_lab_settings():
    seq = make_sequence([0.5], 30e-3, 185e-6)
    assert seq.n == 1
    assert seq.phi_pi == pytest.approx(185e-6 / 30e-3, rel=1e-15)
    assert seq.phi_pi == pytest.approx(6.17e-3, abs=1e-5)


def test_overlap_rejected():
    with pytest.raises(OverlapError):
        make_sequence([0.5, 0.5004], 30e-3, 185e-6)


def test_free_evolution_allowed():
    seq = make_sequence([], 1e-3, 0.0)
    assert seq.n == 0
    assert render_time_domain(seq).values == (1,)


def test_ordering_and_boundary_errors():
    with pytest.raises(OrderingError):
        make_sequence([0.6, 0.4], 1.0)
    with pytest.raises(OrderingError):
        make_sequence([0.0, 0.5], 1.0)
    with pytest.raises(BoundaryError):
        make_sequence([0.01], 1.0, 0.05)
    with pytest.raises(SequenceError):
        make_sequence([0.5], -1.0)


def test_direct_construction_blocked():
    with pytest.raises(TypeError):
        PulseSequence((Fraction(1, 2),), 1.0)


def test_render_hahn_delta_pulses():
    tdf = render_time_domain(make_sequence([0.5], 2.0))
    assert tdf.segments == [(0.0, 1.0, 1), (1.0, 2.0, -1)]


def test_render_cpmg2_finite_pulses():
    tdf = render_time_domain(make_sequence(cpmg_positions(2), 1.0, 0.1))
    assert [v for *_, v in tdf.segments] == [1, 0, -1, 0, 1]
    zeros = [(a, b) for a, b, v in tdf.segments if v == 0]
    np.testing.assert_allclose([(a + b) / 2 for a, b in zeros], [0.25, 0.75], atol=1e-15)
    np.testing.assert_allclose([b - a for a, b in zeros], [0.1, 0.1], atol=1e-15)


def test_time_domain_evaluation():
    tdf = render_time_domain(make_sequence([0.5], 1.0))
    np.testing.assert_array_equal(tdf([0.25, 0.75, 1.5]), [1.0, -1.0, 0.0])


def test_sequence_file_roundtrip():
    seq = family_sequence("udd", 6, 30e-3, 185e-6)
    d = seq.to_dict()
    assert set(d) == {"n", "deltas", "tau_s", "tau_pi_s", "label"}
    back = PulseSequence.from_dict(d)
    assert back.same_as(seq, tol=1e-16)
    with pytest.raises(SequenceError):
        PulseSequence.from_dict({**d, "n": 5})


def test_quantized_positions_on_grid():
    seq = family_sequence("udd", 6, 30e-3).quantized(50e-9)
    ticks = seq.delta_array * seq.tau / 50e-9
    np.testing.assert_allclose(ticks, np.round(ticks), atol=1e-6)


def test_max_pulse_fraction():
    assert max_pulse_fraction(cpmg_positions(2)) == Fraction(1, 2)
    seq = make_sequence(cpmg_positions(2), 1.0, 0.5)
    assert seq.phi_pi == 0.5


positions = st.lists(st.floats(0.001, 0.999), min_size=1, max_size=12, unique=True).map(sorted)


@settings(max_examples=60, deadline=None)
@given(positions, st.floats(0.0, 1.0))
def test_render_partitions_tau(deltas, frac):
    phi = float(max_pulse_fraction(deltas)) * frac
    try:
        seq = make_sequence(deltas, 1e-3, phi * 1e-3)
    except SequenceError:
        return
    tdf = render_time_domain(seq)
    widths = tdf.widths
    assert np.all(widths >= -1e-18)
    assert widths.sum() == pytest.approx(1e-3, rel=1e-12)
    nonzero = [v for v in tdf.values if v]
    assert nonzero[0] == 1
    assert all(a == -b for a, b in zip(nonzero, nonzero[1:]))
    if seq.tau_pi > 0:
        exact = [b - a for a, b in zip(tdf.edges, tdf.edges[1:])]
        assert all(w == seq.phi_pi_exact for w, v in zip(exact, tdf.values) if v == 0)
