"""Frequency-domain filter functions F(omega * tau) of pulse sequences.

``filter_function`` evaluates the closed-form finite-pulse expression

    F(z) = |1 + (-1)^(n+1) e^{iz} + 2 cos(phi z / 2) sum_j (-1)^j e^{i delta_j z}|^2

in double precision.  For small z that sum cancels catastrophically (UDD
kills the first n Taylor coefficients), so there the same amplitude is also
summed as a power series whose coefficients are computed exactly from the
pulse fractions; each point takes whichever route has the smaller rounding
bound.

``filter_via_fft_oracle`` is an independent check: it integrates the rendered
time-domain filter segment by segment in multiprecision arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

from .sequences import PulseSequence, render_time_domain

__all__ = [
    "FilterEvaluation",
    "filter_function",
    "filter_via_fft_oracle",
    "filter_curve",
    "series_coefficients",
    "suppression_order",
]

_EPS = np.finfo(float).eps
_SERIES_TERMS = 64
_SERIES_ZMAX = 8.0


def series_coefficients(seq: PulseSequence, terms: int = _SERIES_TERMS) -> list[Fraction]:
    """Exact Taylor coefficients ``b_k`` of the filter amplitude.

    The amplitude is ``sum_k b_k (i z)^k / k!`` with
    ``b_k = [k == 0] + (-1)^(n+1) + sum_j (-1)^j ((d_j + phi/2)^k + (d_j - phi/2)^k)``,
    which follows from writing ``2 cos(phi z/2) e^{i d z}`` as two exponentials.
    """
    cache = seq.__dict__.setdefault("_series_cache", {})
    if terms in cache:
        return cache[terms]
    n = seq.n
    half = seq.phi_pi_exact / 2
    nodes = [d + half for d in seq.deltas] + [d - half for d in seq.deltas]
    # integer arithmetic over a common denominator; one reduction per term
    D = math.lcm(*(x.denominator for x in nodes)) if nodes else 1
    ints = [x.numerator * (D // x.denominator) for x in nodes]
    signs = [(-1) ** (j + 1) for j in range(n)] * 2  # (-1)^j for j = 1..n, both nodes
    end = (-1) ** (n + 1)
    powers = [1] * len(ints)
    Dk = 1
    out = []
    for k in range(terms):
        num = (end + (1 if k == 0 else 0)) * Dk + sum(sg * pw for sg, pw in zip(signs, powers))
        out.append(Fraction(num, Dk))
        powers = [pw * x for pw, x in zip(powers, ints)]
        Dk *= D
    cache[terms] = out
    return out


def suppression_order(seq: PulseSequence, rtol: float = 1e-12) -> int:
    """Index of the first non-vanishing amplitude coefficient.

    ``F(z) ~ z^(2 * order)`` as z -> 0; free evolution has order 1, a Hahn
    echo 2 and UDD-n order n + 1.
    """
    b = series_coefficients(seq)
    scale = max(1.0, 2.0 * seq.n)
    for k, bk in enumerate(b):
        if abs(float(bk)) > rtol * scale:
            return k
    return len(b)


def _series_parts(seq: PulseSequence):
    cache = seq.__dict__.setdefault("_series_float", None)
    if cache is not None:
        return cache
    b = series_coefficients(seq)
    k = np.arange(len(b))
    logfact = np.array([math.lgamma(i + 1) for i in k])
    coef = np.array([float(x) for x in b])
    # i^k pattern: real for even k (sign (-1)^(k/2)), imaginary for odd k
    re_sign = np.where(k % 2 == 0, np.where(k % 4 == 0, 1.0, -1.0), 0.0)
    im_sign = np.where(k % 2 == 1, np.where(k % 4 == 1, 1.0, -1.0), 0.0)
    parts = (coef, logfact, re_sign, im_sign)
    seq.__dict__["_series_float"] = parts
    return parts


def _amplitude_series(seq: PulseSequence, z: np.ndarray):
    """Series-summed amplitude and its absolute rounding bound."""
    coef, logfact, re_sign, im_sign = _series_parts(seq)
    re = np.zeros_like(z)
    im = np.zeros_like(z)
    mag = np.zeros_like(z)
    with np.errstate(divide="ignore"):
        logz = np.log(z)
    for k in range(len(coef)):
        if coef[k] == 0.0:
            continue
        if k == 0:
            term = np.full_like(z, coef[0])
        else:
            term = coef[k] * np.exp(k * logz - logfact[k])
        if re_sign[k]:
            re += re_sign[k] * term
        else:
            im += im_sign[k] * term
        mag += np.abs(term)
    kmax = len(coef)
    trunc = (2.0 * seq.n + 2.0) * np.exp(kmax * logz - math.lgamma(kmax + 1))
    err = 4 * _EPS * mag + trunc
    return re, im, err


def _amplitude_direct(seq: PulseSequence, z: np.ndarray):
    n = seq.n
    end = 1.0 if n % 2 == 1 else -1.0  # (-1)^(n+1)
    re = 1.0 + end * np.cos(z)
    im = end * np.sin(z)
    if n:
        sre = np.zeros_like(z)
        sim = np.zeros_like(z)
        for j, d in enumerate(seq.delta_array, start=1):
            ph = d * z
            s = 1.0 if j % 2 == 0 else -1.0
            sre += s * np.cos(ph)
            sim += s * np.sin(ph)
        c = 2.0 * np.cos(0.5 * seq.phi_pi * z)
        re += c * sre
        im += c * sim
    err = 8 * _EPS * (2.0 * n + 2.0) * (1.0 + z)
    return re, im, err


def _amplitude_mp(seq: PulseSequence, z: float, dps: int):
    with mpmath.workdps(dps):
        zz = mpmath.mpf(z)
        acc = mpmath.mpc(0)
        for j, d in enumerate(seq.deltas, start=1):
            acc += (-1) ** j * mpmath.expj(zz * mpmath.mpf(d.numerator) / d.denominator)
        phi = seq.phi_pi_exact
        acc *= 2 * mpmath.cos(zz * mpmath.mpf(phi.numerator) / phi.denominator / 2)
        acc += 1 + (-1) ** (seq.n + 1) * mpmath.expj(zz)
        return acc


def _refine(seq: PulseSequence, z: float) -> float:
    scale = 2.0 * seq.n + 2.0
    dps = 40
    while True:
        a = _amplitude_mp(seq, z, dps)
        if abs(a) > scale * mpmath.mpf(10) ** (20 - dps) or dps > 400:
            return float(abs(a) ** 2)
        dps *= 2


def filter_function(seq: PulseSequence, omega_tau, refine: bool = True,
                    refine_rtol: float = 1e-13):
    """Finite-pulse filter function ``F(omega * tau)`` of ``seq``.

    Parameters
    ----------
    seq : PulseSequence
    omega_tau : float or array_like
        Dimensionless frequency ``omega * tau`` (>= 0).
    refine : bool
        Recompute in multiprecision the points where cancellation in the
        double-precision sum could cost more than ``refine_rtol`` relative
        accuracy (near zeros of F).  Without it F is accurate in absolute
        terms only, which is all an integral over F needs.

    Returns
    -------
    float or ndarray
        ``F >= 0`` with ``F(0) = 0``.  With ``tau_pi = 0`` this is the
        delta-pulse filter function.
    """
    z = np.asarray(omega_tau, dtype=float)
    if np.any(z < 0) or np.any(np.isnan(z)):
        raise ValueError("omega_tau must be non-negative")
    flat = np.atleast_1d(z).ravel()
    re, im, err_d = _amplitude_direct(seq, flat)
    err = np.full_like(flat, 2 * _EPS * (2.0 * seq.n + 2.0))
    small = flat < _SERIES_ZMAX
    if np.any(small):
        zs = flat[small]
        sre, sim, err_s = _amplitude_series(seq, zs)
        use = err_s < err_d[small]
        idx = np.nonzero(small)[0][use]
        re[idx] = sre[use]
        im[idx] = sim[use]
        err[idx] = err_s[use]
    F = re * re + im * im
    if refine:
        bad = np.nonzero((flat > 0) & (2 * err > refine_rtol * np.sqrt(F)))[0]
        for i in bad:
            F[i] = _refine(seq, float(flat[i]))
    F[flat == 0] = 0.0
    F = F.reshape(np.shape(z)) if np.ndim(z) else F
    return float(F[0]) if np.ndim(z) == 0 else F


def filter_via_fft_oracle(seq: PulseSequence, grid, digits: int | None = None) -> np.ndarray:
    """Reference filter function by exact integration of the time-domain filter.

    ``F(z) = z^2 |int_0^1 y(s) e^{i z s} ds|^2`` where y is the rendered
    piecewise +1/0/-1 sign function; each segment integral is
    ``e^{i z m} * 2 sin(z w / 2) / z`` (midpoint m, width w) and is evaluated
    in multiprecision, so the result is accurate even where F is tiny.
    """
    tdf = render_time_domain(seq)
    z = np.atleast_1d(np.asarray(grid, dtype=float))
    segs = [(tdf.edges[i], tdf.edges[i + 1], v) for i, v in enumerate(tdf.values) if v]
    out = np.empty(z.shape)
    order = max(1, seq.n + 1)
    for i, zi in enumerate(z):
        if zi == 0:
            out[i] = 0.0
            continue
        lost = order * max(0.0, -math.log10(zi)) + math.log10(1.0 + zi)
        dps = digits or int(30 + lost + 2 * math.log10(2 + seq.n))
        with mpmath.workdps(dps):
            zz = mpmath.mpf(zi)
            acc = mpmath.mpc(0)
            for a, b, v in segs:
                ma = mpmath.mpf(a.numerator) / a.denominator
                mb = mpmath.mpf(b.numerator) / b.denominator
                mid = (ma + mb) / 2
                half = (mb - ma) / 2
                acc += v * mpmath.expj(zz * mid) * 2 * mpmath.sin(zz * half)
            out[i] = float(abs(acc) ** 2)
    return out.reshape(np.shape(grid)) if np.ndim(grid) else out


@dataclass(frozen=True)
class FilterEvaluation:
    """Filter function samples of one sequence on a grid of ``omega * tau``.

    ``variant`` is ``'finite-pulse'`` (the sequence's own ``tau_pi``) or
    ``'delta-pulse'`` (``tau_pi`` forced to zero).
    """

    sequence: PulseSequence
    omega_tau: np.ndarray
    F: np.ndarray
    variant: str


def filter_curve(seq: PulseSequence, omega_tau, variant: str = "finite-pulse") -> FilterEvaluation:
    """Evaluate ``F`` on a grid, as the finite-pulse or delta-pulse variant."""
    if variant not in ("finite-pulse", "delta-pulse"):
        raise ValueError(f"unknown variant {variant!r}")
    target = seq if variant == "finite-pulse" or seq.tau_pi == 0 else seq.with_tau(seq.tau, 0.0)
    z = np.asarray(omega_tau, dtype=float)
    return FilterEvaluation(seq, z, np.asarray(filter_function(target, z)), variant)
