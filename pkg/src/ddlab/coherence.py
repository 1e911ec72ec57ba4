"""Coherence decay ``chi`` of a pulse sequence in a noise spectrum.

    chi(tau) = (2/pi) int_0^inf S(w) / w^2 F(w tau) dw,   W = exp(-chi),   p = (1 - W) / 2

The integral is done in the dimensionless variable ``z = w tau`` with
adaptive Gauss-Kronrod panels: log-spaced decades at low z, panels no wider
than pi/4 where F oscillates, and mandatory breakpoints at every cutoff and
spur edge.  High-frequency tails of soft spectra are truncated once a rigorous
bound on the remainder is negligible; the bound is added to the error estimate.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .filters import filter_function
from .quadrature import integrate_panels
from .sequences import FAMILIES, PulseSequence, SequenceError, make_sequence
from .spectra import NoiseSpectrum

__all__ = [
    "CoherenceResult",
    "QuadratureWarning",
    "chi",
    "coherence",
    "decay_curve",
]

DEFAULT_RTOL = 1e-8
Z_SMALL = 1e-4
_LOG_PER_DECADE = 8
_MAX_PANEL = math.pi / 4


class QuadratureWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class CoherenceResult:
    """Coherence of one sequence at one duration.

    ``p = (1 - W) / 2`` is the error probability (normalised counts, saturating
    at 0.5).  ``chi_error`` is the quadrature error estimate; ``converged`` is
    False when the requested tolerance was not met.  A point that could not be
    evaluated carries NaNs and a ``failure`` message.
    """

    tau: float
    chi: float
    W: float
    p: float
    chi_error: float = 0.0
    converged: bool = True
    failure: str | None = None
    label: str = ""

    @classmethod
    def from_chi(cls, tau, chi, chi_error=0.0, converged=True, label=""):
        W = math.exp(-chi)
        return cls(tau, chi, W, (1.0 - W) / 2.0, chi_error, converged, None, label)

    @classmethod
    def failed(cls, tau, message, label=""):
        nan = float("nan")
        return cls(tau, nan, nan, nan, nan, False, message, label)


def _panel_edges(z_lo: float, z_hi: float, extra: Sequence[float]) -> np.ndarray:
    edges = [z_lo]
    z_sw = _MAX_PANEL / (10 ** (1 / _LOG_PER_DECADE) - 1)
    if z_lo < min(z_sw, z_hi):
        ndec = math.log10(min(z_sw, z_hi) / z_lo)
        k = max(1, int(math.ceil(ndec * _LOG_PER_DECADE)))
        edges += list(np.geomspace(z_lo, min(z_sw, z_hi), k + 1)[1:])
    start = max(z_lo, min(z_sw, z_hi))
    if z_hi > start:
        k = int(math.ceil((z_hi - start) / _MAX_PANEL))
        edges += list(np.linspace(start, z_hi, k + 1)[1:])
    edges += [x for x in extra if z_lo < x < z_hi]
    return np.unique(np.asarray(edges))


def chi(seq: PulseSequence, spec: NoiseSpectrum, rtol: float = DEFAULT_RTOL,
        strict: bool = False) -> CoherenceResult:
    """Decay exponent of ``seq`` under ``spec``.

    Parameters
    ----------
    seq : PulseSequence
    spec : NoiseSpectrum
    rtol : float
        Relative quadrature tolerance.
    strict : bool
        Raise ``ArithmeticError`` instead of warning when the tolerance is
        not met.
    """
    tau = seq.tau
    if spec.is_zero:
        return CoherenceResult.from_chi(tau, 0.0, label=seq.label)
    lo, hi = spec.support()
    if hi <= lo:
        return CoherenceResult.from_chi(tau, 0.0, label=seq.label)
    n = seq.n
    fmax = (2.0 * n + 2.0) ** 2
    pref = 2.0 / math.pi

    def integrand(z):
        w = z / tau
        return pref * tau * spec.evaluate(w) * filter_function(seq, z, refine=False) / (z * z)

    z_lo = lo * tau if lo > 0 else Z_SMALL
    z_cap = 1e4 * (n + 1)
    z_top = min(hi * tau, z_cap)
    bps = [b * tau for b in spec.breakpoints()]

    total = 0.0
    err = 0.0
    converged = True
    evals = 0

    # below z_lo when the spectrum reaches down to zero frequency:
    # integrand ~ c z^q with q from two samples
    if lo <= 0:
        g1, g0 = integrand(np.array([z_lo, 0.5 * z_lo]))
        if g1 > 0 and g0 > 0:
            q = math.log2(g1 / g0)
            if q > -1:
                part = g1 * z_lo / (q + 1)
                total += part
                err += 1e-3 * part
            else:
                err += math.inf
        evals += 2

    z_a = z_lo
    z_b = min(z_top, max(100.0 * (n + 1), 10 * z_lo))
    while True:
        res = integrate_panels(integrand, _panel_edges(z_a, z_b, bps), rtol=rtol,
                               atol=rtol * abs(total) * 1e-2)
        total += res.value
        err += res.error
        evals += res.evaluations
        converged &= res.converged
        if z_b >= z_top:
            break
        tail = pref * fmax * spec.tail_bound(z_b / tau)
        if tail <= 1e-2 * rtol * abs(total):
            err += tail
            break
        z_a, z_b = z_b, min(z_top, 2.0 * z_b)
    if z_top < hi * tau:
        err += pref * fmax * spec.tail_bound(z_top / tau)
    converged = converged and err <= max(rtol * abs(total), 1e-300) * 1.5
    if not converged:
        msg = (f"chi quadrature for {seq.label or 'sequence'} at tau={tau:g} s did not reach "
               f"rtol={rtol:g} (estimate {total:.6g} +- {err:.2g})")
        if strict:
            raise ArithmeticError(msg)
        warnings.warn(msg, QuadratureWarning, stacklevel=2)
    return CoherenceResult.from_chi(tau, total, err, converged, label=seq.label)


def coherence(seq: PulseSequence, spec: NoiseSpectrum, **kw) -> CoherenceResult:
    """Alias of :func:`chi`."""
    return chi(seq, spec, **kw)


def _resolve_family(family) -> tuple[Callable[[int], list], str]:
    if isinstance(family, str):
        try:
            return FAMILIES[family.lower()], family.upper()
        except KeyError:
            raise SequenceError(f"unknown family {family!r}") from None
    return family, getattr(family, "__name__", "custom")


def decay_curve(family, n: int, spec: NoiseSpectrum, taus: Sequence[float],
                tau_pi: float = 0.0, rtol: float = DEFAULT_RTOL,
                workers: int | None = 1) -> list[CoherenceResult]:
    """Coherence of a sequence family over a grid of total durations.

    ``family`` is a name in :data:`~ddlab.sequences.FAMILIES` or a callable
    ``n -> positions``.  Points where the sequence cannot be built (pulses
    overlapping at short tau) come back as failed results; the rest of the
    curve is still computed.  With ``workers > 1`` points are evaluated
    concurrently; output order always follows ``taus``.
    """
    ctor, name = _resolve_family(family)
    deltas = ctor(n) if n > 0 else []
    label = f"{name}{n}"

    def one(tau):
        try:
            seq = make_sequence(deltas, tau, tau_pi, label=label)
        except SequenceError as exc:
            return CoherenceResult.failed(float(tau), str(exc), label)
        return chi(seq, spec, rtol=rtol)

    taus = [float(t) for t in taus]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, taus))
    return [one(t) for t in taus]
