"""Dynamical-decoupling pulse sequences.

A sequence is a set of pi-pulse centres given as fractions of the total
duration ``tau``.  The fractions are stored exactly (``fractions.Fraction``),
so the same sequence can be rescaled to any duration and so that moment
cancellations of e.g. UDD survive to arbitrary order.  ``tau`` and
``tau_pi`` are carried separately in seconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from numbers import Real
from typing import Callable, Sequence

import mpmath
import numpy as np

__all__ = [
    "SequenceError",
    "OrderingError",
    "OverlapError",
    "BoundaryError",
    "PulseSequence",
    "TimeDomainFilter",
    "cpmg_positions",
    "udd_positions",
    "pdd_positions",
    "FAMILIES",
    "family_sequence",
    "make_sequence",
    "max_pulse_fraction",
    "render_time_domain",
]

# absolute slack (in units of tau) when checking pulse placement; absorbs
# rounding of tau_pi = tau * gap products computed in floating point
PLACEMENT_SLACK = Fraction(1, 10**12)

_UDD_DIGITS = 60


class SequenceError(ValueError):
    """Base class for invalid pulse sequences."""


class OrderingError(SequenceError):
    pass


class OverlapError(SequenceError):
    pass


class BoundaryError(SequenceError):
    pass


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, mpmath.mpf):
        man, exp = x.man_exp
        return Fraction(int(man)) * Fraction(2) ** int(exp)
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, Real):
        if not math.isfinite(float(x)):
            raise SequenceError(f"non-finite pulse position {x!r}")
        return Fraction(float(x)) if not isinstance(x, int) else Fraction(x)
    raise TypeError(f"cannot interpret {x!r} as a pulse position")


def _check_count(n) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise SequenceError(f"pulse count must be an integer, got {n!r}")
    n = int(n)
    if n < 1:
        raise SequenceError(
            "pulse families need n >= 1; build free evolution with make_sequence([], ...)"
        )
    return n


def cpmg_positions(n: int) -> list[Fraction]:
    """CPMG pulse centres ``(2j - 1) / (2n)``, j = 1..n."""
    n = _check_count(n)
    return [Fraction(2 * j - 1, 2 * n) for j in range(1, n + 1)]


def udd_positions(n: int) -> list[Fraction]:
    """Uhrig pulse centres ``sin^2(pi j / (2n + 2))``, j = 1..n.

    The values are irrational in general; they are evaluated with 60
    significant digits and kept as exact binary fractions of that result.
    Where the rational value is known exactly (j = (n+1)/2 gives 1/2) it is
    used directly.
    """
    n = _check_count(n)
    out = []
    with mpmath.workdps(_UDD_DIGITS):
        for j in range(1, n + 1):
            if 2 * j == n + 1:
                out.append(Fraction(1, 2))
            elif 6 * j == 2 * n + 2:
                out.append(Fraction(1, 4))
            elif 6 * j == 4 * (n + 1):
                out.append(Fraction(3, 4))
            else:
                out.append(_as_fraction(mpmath.sin(mpmath.pi * j / (2 * n + 2)) ** 2))
    return out


def pdd_positions(n: int) -> list[Fraction]:
    """Evenly spaced (periodic) pulse centres ``j / (n + 1)``."""
    n = _check_count(n)
    return [Fraction(j, n + 1) for j in range(1, n + 1)]


FAMILIES: dict[str, Callable[[int], list[Fraction]]] = {
    "cpmg": cpmg_positions,
    "udd": udd_positions,
    "pdd": pdd_positions,
}


def max_pulse_fraction(deltas: Sequence) -> Fraction:
    """Largest ``tau_pi / tau`` that keeps every pulse inside and disjoint.

    Pulses may touch each other and the sequence ends, so this is the
    smallest of ``2 delta_1``, ``2 (1 - delta_n)`` and the interior gaps.
    For free evolution the answer is 1.
    """
    d = [_as_fraction(x) for x in deltas]
    if not d:
        return Fraction(1)
    gaps = [2 * d[0], 2 * (1 - d[-1])]
    gaps += [b - a for a, b in zip(d, d[1:])]
    return min(gaps)


@dataclass(frozen=True, eq=False)
class PulseSequence:
    """Validated pi-pulse sequence; build it with :func:`make_sequence`.

    Attributes
    ----------
    deltas : tuple of Fraction
        Pulse-centre positions as fractions of ``tau``.
    tau : float
        Total duration in seconds, pulses included.
    tau_pi : float
        Duration of each pi pulse in seconds.
    label : str
        Free-form name carried into files and tables.
    """

    deltas: tuple[Fraction, ...]
    tau: float
    tau_pi: float = 0.0
    label: str = ""
    _validated: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if not self._validated:
            raise TypeError("construct PulseSequence through make_sequence()")

    @property
    def n(self) -> int:
        return len(self.deltas)

    @cached_property
    def phi_pi_exact(self) -> Fraction:
        return Fraction(self.tau_pi) / Fraction(self.tau)

    @property
    def phi_pi(self) -> float:
        """Pulse-duration ratio ``tau_pi / tau``."""
        return float(self.phi_pi_exact)

    @cached_property
    def delta_array(self) -> np.ndarray:
        return np.array([float(d) for d in self.deltas], dtype=float)

    @property
    def pulse_times(self) -> np.ndarray:
        """Pulse centres in seconds."""
        return self.delta_array * self.tau

    def with_tau(self, tau: float, tau_pi: float | None = None) -> "PulseSequence":
        """Same fractional positions at a different duration."""
        return make_sequence(
            self.deltas, tau, self.tau_pi if tau_pi is None else tau_pi, label=self.label
        )

    def quantized(self, resolution: float) -> "PulseSequence":
        """Copy with pulse centres snapped to a timing grid of ``resolution`` seconds."""
        return make_sequence(
            _snap(self.deltas, self.tau, resolution), self.tau, self.tau_pi, label=self.label
        )

    def same_as(self, other: "PulseSequence", tol: float = 0.0) -> bool:
        if self.n != other.n or self.tau != other.tau or self.tau_pi != other.tau_pi:
            return False
        return all(abs(float(a - b)) <= tol for a, b in zip(self.deltas, other.deltas))

    def __eq__(self, other):
        if not isinstance(other, PulseSequence):
            return NotImplemented
        return (
            self.deltas == other.deltas
            and self.tau == other.tau
            and self.tau_pi == other.tau_pi
        )

    def __hash__(self):
        return hash((self.deltas, self.tau, self.tau_pi))

    def to_dict(self, resolution: float | None = None) -> dict:
        """Sequence-file representation (JSON-ready)."""
        deltas = self.deltas if resolution is None else _snap(self.deltas, self.tau, resolution)
        return {
            "n": self.n,
            "deltas": [float(d) for d in deltas],
            "tau_s": float(self.tau),
            "tau_pi_s": float(self.tau_pi),
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PulseSequence":
        deltas = data["deltas"]
        if "n" in data and int(data["n"]) != len(deltas):
            raise SequenceError(f"n={data['n']} does not match {len(deltas)} deltas")
        return make_sequence(
            deltas, float(data["tau_s"]), float(data.get("tau_pi_s", 0.0)),
            label=str(data.get("label", "")),
        )


def _snap(deltas, tau: float, resolution: float) -> list[Fraction]:
    if resolution <= 0:
        raise ValueError("timing resolution must be positive")
    res = Fraction(resolution)
    T = Fraction(tau)
    return [round(d * T / res) * res / T for d in deltas]


def make_sequence(deltas: Sequence, tau: float, tau_pi: float = 0.0,
                  label: str = "") -> PulseSequence:
    """Validate pulse positions and build a :class:`PulseSequence`.

    Raises
    ------
    OrderingError
        Positions not strictly increasing inside (0, 1).
    OverlapError
        Two pulses of width ``tau_pi`` overlap.
    BoundaryError
        A pulse sticks out of ``[0, tau]``.
    """
    tau = float(tau)
    tau_pi = float(tau_pi)
    if not (math.isfinite(tau) and tau > 0):
        raise SequenceError(f"tau must be positive, got {tau!r}")
    if not (math.isfinite(tau_pi) and tau_pi >= 0):
        raise SequenceError(f"tau_pi must be non-negative, got {tau_pi!r}")
    d = tuple(_as_fraction(x) for x in deltas)
    for j, x in enumerate(d):
        if not 0 < x < 1:
            raise OrderingError(f"pulse {j + 1} at fraction {float(x)!r} is outside (0, 1)")
    for j, (a, b) in enumerate(zip(d, d[1:])):
        if b <= a:
            raise OrderingError(
                f"pulse positions must increase strictly: delta_{j + 1}={float(a)!r} "
                f">= delta_{j + 2}={float(b)!r}"
            )
    phi = Fraction(tau_pi) / Fraction(tau)
    if d:
        half = phi / 2
        if d[0] - half < -PLACEMENT_SLACK:
            raise BoundaryError(
                f"first pulse starts at {float((d[0] - half) * Fraction(tau))!r} s, before t=0"
            )
        if d[-1] + half - 1 > PLACEMENT_SLACK:
            raise BoundaryError(
                f"last pulse ends at {float((d[-1] + half) * Fraction(tau))!r} s, after tau={tau!r}"
            )
        for j, (a, b) in enumerate(zip(d, d[1:])):
            if (b - a) - phi < -PLACEMENT_SLACK:
                raise OverlapError(
                    f"pulses {j + 1} and {j + 2} overlap: gap {float((b - a) * Fraction(tau))!r} s "
                    f"< tau_pi={tau_pi!r} s"
                )
    elif phi > 1:
        raise BoundaryError("tau_pi exceeds tau")
    return PulseSequence(d, tau, tau_pi, label, _validated=True)


def family_sequence(family: str, n: int, tau: float, tau_pi: float = 0.0) -> PulseSequence:
    """Shortcut: ``make_sequence(FAMILIES[family](n), tau, tau_pi)`` with a label."""
    try:
        ctor = FAMILIES[family.lower()]
    except KeyError:
        raise SequenceError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}") from None
    return make_sequence(ctor(n), tau, tau_pi, label=f"{family.upper()}{n}")


@dataclass(frozen=True)
class TimeDomainFilter:
    """Piecewise-constant sign function y(t) of a sequence.

    ``edges`` are exact fractions of ``tau`` (length ``len(values) + 1``);
    ``values`` are the segment values in {+1, 0, -1}.
    """

    edges: tuple[Fraction, ...]
    values: tuple[int, ...]
    tau: float

    @property
    def times(self) -> np.ndarray:
        return np.array([float(e) for e in self.edges]) * self.tau

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def segments(self) -> list[tuple[float, float, int]]:
        """``(start_s, end_s, value)`` triples covering ``[0, tau]``."""
        t = self.times
        return [(t[i], t[i + 1], v) for i, v in enumerate(self.values)]

    @property
    def breakpoints(self) -> list[tuple[float, int]]:
        """``(start_s, value)`` pairs; each segment runs to the next start or tau."""
        t = self.times
        return [(t[i], v) for i, v in enumerate(self.values)]

    def __call__(self, t) -> np.ndarray:
        """Evaluate y at times ``t`` (seconds); right-continuous at edges."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        out = np.asarray(self.values, dtype=float)[idx]
        return np.where((t < 0) | (t > self.tau), 0.0, out)


def render_time_domain(seq: PulseSequence, resolution: float | None = None) -> TimeDomainFilter:
    """Time-domain filter: +1, then a zero window per pulse, flipping sign across each.

    With ``tau_pi == 0`` the result has ``n + 1`` segments, otherwise
    ``2n + 1``.  ``resolution`` (seconds) snaps pulse centres to a timing grid
    before rendering.
    """
    deltas = seq.deltas if resolution is None else _snap(seq.deltas, seq.tau, resolution)
    phi = seq.phi_pi_exact
    edges = [Fraction(0)]
    values = []
    sign = 1
    for d in deltas:
        if phi:
            edges += [d - phi / 2, d + phi / 2]
            values += [sign, 0]
        else:
            edges.append(d)
            values.append(sign)
        sign = -sign
    edges.append(Fraction(1))
    values.append(sign)
    return TimeDomainFilter(tuple(edges), tuple(values), seq.tau)
