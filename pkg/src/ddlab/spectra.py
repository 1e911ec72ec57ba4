"""One-sided noise power spectral densities S(omega) of the dephasing field.

Frequencies are angular (rad/s) throughout.  The normalisation is the one
under which the coherence integral is exact for stationary Gaussian noise:
the autocovariance of beta is ``C(t) = (4/pi) * int_0^inf S(w) cos(w t) dw``.

Three concrete kinds are provided: :class:`PowerLawSpectrum` (with optional
sharp cutoffs and narrow spurs), :class:`TabulatedSpectrum` and
:class:`CompositeSpectrum` (a sum of others).  Every spectrum carries an
overall scale ``alpha``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import erfc

__all__ = [
    "SpectrumError",
    "Spur",
    "NoiseSpectrum",
    "PowerLawSpectrum",
    "TabulatedSpectrum",
    "CompositeSpectrum",
    "evaluate",
    "ohmic_preset",
    "one_over_f_preset",
    "ambient_preset",
    "load_tabulated",
    "read_psd_csv",
    "write_psd_csv",
    "spectrum_from_config",
    "TWO_PI",
    "OHMIC_AMPLITUDE",
    "ONE_OVER_F_AMPLITUDE",
    "AMBIENT_AMPLITUDE",
    "AMBIENT_SPUR_HEIGHT",
]

TWO_PI = 2.0 * math.pi

# Reference amplitudes of the presets (alpha = 1).  Absolute calibration of
# the measured spectra is not recoverable, so these only set where the decay
# happens on the millisecond scale; alpha rescales them.
OHMIC_AMPLITUDE = 1.5e2           # S = A * omega, rad^2/s per rad/s
ONE_OVER_F_AMPLITUDE = 1.0e3      # S = A / omega
AMBIENT_AMPLITUDE = 5.0e11        # S = A / omega^4
AMBIENT_SPUR_HEIGHT = 1.0e3       # peak PSD of the 153 Hz spur at gamma = 1

SPUR_SUPPORT_SIGMAS = 5.0


class SpectrumError(ValueError):
    """Invalid or non-integrable spectrum."""


def _as_omega(omega) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise SpectrumError("angular frequency must be non-negative")
    return w


@dataclass(frozen=True)
class Spur:
    """Narrow Gaussian peak added to a spectrum.

    ``width`` is the Gaussian standard deviation in rad/s; the profile is
    truncated at ``SPUR_SUPPORT_SIGMAS`` widths so that the spur is strictly
    local.  The peak value is ``height * gamma``.
    """

    center: float
    width: float
    gamma: float = 1.0
    height: float = 1.0

    def __post_init__(self):
        if not (self.center > 0 and self.width > 0):
            raise SpectrumError("spur centre and width must be positive")
        if self.gamma < 0 or self.height < 0:
            raise SpectrumError("spur gamma and height must be non-negative")

    @property
    def support(self) -> tuple[float, float]:
        h = SPUR_SUPPORT_SIGMAS * self.width
        return max(self.center - h, 0.0), self.center + h

    def __call__(self, w: np.ndarray) -> np.ndarray:
        x = (w - self.center) / self.width
        out = self.height * self.gamma * np.exp(-0.5 * x * x)
        return np.where(np.abs(x) <= SPUR_SUPPORT_SIGMAS, out, 0.0)

    def breakpoints(self) -> list[float]:
        return [self.center + k * self.width
                for k in (-5, -4, -3, -2, -1, 0, 1, 2, 3, 4, 5)
                if self.center + k * self.width > 0]

    def integral_over_w2_above(self, w0: float) -> float:
        """Upper bound of ``int_{w0}^inf spur(w) / w^2 dw``."""
        lo, hi = self.support
        if w0 >= hi:
            return 0.0
        a = max(w0, lo)
        mass = 0.5 * erfc((a - self.center) / (math.sqrt(2) * self.width))
        return self.height * self.gamma * self.width * math.sqrt(2 * math.pi) * mass / a**2

    def to_config(self) -> dict:
        return {"center_hz": self.center / TWO_PI, "width_hz": self.width / TWO_PI,
                "gamma": self.gamma, "height": self.height}


class NoiseSpectrum:
    """Interface shared by all spectra.

    Subclasses implement ``_shape`` (the unscaled PSD), ``support``,
    ``breakpoints`` and ``_tail`` ; ``alpha`` is applied here.
    """

    alpha: float

    def __call__(self, omega) -> np.ndarray:
        return self.evaluate(omega)

    def evaluate(self, omega):
        """PSD at angular frequency ``omega`` (scalar or array)."""
        w = _as_omega(omega)
        out = self.alpha * self._shape(np.atleast_1d(w)) if self.alpha else np.zeros(np.shape(np.atleast_1d(w)))
        out = np.maximum(out, 0.0)
        return float(out[0]) if np.ndim(omega) == 0 else out.reshape(np.shape(w))

    @property
    def is_zero(self) -> bool:
        return self.alpha == 0

    def support(self) -> tuple[float, float]:
        """``(lo, hi)`` outside which S is identically zero (hi may be inf)."""
        raise NotImplementedError

    def breakpoints(self) -> list[float]:
        """Frequencies where S is not smooth (cutoffs, spur edges, table knots)."""
        return []

    def tail_bound(self, omega: float) -> float:
        """Upper bound of ``int_omega^inf S(w) / w^2 dw``."""
        return self.alpha * self._tail(float(omega))

    def with_alpha(self, alpha: float) -> "NoiseSpectrum":
        if alpha < 0:
            raise SpectrumError("alpha must be non-negative")
        return replace(self, alpha=float(alpha))

    def __add__(self, other: "NoiseSpectrum") -> "CompositeSpectrum":
        return CompositeSpectrum((self, other))

    def to_config(self) -> dict:
        raise NotImplementedError

    def _shape(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _tail(self, w0: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerLawSpectrum(NoiseSpectrum):
    """``S = alpha * (A * w**p * [w_lo <= w <= w_hi] + sum(spurs))``.

    ``cutoff='sharp'`` zeroes the power law above ``omega_hi``;
    ``cutoff='none'`` keeps it to infinity, which needs ``p < -1``.
    The low cutoff is always sharp and is required for ``p <= -1``.
    """

    exponent: float
    amplitude: float = 1.0
    omega_lo: float = 0.0
    omega_hi: float = math.inf
    cutoff: str = "sharp"
    spurs: tuple[Spur, ...] = ()
    alpha: float = 1.0
    name: str = "power-law"

    def __post_init__(self):
        object.__setattr__(self, "spurs", tuple(self.spurs))
        if self.cutoff not in ("sharp", "none"):
            raise SpectrumError(f"cutoff must be 'sharp' or 'none', got {self.cutoff!r}")
        if self.alpha < 0 or self.amplitude < 0:
            raise SpectrumError("alpha and amplitude must be non-negative")
        if self.omega_lo < 0:
            raise SpectrumError("omega_lo must be non-negative")
        p = self.exponent
        if p <= -1 and not self.omega_lo > 0:
            raise SpectrumError(f"exponent {p} needs omega_lo > 0 to be integrable")
        if self.cutoff == "sharp":
            if not math.isfinite(self.omega_hi):
                raise SpectrumError("a sharp cutoff needs a finite omega_hi")
            if self.omega_hi <= self.omega_lo:
                raise SpectrumError("omega_hi must exceed omega_lo")
        elif p >= -1:
            raise SpectrumError(f"exponent {p} without a high cutoff is not integrable")

    @property
    def _hi(self) -> float:
        return self.omega_hi if self.cutoff == "sharp" else math.inf

    def _shape(self, w):
        band = (w >= self.omega_lo) & (w <= self._hi) & (w > 0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.where(band, self.amplitude * np.power(np.where(band, w, 1.0), self.exponent), 0.0)
        for s in self.spurs:
            out = out + s(w)
        return out

    def support(self):
        lo, hi = self.omega_lo, self._hi
        if self.amplitude == 0:
            lo, hi = math.inf, 0.0
        for s in self.spurs:
            if s.gamma * s.height > 0:
                slo, shi = s.support
                lo, hi = min(lo, slo), max(hi, shi)
        if lo > hi:
            return 0.0, 0.0
        return lo, hi

    def breakpoints(self):
        pts = [self.omega_lo] if self.omega_lo > 0 else []
        if self.cutoff == "sharp":
            pts.append(self.omega_hi)
        for s in self.spurs:
            pts += s.breakpoints()
        return sorted(pts)

    def _tail(self, w0):
        p, A = self.exponent, self.amplitude
        total = sum(s.integral_over_w2_above(w0) for s in self.spurs)
        a = max(w0, self.omega_lo)
        hi = self._hi
        if A and a < hi:
            q = p - 1.0  # antiderivative of w^(p-2)
            if math.isinf(hi):
                total += A * a**q / (-q)
            elif q == 0:
                total += A * math.log(hi / a)
            else:
                total += A * (hi**q - a**q) / q
        return total

    def band_integral(self) -> float:
        """Closed-form ``int S dw`` of the power-law part (alpha included)."""
        p, A = self.exponent, self.amplitude
        lo, hi = self.omega_lo, self._hi
        if p == -1:
            val = A * math.log(hi / lo)
        else:
            val = A * (hi ** (p + 1) - (lo ** (p + 1) if lo > 0 else 0.0)) / (p + 1)
        return self.alpha * val

    def to_config(self):
        cfg = {"kind": "power-law", "exponent": self.exponent, "amplitude": self.amplitude,
               "alpha": self.alpha, "low_cutoff_hz": self.omega_lo / TWO_PI,
               "cutoff": self.cutoff,
               "spurs": [s.to_config() for s in self.spurs], "name": self.name}
        if self.cutoff == "sharp":
            cfg["cutoff_hz"] = self.omega_hi / TWO_PI
        return cfg


@dataclass(frozen=True)
class TabulatedSpectrum(NoiseSpectrum):
    """Sampled spectrum with log-log linear interpolation.

    Intervals where either endpoint is zero (or omega is zero) fall back to
    linear interpolation.  Outside the table span the value is
    ``extrapolation`` (default 0).
    """

    omega: np.ndarray
    psd: np.ndarray
    alpha: float = 1.0
    extrapolation: float = 0.0
    name: str = "tabulated"

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        s = np.asarray(self.psd, dtype=float)
        if w.ndim != 1 or w.shape != s.shape:
            raise SpectrumError("omega and psd must be 1-D arrays of equal length")
        if len(w) < 2:
            raise SpectrumError("a tabulated spectrum needs at least 2 rows")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(s)):
            raise SpectrumError("tabulated spectrum contains non-finite values")
        if w[0] < 0 or np.any(np.diff(w) <= 0):
            raise SpectrumError("tabulated frequencies must be non-negative and strictly increasing")
        if np.any(s < 0):
            raise SpectrumError("tabulated PSD values must be non-negative")
        if self.extrapolation < 0 or self.alpha < 0:
            raise SpectrumError("alpha and extrapolation must be non-negative")
        w.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "psd", s)

    def __hash__(self):
        return hash((self.omega.tobytes(), self.psd.tobytes(), self.alpha, self.extrapolation))

    def __eq__(self, other):
        if not isinstance(other, TabulatedSpectrum):
            return NotImplemented
        return (np.array_equal(self.omega, other.omega) and np.array_equal(self.psd, other.psd)
                and self.alpha == other.alpha and self.extrapolation == other.extrapolation)

    def _shape(self, w):
        x, y = self.omega, self.psd
        out = np.full(w.shape, float(self.extrapolation))
        inside = (w >= x[0]) & (w <= x[-1])
        wi = w[inside]
        k = np.clip(np.searchsorted(x, wi, side="right") - 1, 0, len(x) - 2)
        x0, x1, y0, y1 = x[k], x[k + 1], y[k], y[k + 1]
        t = (wi - x0) / (x1 - x0)
        lin = y0 + t * (y1 - y0)
        loglog = (x0 > 0) & (y0 > 0) & (y1 > 0) & (wi > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.log(np.where(loglog, wi, 1.0) / np.where(loglog, x0, 1.0)) / np.log(
                np.where(loglog, x1, 2.0) / np.where(loglog, x0, 1.0))
            ll = np.where(loglog, y0, 1.0) * np.power(
                np.where(loglog, y1, 1.0) / np.where(loglog, y0, 1.0), u)
        out[inside] = np.where(loglog, ll, lin)
        return out

    def support(self):
        if self.extrapolation > 0:
            return 0.0, math.inf
        nz = np.nonzero(self.psd)[0]
        if len(nz) == 0:
            return 0.0, 0.0
        lo = self.omega[max(nz[0] - 1, 0)]
        hi = self.omega[min(nz[-1] + 1, len(self.omega) - 1)]
        return float(lo), float(hi)

    def breakpoints(self):
        return [float(x) for x in self.omega if x > 0]

    def _tail(self, w0):
        if self.extrapolation > 0:
            return math.inf
        x, y = self.omega, self.psd
        total = 0.0
        for i in range(len(x) - 1):
            a, b = max(x[i], w0), x[i + 1]
            if b <= a or a <= 0:
                if a <= 0 and b > 0 and max(y[i], y[i + 1]) > 0:
                    return math.inf
                continue
            total += max(y[i], y[i + 1]) * (1.0 / a - 1.0 / b)
        return total

    def to_config(self):
        return {"kind": "tabulated", "alpha": self.alpha, "extrapolation": self.extrapolation,
                "freq_hz": (self.omega / TWO_PI).tolist(), "psd": self.psd.tolist(),
                "name": self.name}


@dataclass(frozen=True)
class CompositeSpectrum(NoiseSpectrum):
    """Sum of spectra, scaled as a whole by ``alpha``."""

    parts: tuple[NoiseSpectrum, ...]
    alpha: float = 1.0
    name: str = "composite"

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise SpectrumError("a composite spectrum needs at least one part")
        if self.alpha < 0:
            raise SpectrumError("alpha must be non-negative")

    def _shape(self, w):
        return sum(p.evaluate(w) for p in self.parts)

    @property
    def is_zero(self):
        return self.alpha == 0 or all(p.is_zero for p in self.parts)

    def support(self):
        sup = [p.support() for p in self.parts if not p.is_zero]
        sup = [s for s in sup if s[1] > s[0]]
        if not sup:
            return 0.0, 0.0
        return min(s[0] for s in sup), max(s[1] for s in sup)

    def breakpoints(self):
        return sorted({b for p in self.parts for b in p.breakpoints()})

    def _tail(self, w0):
        return sum(p.tail_bound(w0) for p in self.parts)

    def to_config(self):
        return {"kind": "composite-sum", "alpha": self.alpha,
                "parts": [p.to_config() for p in self.parts], "name": self.name}


def evaluate(spec: NoiseSpectrum, omega):
    """PSD of ``spec`` at angular frequency ``omega``."""
    return spec.evaluate(omega)


def ohmic_preset(alpha: float = 1.0, cutoff_hz: float = 500.0,
                 amplitude: float = OHMIC_AMPLITUDE) -> PowerLawSpectrum:
    """Ohmic noise ``S ~ omega`` with a sharp high-frequency cutoff."""
    return PowerLawSpectrum(1.0, amplitude, 0.0, TWO_PI * cutoff_hz, "sharp",
                            alpha=alpha, name="ohmic")


def one_over_f_preset(alpha: float = 1.0, cutoff_hz: float = 500.0, low_hz: float = 0.01,
                      amplitude: float = ONE_OVER_F_AMPLITUDE) -> PowerLawSpectrum:
    """``1/omega`` noise between ``low_hz`` and a sharp ``cutoff_hz``."""
    return PowerLawSpectrum(-1.0, amplitude, TWO_PI * low_hz, TWO_PI * cutoff_hz, "sharp",
                            alpha=alpha, name="one-over-f")


def ambient_preset(alpha: float = 1.0, gamma: float = 1.0, spur_hz: float = 153.0,
                   spur_fraction: float = 0.01, low_hz: float = 0.01,
                   amplitude: float = AMBIENT_AMPLITUDE,
                   spur_height: float = AMBIENT_SPUR_HEIGHT) -> PowerLawSpectrum:
    """Ambient magnetic-field noise: ``1/omega^4`` plus a spur near 153 Hz.

    The power law has no high cutoff and is zero below ``low_hz``.  The spur
    is a Gaussian of standard deviation ``spur_fraction`` times its centre;
    ``gamma`` scales its height.
    """
    if alpha < 0 or gamma < 0:
        raise SpectrumError("alpha and gamma must be non-negative")
    spur = Spur(TWO_PI * spur_hz, spur_fraction * TWO_PI * spur_hz, gamma, spur_height)
    return PowerLawSpectrum(-4.0, amplitude, TWO_PI * low_hz, math.inf, "none",
                            spurs=(spur,) if gamma > 0 else (), alpha=alpha, name="ambient")


def load_tabulated(rows: Iterable[Sequence[float]], frequency_unit: str = "Hz",
                   alpha: float = 1.0, extrapolation: float = 0.0,
                   name: str = "tabulated") -> TabulatedSpectrum:
    """Build a tabulated spectrum from ``(frequency, psd)`` rows.

    ``frequency_unit`` is ``'Hz'`` or ``'rad/s'``; the PSD values are taken
    as-is in the package convention.
    """
    arr = np.asarray([tuple(r) for r in rows], dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise SpectrumError("rows must be (frequency, psd) pairs")
    unit = frequency_unit.lower().replace(" ", "")
    if unit in ("hz",):
        w = arr[:, 0] * TWO_PI
    elif unit in ("rad/s", "rad_per_s", "rads"):
        w = arr[:, 0]
    else:
        raise SpectrumError(f"unknown frequency unit {frequency_unit!r}")
    return TabulatedSpectrum(w, arr[:, 1], alpha=alpha, extrapolation=extrapolation, name=name)


def read_psd_csv(path, **kwargs) -> TabulatedSpectrum:
    """Read a two-column ``freq_hz,psd`` CSV file."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip().lower() for h in header[:2]] != ["freq_hz", "psd"]:
            raise SpectrumError(f"{path}: expected header 'freq_hz,psd', got {header!r}")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    return load_tabulated(rows, "Hz", **kwargs)


def write_psd_csv(path, spec: TabulatedSpectrum) -> None:
    from .io import write_csv

    values = spec.evaluate(spec.omega)
    write_csv(path, ["freq_hz", "psd"], np.column_stack([spec.omega / TWO_PI, values]))


def spectrum_from_config(cfg: dict, base_dir: str | Path | None = None) -> NoiseSpectrum:
    """Build a spectrum from its JSON configuration.

    Recognised ``kind`` values: ``power-law``, ``ohmic``, ``one-over-f``,
    ``ambient``, ``tabulated`` (inline ``freq_hz``/``psd`` lists or a
    ``path`` to a CSV) and ``composite-sum`` (``parts``).
    """
    kind = cfg.get("kind", "power-law").lower()
    alpha = float(cfg.get("alpha", 1.0))
    if kind == "ohmic":
        return ohmic_preset(alpha, float(cfg.get("cutoff_hz", 500.0)),
                            float(cfg.get("amplitude", OHMIC_AMPLITUDE)))
    if kind in ("one-over-f", "1/f"):
        return one_over_f_preset(alpha, float(cfg.get("cutoff_hz", 500.0)),
                                 float(cfg.get("low_cutoff_hz", 0.01)),
                                 float(cfg.get("amplitude", ONE_OVER_F_AMPLITUDE)))
    if kind == "ambient":
        return ambient_preset(alpha, float(cfg.get("gamma", 1.0)),
                              float(cfg.get("spur_hz", 153.0)),
                              float(cfg.get("spur_fraction", 0.01)),
                              float(cfg.get("low_cutoff_hz", 0.01)),
                              float(cfg.get("amplitude", AMBIENT_AMPLITUDE)),
                              float(cfg.get("spur_height", AMBIENT_SPUR_HEIGHT)))
    if kind == "power-law":
        cutoff_hz = cfg.get("cutoff_hz")
        spurs = []
        for s in cfg.get("spurs", []):
            c = TWO_PI * float(s["center_hz"])
            width = TWO_PI * float(s["width_hz"]) if "width_hz" in s else 0.01 * c
            spurs.append(Spur(c, width, float(s.get("gamma", 1.0)), float(s.get("height", 1.0))))
        return PowerLawSpectrum(
            float(cfg["exponent"]), float(cfg.get("amplitude", 1.0)),
            TWO_PI * float(cfg.get("low_cutoff_hz", 0.0)),
            TWO_PI * float(cutoff_hz) if cutoff_hz is not None else math.inf,
            cfg.get("cutoff", "sharp" if cutoff_hz is not None else "none"),
            spurs=tuple(spurs), alpha=alpha, name=cfg.get("name", "power-law"))
    if kind == "tabulated":
        extrap = float(cfg.get("extrapolation", 0.0))
        if "path" in cfg:
            p = Path(cfg["path"])
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            return read_psd_csv(p, alpha=alpha, extrapolation=extrap)
        return load_tabulated(zip(cfg["freq_hz"], cfg["psd"]), "Hz", alpha=alpha,
                              extrapolation=extrap)
    if kind in ("composite-sum", "composite"):
        parts = tuple(spectrum_from_config(c, base_dir) for c in cfg["parts"])
        return CompositeSpectrum(parts, alpha=alpha)
    raise SpectrumError(f"unknown spectrum kind {kind!r}")
