"""Time-domain noise synthesis, PSD estimation and Monte Carlo coherence.

Noise realisations are random-phase cosine sums

    beta(t) = sum_m A_m cos(w_m t + theta_m),   A_m = sqrt((8/pi) S(w_m) dw_m),

which is the amplitude that reproduces the package PSD convention
``C(t) = (4/pi) int S cos(w t) dw``.  :func:`synthesize_trace` puts the
components on the uniform FFT grid of the trace and sums them with an inverse
real FFT.  :func:`mc_coherence` needs noise down to the spectrum's lowest
frequency over a sequence far shorter than ``2 pi / omega_lo``, so it places
components on an adaptive grid in ``omega * tau`` instead and integrates each
realisation against the rendered filter with the trapezoid rule.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, signal

from .sequences import PulseSequence, render_time_domain
from .spectra import NoiseSpectrum, TabulatedSpectrum

__all__ = [
    "OracleError",
    "OracleWarning",
    "NoiseTrace",
    "McCoherence",
    "PhaseEnsemble",
    "synthesize_trace",
    "estimate_psd",
    "default_dt",
    "mc_coherence",
]

# fraction of the noise variance that may lie above Nyquist for a spectrum
# without a sharp cutoff before synthesis refuses to truncate it
NYQUIST_POWER_FRACTION = 1e-3


class OracleError(ValueError):
    pass


class OracleWarning(RuntimeWarning):
    pass


def _rng(seed: int, k: int | None = None) -> np.random.Generator:
    key = () if k is None else (k,)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


@dataclass(frozen=True, eq=False)
class NoiseTrace:
    """One seeded realisation of beta(t) on a uniform grid.

    ``samples[k]`` is beta at ``t = k * dt`` in rad/s; ``components`` is the
    number of random-phase cosines summed.
    """

    dt: float
    samples: np.ndarray
    seed: int
    spectrum: NoiseSpectrum
    components: int
    truncated_power_fraction: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.dt

    @property
    def duration(self) -> float:
        return len(self.samples) * self.dt

    def metadata(self) -> dict:
        return {"seed": self.seed, "dt_s": self.dt, "samples": len(self.samples),
                "duration_s": self.duration, "components": self.components,
                "truncated_power_fraction": self.truncated_power_fraction,
                "spectrum": self.spectrum.to_config()}

    def write(self, path) -> list[Path]:
        """CSV ``t_s,beta_rad_per_s`` plus a ``.json`` sidecar; returns both paths."""
        from .io import write_csv, write_json

        path = Path(path)
        write_csv(path, ["t_s", "beta_rad_per_s"], np.column_stack([self.times, self.samples]))
        side = path.with_suffix(".json")
        write_json(side, self.metadata())
        return [path, side]


def _power_above(spec: NoiseSpectrum, w0: float) -> tuple[float, float]:
    """``(int_w0^inf S, int_0^inf S)`` by quadrature over the support."""
    lo, hi = spec.support()
    pts = sorted(b for b in spec.breakpoints() if lo < b < hi)

    def piece(a, b):
        edges = [a] + [p for p in pts if a < p < b] + [b]
        return sum(integrate.quad(spec.evaluate, x, y, limit=200)[0]
                   for x, y in zip(edges[:-1], edges[1:]))

    total = piece(lo, hi)
    return (piece(max(w0, lo), hi) if w0 < hi else 0.0), total


def synthesize_trace(spec: NoiseSpectrum, duration: float, dt: float, seed: int) -> NoiseTrace:
    """Seeded random-phase realisation of ``spec`` on ``N = round(duration / dt)`` samples.

    Components sit on the FFT grid ``w_m = m * 2 pi / (N dt)``, ``m >= 1``,
    strictly below Nyquist; phases are uniform on ``[0, 2 pi)``.

    Raises
    ------
    OracleError
        If the spectrum has support above Nyquist (``pi / dt``); spectra
        without a sharp cutoff are truncated there when the neglected power is
        below ``NYQUIST_POWER_FRACTION`` of the total.
    """
    if not duration > 0 or not dt > 0:
        raise OracleError("duration and dt must be positive")
    N = int(round(duration / dt))
    if N < 2:
        raise OracleError("duration must span at least two samples")
    nyq = math.pi / dt
    lo, hi = spec.support()
    truncated = 0.0
    if not spec.is_zero and hi > nyq:
        if math.isfinite(hi):
            raise OracleError(f"spectrum extends to {hi:g} rad/s, above Nyquist {nyq:g} rad/s; "
                              f"reduce dt below {math.pi / hi:g} s")
        above, total = _power_above(spec, nyq)
        truncated = above / total if total > 0 else 0.0
        if truncated > NYQUIST_POWER_FRACTION:
            raise OracleError(f"{truncated:.2e} of the noise power lies above Nyquist {nyq:g} rad/s")
    dw = 2.0 * math.pi / (N * dt)
    if lo > 0 and dw > lo and not spec.is_zero:
        warnings.warn(f"duration {N * dt:g} s cannot resolve the low cutoff {lo:g} rad/s "
                      f"(grid spacing {dw:g} rad/s)", OracleWarning, stacklevel=2)
    m = np.arange(1, (N - 1) // 2 + 1)  # excludes DC and the Nyquist bin
    w = m * dw
    S = spec.evaluate(w) if not spec.is_zero else np.zeros_like(w)
    amp = np.sqrt(8.0 / math.pi * S * dw)
    theta = _rng(seed).uniform(0.0, 2.0 * math.pi, len(m))
    X = np.zeros(N // 2 + 1, dtype=complex)
    X[m] = 0.5 * N * amp * np.exp(1j * theta)
    beta = np.fft.irfft(X, n=N)
    return NoiseTrace(float(dt), beta, int(seed), spec, int(np.count_nonzero(amp)), truncated)


def estimate_psd(trace: NoiseTrace, segment_count: int = 64) -> TabulatedSpectrum:
    """Averaged-periodogram PSD of a trace in the package convention.

    Hann-windowed segments with 50 % overlap, sized so that
    ``segment_count`` of them tile the trace.  The one-sided density per Hz
    from Welch's method is divided by 8 to give S at ``omega = 2 pi f``
    (variance = ``(4/pi) int S dw``).  The DC bin is dropped.
    """
    if segment_count < 1:
        raise OracleError("segment_count must be >= 1")
    L = len(trace.samples)
    if L < 2 * segment_count:
        raise OracleError(f"trace of {L} samples is too short for {segment_count} segments")
    nperseg = (2 * L) // (segment_count + 1) if segment_count > 1 else L
    nperseg = max(2, min(nperseg, L))
    f, P = signal.welch(trace.samples, fs=1.0 / trace.dt, window="hann", nperseg=nperseg,
                        noverlap=nperseg // 2, detrend=False, scaling="density")
    keep = f > 0
    return TabulatedSpectrum(2.0 * math.pi * f[keep], P[keep] / 8.0, name="welch-estimate")


def default_dt(seq: PulseSequence) -> float:
    return seq.tau / (4096 * max(1, math.ceil(seq.n / 4)))


# adaptive component grid in z = omega * tau
_Z_FLOOR = 1e-4
_LOG_PER_DECADE = 100
_LINEAR_STEP = 0.2
_MAX_SHARE = 1e-3
_CURVATURE_TOL = 0.02
_MAX_COMPONENTS = 200_000


def _trapezoid_segments(seq: PulseSequence, dt: float):
    """Per-segment trapezoid data: (a, b, value, first grid index, last grid index)."""
    out = []
    for a, b, v in render_time_domain(seq).segments:
        if v == 0 or b <= a:
            continue
        i0 = math.ceil(a / dt - 1e-9)
        i1 = math.floor(b / dt + 1e-9)
        out.append((a, b, v, i0, i1))
    return out


def _filter_transform(segs, dt: float, w: np.ndarray) -> np.ndarray:
    """``G(w) = sum_i c_i y(t_i) exp(i w t_i)`` with trapezoid weights ``c_i``.

    The nodes are the uniform grid ``k * dt`` plus every segment edge; within a
    segment the uniform part is summed as a geometric series.
    """
    G = np.zeros(len(w), dtype=complex)
    x = w * dt
    # 1 - r and 1 - r^K without cancellation
    half = 0.5 * x
    one_minus_r = 2.0 * np.sin(half) ** 2 - 1j * np.sin(x)
    small = np.abs(x) < 1e-300
    for a, b, v, i0, i1 in segs:
        ea = np.exp(1j * w * a)
        eb = np.exp(1j * w * b)
        if i1 < i0:
            G += v * 0.5 * (b - a) * (ea + eb)
            continue
        g0, g1 = i0 * dt, i1 * dt
        e0 = np.exp(1j * w * g0)
        e1 = np.exp(1j * w * g1)
        K = i1 - i0 + 1
        hk = 0.5 * K * x
        one_minus_rk = 2.0 * np.sin(hk) ** 2 - 1j * np.sin(K * x)
        with np.errstate(divide="ignore", invalid="ignore"):
            geo = np.where(small, K, one_minus_rk / np.where(small, 1.0, one_minus_r))
        inner = dt * (e0 * geo - 0.5 * (e0 + e1))
        G += v * (0.5 * (g0 - a) * (ea + e0) + inner + 0.5 * (b - g1) * (e1 + eb))
    return G


@dataclass
class PhaseEnsemble:
    """Discretised noise for one sequence: component frequencies, cell widths,
    amplitudes and the trapezoid transform ``G`` of the rendered filter.

    The accumulated phase of realisation ``k`` is
    ``phi_k = sum_m A_m Re(exp(i theta_km) G_m)``, i.e. exactly the trapezoid
    integral of ``y(t) * beta_k(t)`` over the nodes.
    """

    seq: PulseSequence
    spec: NoiseSpectrum
    dt: float
    omega: np.ndarray
    domega: np.ndarray
    amplitude: np.ndarray
    G: np.ndarray
    segments: list = field(repr=False, default_factory=list)

    @property
    def components(self) -> int:
        return len(self.omega)

    @property
    def chi_discrete(self) -> float:
        """Half the phase variance implied by the discretised noise."""
        return float(np.sum(self.amplitude ** 2 * np.abs(self.G) ** 2) / 4.0)

    def thetas(self, seed: int, k: int) -> np.ndarray:
        return _rng(seed, k).uniform(0.0, 2.0 * math.pi, self.components)

    def phases(self, seed: int, realizations: int, start: int = 0, batch: int = 256) -> np.ndarray:
        out = np.empty(realizations)
        cr = self.amplitude * self.G.real
        ci = self.amplitude * self.G.imag
        for b0 in range(0, realizations, batch):
            ks = range(start + b0, start + min(b0 + batch, realizations))
            th = np.stack([self.thetas(seed, k) for k in ks])
            out[b0:b0 + len(th)] = np.cos(th) @ cr - np.sin(th) @ ci
        return out

    def trace(self, seed: int, k: int, t) -> np.ndarray:
        """beta_k(t) of realisation ``k`` (for checks and export)."""
        t = np.asarray(t, dtype=float)
        th = self.thetas(seed, k)
        return np.cos(np.multiply.outer(t, self.omega) + th) @ self.amplitude

    def retarget(self, seq: PulseSequence) -> "PhaseEnsemble":
        """The same noise components applied to another sequence of equal tau.

        Realisations drawn with one seed from ensembles sharing a grid are the
        same noise traces, which is what common random numbers need.
        """
        if seq.tau != self.seq.tau:
            raise OracleError("retarget needs a sequence of the same tau")
        segs = _trapezoid_segments(seq, self.dt)
        G = _filter_transform(segs, self.dt, self.omega)
        return PhaseEnsemble(seq, self.spec, self.dt, self.omega, self.domega, self.amplitude, G, segs)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Trapezoid nodes and signed weights ``c_i y(t_i)`` (for checks)."""
        ts, cs = [], []
        for a, b, v, i0, i1 in self.segments:
            t = np.concatenate([[a], np.arange(i0, i1 + 1) * self.dt, [b]])
            h = np.diff(t)
            c = np.zeros(len(t))
            c[:-1] += 0.5 * h
            c[1:] += 0.5 * h
            ts.append(t)
            cs.append(v * c)
        return np.concatenate(ts), np.concatenate(cs)


def _initial_cells(z_lo: float, z_hi: float, extra) -> np.ndarray:
    edges = [z_lo, z_hi]
    if z_lo < 1.0:
        top = min(1.0, z_hi)
        k = max(1, math.ceil(math.log10(top / z_lo) * _LOG_PER_DECADE))
        edges += list(np.geomspace(z_lo, top, k + 1))
    start = max(1.0, z_lo)
    if z_hi > start:
        k = max(1, math.ceil((z_hi - start) / _LINEAR_STEP))
        edges += list(np.linspace(start, z_hi, k + 1))
    edges += [e for e in extra if z_lo < e < z_hi]
    return np.unique(np.asarray(edges))


def build_ensemble(seq: PulseSequence, spec: NoiseSpectrum, dt: float | None = None,
                   z_max: float | None = None) -> PhaseEnsemble:
    """Discretise ``spec`` into random-phase components suited to ``seq``.

    Cells start log-spaced (100 per decade) below ``omega tau = 1`` and
    0.2 wide above, with the spectrum's breakpoints as edges, and are bisected
    where S curves strongly across a cell or where one component would carry
    more than 0.1 % of the phase variance (keeps the phase sum Gaussian).
    """
    tau, n = seq.tau, seq.n
    if dt is None:
        dt = default_dt(seq)
    lo, hi = spec.support()
    if math.isfinite(hi) and hi > math.pi / dt:
        dt = math.pi / hi
    segs = _trapezoid_segments(seq, dt)
    if spec.is_zero or hi <= lo:
        empty = np.zeros(0)
        return PhaseEnsemble(seq, spec, dt, empty, empty, empty, empty.astype(complex), segs)
    z_lo = max(lo * tau, _Z_FLOOR)
    z_hi = min(hi * tau, math.pi / dt * tau, z_max or 200.0 * (n + 1))
    if z_hi <= z_lo:
        empty = np.zeros(0)
        return PhaseEnsemble(seq, spec, dt, empty, empty, empty, empty.astype(complex), segs)
    edges = _initial_cells(z_lo, z_hi, [b * tau for b in spec.breakpoints()])
    a, b = edges[:-1] / tau, edges[1:] / tau
    S = spec.evaluate(0.5 * (a + b))
    G = _filter_transform(segs, dt, 0.5 * (a + b))
    for _ in range(60):
        m = 0.5 * (a + b)
        contrib = S * (b - a) * np.abs(G) ** 2
        total = contrib.sum()
        if total <= 0:
            break
        Sa, Sb = spec.evaluate(a), spec.evaluate(b)
        curv = np.abs(Sa + Sb - 2 * S) > _CURVATURE_TOL * np.maximum(S, 1e-300)
        split = (contrib > _MAX_SHARE * total) | (curv & (contrib > 1e-7 * total))
        if not np.any(split) or len(a) + np.count_nonzero(split) > _MAX_COMPONENTS:
            break
        keep = ~split
        na = np.concatenate([a[split], m[split]])
        nb = np.concatenate([m[split], b[split]])
        nm = 0.5 * (na + nb)
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb])
        S = np.concatenate([S[keep], spec.evaluate(nm)])
        G = np.concatenate([G[keep], _filter_transform(segs, dt, nm)])
    order = np.argsort(a)
    a, b, S, G = a[order], b[order], S[order], G[order]
    dw = b - a
    amp = np.sqrt(8.0 / math.pi * S * dw)
    return PhaseEnsemble(seq, spec, dt, 0.5 * (a + b), dw, amp, G, segs)


@dataclass(frozen=True)
class McCoherence:
    """Monte Carlo coherence estimate.

    ``W = |mean_k exp(i phi_k)|`` with a jackknife ``stderr``;
    ``phase_variance`` is the sample variance of the phases and
    ``phase_variance_stderr`` its standard error.
    """

    W: float
    stderr: float
    realizations: int
    phase_variance: float
    phase_variance_stderr: float
    components: int
    dt: float
    seed: int

    @property
    def chi(self) -> float:
        """``-ln W`` (inf when the estimate is 0)."""
        return -math.log(self.W) if self.W > 0 else math.inf


def _jackknife_abs_mean(z: np.ndarray) -> tuple[float, float]:
    R = len(z)
    total = z.sum()
    W = abs(total / R)
    loo = np.abs((total - z) / (R - 1))
    se = math.sqrt((R - 1) / R * float(np.sum((loo - loo.mean()) ** 2)))
    return W, se


def mc_coherence(seq: PulseSequence, spec: NoiseSpectrum, realizations: int, seed: int,
                 dt: float | None = None, ensemble: PhaseEnsemble | None = None) -> McCoherence:
    """Ensemble coherence of ``seq`` under ``spec`` from ``realizations`` noise draws.

    Realisation ``k`` uses its own generator spawned from ``(seed, k)``, so
    any subset of realisations can be regenerated independently.

    Warns with :class:`OracleWarning` when ``dt > tau / (200 (n + 1))``.
    """
    if realizations < 2:
        raise OracleError("need at least 2 realizations")
    if dt is None:
        dt = default_dt(seq)
    if dt > seq.tau / (200 * (seq.n + 1)):
        warnings.warn(f"dt={dt:g} s under-resolves the filter of {seq.label or 'sequence'} "
                      f"(limit {seq.tau / (200 * (seq.n + 1)):g} s)", OracleWarning, stacklevel=2)
    ens = ensemble if ensemble is not None else build_ensemble(seq, spec, dt)
    if ens.components == 0:
        return McCoherence(1.0, 0.0, realizations, 0.0, 0.0, 0, ens.dt, int(seed))
    phi = ens.phases(seed, realizations)
    W, se = _jackknife_abs_mean(np.exp(1j * phi))
    var = float(np.var(phi, ddof=1))
    m4 = float(np.mean((phi - phi.mean()) ** 4))
    var_se = math.sqrt(max(m4 - var * var, 0.0) / realizations)
    return McCoherence(min(W, 1.0), se, realizations, var, var_se, ens.components, ens.dt, int(seed))
