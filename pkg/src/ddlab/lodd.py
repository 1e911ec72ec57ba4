"""Locally optimised dynamical decoupling: Nelder-Mead over pulse positions.

The search runs on the raw vector of fractional pulse centres.  Infeasible
vertices (misordered, overlapping, or sticking out of the sequence) are never
evaluated physically; they score ``best feasible value + penalty * violation``
with the violation measured in units of tau.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .coherence import chi as chi_of
from .filters import filter_function
from .oracle import build_ensemble, mc_coherence
from .sequences import (FAMILIES, PulseSequence, SequenceError, make_sequence)
from .spectra import NoiseSpectrum, PowerLawSpectrum

__all__ = [
    "OptimizerConfig",
    "OptimizationResult",
    "SweepPoint",
    "ComparisonTable",
    "optimize",
    "sweep_optimize",
    "compare_sequences",
    "violation",
    "default_start_family",
]

TERMINATIONS = ("position-converged", "objective-converged", "max-iterations")


@dataclass(frozen=True)
class OptimizerConfig:
    """Nelder-Mead settings.

    ``position_tol`` is a fraction of tau; ``None`` means
    ``position_tol_s / tau`` with ``position_tol_s`` in seconds (50 ns, the
    timing resolution of typical pulse hardware).  ``objective_tol`` is an
    absolute tolerance on the objective (chi, or ``-ln W`` in monte-carlo
    mode).  ``penalty`` multiplies the violation; ``None`` means 1e3 times
    the starting objective.
    """

    max_iterations: int = 200
    position_tol: float | None = None
    position_tol_s: float = 50e-9
    objective_tol: float = 1e-6
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    simplex_scale: float = 0.02
    penalty: float | None = None
    mode: str = "analytic-chi"
    mc_realizations: int = 500
    seed: int = 0
    rtol: float = 1e-8

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.position_tol is not None and not self.position_tol > 0:
            raise ValueError("position_tol must be > 0")
        if not self.position_tol_s > 0:
            raise ValueError("position_tol_s must be > 0")
        if not self.objective_tol > 0:
            raise ValueError("objective_tol must be > 0")
        if not self.reflection > 0:
            raise ValueError("reflection must be > 0")
        if not self.expansion > self.reflection:
            raise ValueError("expansion must exceed reflection")
        if not 0 < self.contraction < 1 or not 0 < self.shrink < 1:
            raise ValueError("contraction and shrink must lie in (0, 1)")
        if not self.simplex_scale > 0:
            raise ValueError("simplex_scale must be > 0")
        if self.penalty is not None and not self.penalty > 0:
            raise ValueError("penalty must be > 0")
        if self.mode not in ("analytic-chi", "monte-carlo"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "monte-carlo" and self.mc_realizations < 2:
            raise ValueError("mc_realizations must be >= 2")

    def resolved_position_tol(self, tau: float) -> float:
        return self.position_tol if self.position_tol is not None else self.position_tol_s / tau

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptimizationResult:
    """Outcome of one optimisation.

    ``history[i]`` is the best feasible objective after iteration ``i``
    (entry 0 is the start); it never increases.
    """

    best: PulseSequence
    best_value: float
    start: PulseSequence
    start_value: float
    history: list[float]
    iterations: int
    termination: str
    evaluations: int
    config: OptimizerConfig

    @property
    def improvement(self) -> float:
        """``start_value / best_value`` (inf for a zero best value)."""
        return self.start_value / self.best_value if self.best_value > 0 else math.inf

    def to_dict(self) -> dict:
        return {"best": self.best.to_dict(), "best_value": self.best_value,
                "start": self.start.to_dict(), "start_value": self.start_value,
                "history": list(self.history), "iterations": self.iterations,
                "termination": self.termination, "evaluations": self.evaluations,
                "improvement": self.improvement, "config": self.config.to_dict()}


def violation(x: np.ndarray, phi: float) -> float:
    """Summed constraint deficit of centres ``x`` (units of tau); 0 when feasible."""
    v = max(0.0, phi / 2 - x[0]) + max(0.0, x[-1] + phi / 2 - 1.0)
    if len(x) > 1:
        v += float(np.sum(np.maximum(0.0, phi - np.diff(x))))
    return v


def default_start_family(spec: NoiseSpectrum) -> str:
    """UDD for spectra with a sharp high cutoff, CPMG otherwise."""
    if isinstance(spec, PowerLawSpectrum):
        return "udd" if spec.cutoff == "sharp" else "cpmg"
    return "udd" if math.isfinite(spec.support()[1]) else "cpmg"


class _Objective:
    def __init__(self, start: PulseSequence, spec: NoiseSpectrum, cfg: OptimizerConfig):
        self.start = start
        self.spec = spec
        self.cfg = cfg
        self.phi = start.phi_pi
        self.evaluations = 0
        self.seed = cfg.seed
        self.best_feasible = math.inf
        self.best_x: np.ndarray | None = None
        # best feasible value under the current seed (monte-carlo mode)
        self.round_best = math.inf
        self.seed_rounds = cfg.mode == "monte-carlo"
        self.penalty = cfg.penalty
        # one component grid for every vertex, so a shared seed means shared noise
        self.grid = build_ensemble(start, spec) if cfg.mode == "monte-carlo" else None

    def sequence(self, x) -> PulseSequence:
        return make_sequence(list(map(float, x)), self.start.tau, self.start.tau_pi,
                             label=f"LODD{self.start.n}")

    def physical(self, seq: PulseSequence) -> float:
        self.evaluations += 1
        if self.cfg.mode == "analytic-chi":
            return chi_of(seq, self.spec, rtol=self.cfg.rtol).chi
        est = mc_coherence(seq, self.spec, self.cfg.mc_realizations, self.seed,
                           ensemble=self.grid.retarget(seq))
        return est.chi

    def __call__(self, x: np.ndarray) -> float:
        v = violation(x, self.phi)
        if v == 0.0:
            try:
                seq = self.sequence(x)
            except SequenceError:
                v = 1e-12
        if v > 0:
            base = self.round_best if math.isfinite(self.round_best) else self.best_feasible
            base = base if math.isfinite(base) else 0.0
            return base + self.penalty * v
        f = self.physical(seq)
        if self.seed_rounds:
            self.round_best = min(self.round_best, f)
        if f < self.best_feasible:
            self.best_feasible = f
            self.best_x = np.array(x, dtype=float)
        return f


def _iteration_seed(seed: int, it: int) -> int:
    return int(np.random.SeedSequence(int(seed), spawn_key=(it,)).generate_state(1)[0])


def optimize(start: PulseSequence, spec: NoiseSpectrum,
             config: OptimizerConfig | None = None) -> OptimizationResult:
    """Nelder-Mead search over the pulse centres of ``start`` at fixed tau, tau_pi.

    In monte-carlo mode the objective is ``-ln W`` from :func:`mc_coherence`;
    each iteration draws one seed and re-scores every vertex with it, so all
    comparisons within an iteration share their random numbers.

    If no point improves on the start by more than ``objective_tol`` the start
    is returned unchanged.

    Raises
    ------
    ValueError
        For ``n = 0`` or if no feasible initial simplex can be built.
    """
    cfg = config or OptimizerConfig()
    n = start.n
    if n < 1:
        raise ValueError("optimisation needs at least one pulse")
    obj = _Objective(start, spec, cfg)
    x0 = start.delta_array.astype(float)
    if violation(x0, obj.phi) > 0:
        raise ValueError("start sequence violates the pulse constraints")
    mc = cfg.mode == "monte-carlo"
    if mc:
        obj.seed = _iteration_seed(cfg.seed, 0)
    f0 = obj.physical(start)
    obj.best_feasible, obj.best_x = f0, x0.copy()
    if mc:
        obj.round_best = f0
    if obj.penalty is None:
        obj.penalty = 1e3 * max(f0, 1e-300)
    pos_tol = cfg.resolved_position_tol(start.tau)

    # initial simplex: +scale on each coordinate, halved toward the start until feasible
    verts = [x0]
    for j in range(n):
        for sign in (1.0, -1.0):
            step = cfg.simplex_scale
            while step > pos_tol:
                x = x0.copy()
                x[j] += sign * step
                if violation(x, obj.phi) == 0:
                    break
                step /= 2
            else:
                continue
            verts.append(x)
            break
        else:
            raise ValueError(f"no feasible simplex vertex along coordinate {j}")
    X = np.array(verts)
    F = np.array([f0] + [obj(x) for x in X[1:]])
    history = [min(f0, obj.best_feasible)]
    termination = "max-iterations"
    it = 0
    while it < cfg.max_iterations:
        order = np.argsort(F, kind="stable")
        X, F = X[order], F[order]
        if np.max(np.abs(X[1:] - X[0])) < pos_tol:
            termination = "position-converged"
            break
        if F[-1] - F[0] < cfg.objective_tol:
            termination = "objective-converged"
            break
        it += 1
        if mc:
            # a noisy value from an earlier seed must not anchor the penalty,
            # so feasible vertices are scored first under the new seed
            obj.seed = _iteration_seed(cfg.seed, it)
            obj.round_best = math.inf
            feasible = [violation(x, obj.phi) == 0 for x in X]
            F = np.empty(len(X))
            for i in sorted(range(len(X)), key=lambda i: not feasible[i]):
                F[i] = obj(X[i])
            order = np.argsort(F, kind="stable")
            X, F = X[order], F[order]
        c = X[:-1].mean(axis=0)
        xr = c + cfg.reflection * (c - X[-1])
        fr = obj(xr)
        if F[0] <= fr < F[-2]:
            X[-1], F[-1] = xr, fr
        elif fr < F[0]:
            xe = c + cfg.expansion * (xr - c)
            fe = obj(xe)
            if fe < fr:
                X[-1], F[-1] = xe, fe
            else:
                X[-1], F[-1] = xr, fr
        else:
            shrink = False
            if fr < F[-1]:
                xc = c + cfg.contraction * (xr - c)
                fc = obj(xc)
                if fc <= fr:
                    X[-1], F[-1] = xc, fc
                else:
                    shrink = True
            else:
                xc = c - cfg.contraction * (c - X[-1])
                fc = obj(xc)
                if fc < F[-1]:
                    X[-1], F[-1] = xc, fc
                else:
                    shrink = True
            if shrink:
                for i in range(1, n + 1):
                    X[i] = X[0] + cfg.shrink * (X[i] - X[0])
                    F[i] = obj(X[i])
        history.append(min(history[-1], obj.best_feasible))
    best_x, best_f = obj.best_x, obj.best_feasible
    if f0 - best_f < cfg.objective_tol:
        best_seq, best_f = start, f0
    else:
        best_seq = obj.sequence(best_x)
    return OptimizationResult(best_seq, float(best_f), start, float(f0), history, it,
                              termination, obj.evaluations, cfg)


@dataclass
class SweepPoint:
    """Per-tau outcome of :func:`sweep_optimize`.

    ``chosen`` names the winner among the optimised sequence and the CPMG
    and UDD baselines; ``best`` is that sequence and ``chi_best`` its chi.
    """

    tau: float
    result: OptimizationResult | None
    chi_opt: float
    chi_cpmg: float
    chi_udd: float
    chosen: str
    best: PulseSequence | None
    chi_best: float
    failure: str | None = None


def _family_chi(family: str, n: int, tau: float, tau_pi: float, spec, rtol) -> tuple[float, PulseSequence | None]:
    try:
        seq = make_sequence(FAMILIES[family](n), tau, tau_pi, label=f"{family.upper()}{n}")
    except SequenceError:
        return math.nan, None
    return chi_of(seq, spec, rtol=rtol).chi, seq


def sweep_optimize(family, n: int, spec: NoiseSpectrum, taus: Sequence[float],
                   tau_pi: float = 0.0, config: OptimizerConfig | None = None) -> list[SweepPoint]:
    """Optimise at each tau, warm-starting from the previous tau's result.

    Each point also scores the CPMG and UDD baselines and keeps the best of
    the three, so the returned curve is never worse than either family.
    Points that fail (no feasible start) carry a ``failure`` message.
    """
    cfg = config or OptimizerConfig()
    ctor: Callable = FAMILIES[family.lower()] if isinstance(family, str) else family
    fam_name = family.upper() if isinstance(family, str) else "START"
    out: list[SweepPoint] = []
    prev: list | None = None
    for tau in map(float, taus):
        chi_c, seq_c = _family_chi("cpmg", n, tau, tau_pi, spec, cfg.rtol)
        chi_u, seq_u = _family_chi("udd", n, tau, tau_pi, spec, cfg.rtol)
        start = None
        for deltas in ([prev] if prev is not None else []) + [ctor(n)]:
            try:
                start = make_sequence(deltas, tau, tau_pi, label=f"LODD{n}")
                break
            except SequenceError:
                continue
        if start is None:
            out.append(SweepPoint(tau, None, math.nan, chi_c, chi_u, "", None, math.nan,
                                  f"no feasible {fam_name}{n} start at tau={tau:g} s"))
            continue
        try:
            res = optimize(start, spec, cfg)
        except (ValueError, ArithmeticError) as exc:
            out.append(SweepPoint(tau, None, math.nan, chi_c, chi_u, "", None, math.nan, str(exc)))
            continue
        chi_opt = res.best_value if cfg.mode == "analytic-chi" else chi_of(res.best, spec, rtol=cfg.rtol).chi
        cands = [("optimized", chi_opt, res.best), ("cpmg", chi_c, seq_c), ("udd", chi_u, seq_u)]
        cands = [c for c in cands if c[2] is not None and not math.isnan(c[1])]
        name, chi_best, seq_best = min(cands, key=lambda c: c[1])
        out.append(SweepPoint(tau, res, chi_opt, chi_c, chi_u, name, seq_best, chi_best))
        prev = list(seq_best.deltas)
    return out


@dataclass
class ComparisonTable:
    """Coherence rows ``(label, chi, W, p)`` plus filter-improvement curves.

    ``improvement[label]`` is ``log10(F_ref / F_label)`` on ``omega_tau``;
    positive values mean ``label`` filters better than the reference.
    """

    rows: list[tuple[str, float, float, float]]
    omega_tau: np.ndarray
    improvement: dict[str, np.ndarray]
    reference: str


def compare_sequences(candidates: Sequence[PulseSequence], spec: NoiseSpectrum,
                      omega_tau=None, reference: int = 0,
                      rtol: float = 1e-8) -> ComparisonTable:
    """Score candidates that share tau and tau_pi.

    Raises
    ------
    ValueError
        If the candidates differ in tau or tau_pi.
    """
    if not candidates:
        raise ValueError("no candidates")
    tau, tau_pi = candidates[0].tau, candidates[0].tau_pi
    for c in candidates[1:]:
        if not math.isclose(c.tau, tau, rel_tol=1e-12) or not math.isclose(
                c.tau_pi, tau_pi, rel_tol=1e-12, abs_tol=1e-18):
            raise ValueError(f"candidate {c.label!r} has tau={c.tau:g}, tau_pi={c.tau_pi:g}; "
                             f"expected tau={tau:g}, tau_pi={tau_pi:g}")
    labels = [c.label or f"seq{i}" for i, c in enumerate(candidates)]
    rows = []
    for lab, c in zip(labels, candidates):
        r = chi_of(c, spec, rtol=rtol)
        rows.append((lab, r.chi, r.W, r.p))
    z = np.geomspace(1e-1, 1e3, 400) if omega_tau is None else np.asarray(omega_tau, dtype=float)
    ref = filter_function(candidates[reference], z)
    tiny = np.finfo(float).tiny
    imp = {lab: np.log10((ref + tiny) / (filter_function(c, z) + tiny))
           for lab, c in zip(labels, candidates)}
    return ComparisonTable(rows, z, imp, labels[reference])
