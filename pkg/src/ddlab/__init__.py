"""Dynamical decoupling toolkit.

Finite-pulse filter functions, coherence decay under arbitrary noise spectra,
time-domain noise synthesis with a Monte Carlo cross-check, and Nelder-Mead
optimisation of pulse positions.
"""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .sequences import (FAMILIES, BoundaryError, OrderingError, OverlapError, PulseSequence,
                        SequenceError, TimeDomainFilter, cpmg_positions, family_sequence,
                        make_sequence, pdd_positions, render_time_domain, udd_positions)
from .spectra import (CompositeSpectrum, NoiseSpectrum, PowerLawSpectrum, SpectrumError, Spur,
                      TabulatedSpectrum, ambient_preset, load_tabulated, ohmic_preset,
                      one_over_f_preset, spectrum_from_config)
from .filters import filter_curve, filter_function, filter_via_fft_oracle, suppression_order
from .coherence import CoherenceResult, QuadratureWarning, chi, decay_curve
from .oracle import (McCoherence, NoiseTrace, OracleError, OracleWarning, build_ensemble,
                     estimate_psd, mc_coherence, synthesize_trace)
from .lodd import (ComparisonTable, OptimizationResult, OptimizerConfig, SweepPoint,
                   compare_sequences, optimize, sweep_optimize)

__all__ = [
    "__version__", "FAMILIES", "BoundaryError", "OrderingError", "OverlapError",
    "PulseSequence", "SequenceError", "TimeDomainFilter", "cpmg_positions", "family_sequence",
    "make_sequence", "pdd_positions", "render_time_domain", "udd_positions",
    "CompositeSpectrum", "NoiseSpectrum", "PowerLawSpectrum", "SpectrumError", "Spur",
    "TabulatedSpectrum", "ambient_preset", "load_tabulated", "ohmic_preset",
    "one_over_f_preset", "spectrum_from_config", "filter_curve", "filter_function",
    "filter_via_fft_oracle", "suppression_order", "CoherenceResult", "QuadratureWarning",
    "chi", "decay_curve", "McCoherence", "NoiseTrace", "OracleError",
    "OracleWarning", "build_ensemble", "estimate_psd", "mc_coherence", "synthesize_trace",
    "ComparisonTable", "OptimizationResult", "OptimizerConfig", "SweepPoint",
    "compare_sequences", "optimize", "sweep_optimize",
]
