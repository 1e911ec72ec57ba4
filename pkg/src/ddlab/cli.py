"""Command-line front end.

Every subcommand writes its data files plus ``manifest.json`` into
``--out-dir``.  Options resolve as flags > ``--config`` JSON file > built-in
defaults, and the resolved set is echoed into the manifest.

Exit codes: 0 success, 2 invalid input, 3 numerical tolerance not met,
4 file I/O error.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .coherence import QuadratureWarning, chi, decay_curve
from .filters import filter_function
from .io import RunManifest, read_json, write_csv, write_json
from .lodd import OptimizerConfig, compare_sequences, default_start_family, optimize, sweep_optimize
from .oracle import OracleError, estimate_psd, mc_coherence, synthesize_trace
from .sequences import FAMILIES, PulseSequence, SequenceError, make_sequence
from .spectra import (TWO_PI, SpectrumError, read_psd_csv, spectrum_from_config,
                      write_psd_csv)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


class NumericalFailure(RuntimeError):
    pass


# defaults per subcommand, in CLI units
_SEQ = {"family": "udd", "n": 6, "tau_ms": 30.0, "tau_pi_us": 0.0, "sequence_file": None}
_SPEC = {"spectrum": "ohmic", "alpha": 1.0, "gamma": 0.23, "cutoff_hz": 500.0,
         "spectrum_file": None, "psd_csv": None}
DEFAULTS = {
    "sequence": {**_SEQ, "resolution_ns": None},
    "filter": {**_SEQ, "grid_min": 1e-3, "grid_max": 1e3, "grid_points": 1000},
    "decay": {**_SEQ, **_SPEC, "tau_min_ms": 1.0, "tau_max_ms": 100.0, "tau_points": 50,
              "rtol": 1e-8},
    "noise": {**_SPEC, "duration_s": 64.0, "dt_s": 2.5e-4, "segments": 64},
    "validate": {**_SEQ, **_SPEC, "realizations": 2000, "rtol": 1e-8},
    "optimize": {**_SEQ, **_SPEC, "family": None, "max_iterations": 200, "position_tol_ns": 50.0,
                 "objective_tol": 1e-6, "simplex_scale": 0.02, "mode": "analytic-chi",
                 "realizations": 500, "rtol": 1e-8},
    "sweep": {**_SEQ, **_SPEC, "family": None, "tau_min_ms": 1.0, "tau_max_ms": 10.0,
              "tau_points": 10, "max_iterations": 200, "position_tol_ns": 50.0,
              "objective_tol": 1e-6, "simplex_scale": 0.02, "mode": "analytic-chi",
              "realizations": 500, "rtol": 1e-8},
    "compare": {**_SPEC, "sequence_files": None, "families": "cpmg,udd", "n": 6, "tau_ms": 30.0,
                "tau_pi_us": 0.0, "grid_min": 0.1, "grid_max": 1e3, "grid_points": 400,
                "rtol": 1e-8},
}
SEEDED = {"noise", "validate", "optimize", "sweep"}


def _add_seq(p, family_choices=("cpmg", "udd", "pdd", "file")):
    p.add_argument("--family", choices=family_choices, help="pulse family (or 'file')")
    p.add_argument("--n", type=int, help="pulse count")
    p.add_argument("--tau-ms", type=float, help="total duration tau in ms")
    p.add_argument("--tau-pi-us", type=float, help="pi-pulse duration in microseconds")
    p.add_argument("--sequence-file", help="sequence JSON (used with --family file)")


def _add_spec(p):
    p.add_argument("--spectrum", choices=["ohmic", "one-over-f", "ambient"], help="preset")
    p.add_argument("--alpha", type=float, help="overall noise scale")
    p.add_argument("--gamma", type=float, help="153 Hz spur scale (ambient)")
    p.add_argument("--cutoff-hz", type=float, help="sharp cutoff of the ohmic / 1/f presets")
    p.add_argument("--spectrum-file", help="spectrum JSON config (overrides the preset)")
    p.add_argument("--psd-csv", help="tabulated spectrum, header freq_hz,psd")


def _add_taus(p):
    p.add_argument("--tau-min-ms", type=float)
    p.add_argument("--tau-max-ms", type=float)
    p.add_argument("--tau-points", type=int)


def _add_opt(p):
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--position-tol-ns", type=float)
    p.add_argument("--objective-tol", type=float)
    p.add_argument("--simplex-scale", type=float)
    p.add_argument("--mode", choices=["analytic-chi", "monte-carlo"])
    p.add_argument("--realizations", type=int, help="Monte Carlo realizations per evaluation")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ddlab", description="Dynamical decoupling filter, "
                                 "coherence, noise synthesis and pulse optimisation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seeded=False):
        p.add_argument("--config", help="JSON file of option defaults")
        p.add_argument("--out-dir", default=".", help="output directory (default: .)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker cap (default: available CPUs)")
        if seeded:
            p.add_argument("--seed", type=int, help="RNG seed (default: $DDLAB_SEED or 0)")

    p = sub.add_parser("sequence", help="write a validated sequence file")
    _add_seq(p)
    p.add_argument("--resolution-ns", type=float, help="snap pulse times when exporting")
    common(p)

    p = sub.add_parser("filter", help="filter function F(omega tau), finite and delta pulses")
    _add_seq(p)
    p.add_argument("--grid-min", type=float)
    p.add_argument("--grid-max", type=float)
    p.add_argument("--grid-points", type=int)
    common(p)

    p = sub.add_parser("decay", help="coherence decay over a tau grid")
    _add_seq(p)
    _add_spec(p)
    _add_taus(p)
    p.add_argument("--rtol", type=float)
    common(p)

    p = sub.add_parser("noise", help="synthesise a noise trace and estimate its PSD")
    _add_spec(p)
    p.add_argument("--duration-s", type=float)
    p.add_argument("--dt-s", type=float)
    p.add_argument("--segments", type=int)
    common(p, seeded=True)

    p = sub.add_parser("validate", help="Monte Carlo coherence against the spectral integral")
    _add_seq(p)
    _add_spec(p)
    p.add_argument("--realizations", type=int)
    p.add_argument("--rtol", type=float)
    common(p, seeded=True)

    p = sub.add_parser("optimize", help="Nelder-Mead pulse-position optimisation at one tau")
    _add_seq(p)
    _add_spec(p)
    _add_opt(p)
    p.add_argument("--rtol", type=float)
    common(p, seeded=True)

    p = sub.add_parser("sweep", help="warm-started optimisation over a tau grid")
    _add_seq(p, family_choices=("cpmg", "udd", "pdd"))
    _add_spec(p)
    _add_taus(p)
    _add_opt(p)
    p.add_argument("--rtol", type=float)
    common(p, seeded=True)

    p = sub.add_parser("compare", help="coherence table and filter improvement curves")
    _add_spec(p)
    p.add_argument("--sequence-files", help="comma-separated sequence JSON files")
    p.add_argument("--families", help="comma-separated families (when no files are given)")
    p.add_argument("--n", type=int)
    p.add_argument("--tau-ms", type=float)
    p.add_argument("--tau-pi-us", type=float)
    p.add_argument("--grid-min", type=float)
    p.add_argument("--grid-max", type=float)
    p.add_argument("--grid-points", type=int)
    p.add_argument("--rtol", type=float)
    common(p)
    return ap


def resolve(command: str, args: argparse.Namespace) -> tuple[dict, set]:
    """Merge defaults, the ``--config`` file and explicit flags (in that order).

    ``--config`` takes either a plain JSON object of options or a previous
    run's ``manifest.json``, whose resolved config is replayed.

    Returns the resolved options and the set of keys that were given
    explicitly (by flag or config file) rather than defaulted.
    """
    cfg = dict(DEFAULTS[command])
    explicit: set = set()
    if getattr(args, "config", None):
        data = read_json(args.config)
        if not isinstance(data, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        if "subcommand" in data and isinstance(data.get("config"), dict):
            # a run manifest: replay its resolved config
            if data["subcommand"] != command:
                raise ValueError(f"{args.config}: manifest is for '{data['subcommand']}', "
                                 f"not '{command}'")
            data = {k: v for k, v in data["config"].items() if k != "threads"}
        unknown = set(data) - set(cfg) - {"seed"}
        if unknown:
            raise ValueError(f"{args.config}: unknown option(s) {sorted(unknown)}")
        cfg.update(data)
        explicit.update(data)
    for key in list(cfg) + ["seed"]:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
            explicit.add(key)
    if command in SEEDED:
        if cfg.get("seed") is None:
            env = os.environ.get("DDLAB_SEED")
            try:
                cfg["seed"] = int(env) if env not in (None, "") else 0
            except ValueError:
                raise ValueError(f"DDLAB_SEED={env!r} is not an integer") from None
        cfg["seed"] = int(cfg["seed"])
    return cfg, explicit


# unit conversion at the boundary
def ms_to_s(x: float) -> float:
    return x * 1e-3


def us_to_s(x: float) -> float:
    return x * 1e-6


def hz_to_rad(x: float) -> float:
    return x * TWO_PI


def _sequence(cfg: dict, manifest: RunManifest, explicit: set = frozenset(),
              check_tau: bool = True) -> PulseSequence:
    """Sequence from a family constructor or a sequence file.

    For a file, explicitly given ``tau_ms`` / ``tau_pi_us`` / ``n`` must agree
    with it (when ``check_tau``); the resolved config is then overwritten
    with the file's values so the manifest describes what actually ran.
    """
    fam = cfg.get("family")
    if fam == "file" or (fam is None and cfg.get("sequence_file")):
        path = cfg.get("sequence_file")
        if not path:
            raise ValueError("--family file needs --sequence-file")
        manifest.add_input(path)
        seq = PulseSequence.from_dict(read_json(path))
        if check_tau:
            if "tau_ms" in explicit and not math.isclose(seq.tau, ms_to_s(cfg["tau_ms"]),
                                                         rel_tol=1e-12):
                raise ValueError(f"{path}: tau={seq.tau:g} s does not match "
                                 f"--tau-ms {cfg['tau_ms']:g}")
            if "tau_pi_us" in explicit and not math.isclose(
                    seq.tau_pi, us_to_s(cfg["tau_pi_us"]), rel_tol=1e-12, abs_tol=1e-18):
                raise ValueError(f"{path}: tau_pi={seq.tau_pi:g} s does not match "
                                 f"--tau-pi-us {cfg['tau_pi_us']:g}")
            if "n" in explicit and int(cfg["n"]) != seq.n:
                raise ValueError(f"{path}: n={seq.n} does not match --n {cfg['n']}")
            cfg.update(tau_ms=seq.tau * 1e3, tau_pi_us=seq.tau_pi * 1e6)
        cfg.update(n=seq.n)
        return seq
    if fam is None:
        raise ValueError("no sequence family given")
    n = int(cfg["n"])
    return make_sequence(FAMILIES[fam](n), ms_to_s(cfg["tau_ms"]), us_to_s(cfg["tau_pi_us"]),
                         label=f"{fam.upper()}{n}")


def _spectrum(cfg: dict, manifest: RunManifest):
    if cfg.get("spectrum_file"):
        manifest.add_input(cfg["spectrum_file"])
        base = Path(cfg["spectrum_file"]).parent
        return spectrum_from_config(read_json(cfg["spectrum_file"]), base)
    if cfg.get("psd_csv"):
        manifest.add_input(cfg["psd_csv"])
        return read_psd_csv(cfg["psd_csv"], alpha=float(cfg["alpha"]))
    kind = cfg["spectrum"]
    sc = {"kind": kind, "alpha": float(cfg["alpha"])}
    if kind == "ambient":
        sc["gamma"] = float(cfg["gamma"])
    else:
        sc["cutoff_hz"] = float(cfg["cutoff_hz"])
    return spectrum_from_config(sc)


def _tau_grid(cfg: dict) -> np.ndarray:
    lo, hi, k = float(cfg["tau_min_ms"]), float(cfg["tau_max_ms"]), int(cfg["tau_points"])
    if not 0 < lo <= hi or k < 1:
        raise ValueError("need 0 < tau_min_ms <= tau_max_ms and tau_points >= 1")
    return ms_to_s(np.geomspace(lo, hi, k)) if k > 1 else np.array([ms_to_s(lo)])


def _optimizer_config(cfg: dict) -> OptimizerConfig:
    return OptimizerConfig(max_iterations=int(cfg["max_iterations"]),
                           position_tol_s=float(cfg["position_tol_ns"]) * 1e-9,
                           objective_tol=float(cfg["objective_tol"]),
                           simplex_scale=float(cfg["simplex_scale"]), mode=cfg["mode"],
                           mc_realizations=int(cfg["realizations"]), seed=int(cfg["seed"]),
                           rtol=float(cfg["rtol"]))


def _print_positions(seq: PulseSequence) -> None:
    print(f"{seq.label or 'sequence'}: n={seq.n} tau={seq.tau * 1e3:g} ms "
          f"tau_pi={seq.tau_pi * 1e6:g} us")
    print(f"{'j':>3}  {'delta_j':>20}  {'t_j (ms)':>14}")
    for j, d in enumerate(seq.delta_array, start=1):
        print(f"{j:>3}  {d:>20.17g}  {d * seq.tau * 1e3:>14.9f}")


def cmd_sequence(cfg: dict, explicit: set, out: Path, man: RunManifest) -> int:
    seq = _sequence(cfg, man, explicit)
    res = cfg.get("resolution_ns")
    data = seq.to_dict(resolution=res * 1e-9 if res else None)
    path = write_json(out / "sequence.json", data)
    man.add_output(path)
    _print_positions(seq)
    return EXIT_OK


def cmd_filter(cfg: dict, explicit: set, out: Path, man: RunManifest) -> int:
    seq = _sequence(cfg, man, explicit)
    k = int(cfg["grid_points"])
    if k < 2 or not 0 < cfg["grid_min"] < cfg["grid_max"]:
        raise ValueError("need 0 < grid_min < grid_max and grid_points >= 2")
    z = np.concatenate([[0.0], np.geomspace(cfg["grid_min"], cfg["grid_max"], k)])
    F = filter_function(seq, z)
    Fd = filter_function(seq.with_tau(seq.tau, 0.0), z) if seq.tau_pi else F
    man.add_output(write_csv(out / "filter.csv", ["omega_tau", "F", "F_delta"],
                             np.column_stack([z, F, Fd])))
    man.add_output(write_json(out / "sequence.json", seq.to_dict()))
    print(f"wrote {len(z)} rows for {seq.label}")
    return EXIT_OK


def cmd_decay(cfg: dict, explicit: set, out: Path, man: RunManifest) -> int:
    spec = _spectrum(cfg, man)
    taus = _tau_grid(cfg)
    tau_pi = us_to_s(cfg["tau_pi_us"])
    if cfg.get("family") in (None, "file"):
        seq = _sequence(cfg, man, check_tau=False)
        family, n = (lambda _n: list(seq.deltas)), seq.n
        if "tau_pi_us" not in explicit:
            tau_pi = seq.tau_pi
            cfg["tau_pi_us"] = tau_pi * 1e6
    else:
        family, n = cfg["family"], int(cfg["n"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuadratureWarning)
        res = decay_curve(family, n, spec, taus, tau_pi, rtol=cfg["rtol"],
                          workers=cfg["threads"])
    rows = [(r.tau, r.chi, r.W, r.p) for r in res]
    man.add_output(write_csv(out / "decay.csv", ["tau_s", "chi", "W", "p"], rows))
    meta = {"spectrum": spec.to_config(), "rtol": cfg["rtol"],
            "points": [{"tau_s": r.tau, "chi": r.chi, "W": r.W, "p": r.p,
                        "chi_error": r.chi_error, "converged": r.converged,
                        "failure": r.failure} for r in res]}
    man.add_output(write_json(out / "decay.json", meta))
    failed = [r for r in res if r.failure]
    for r in failed:
        print(f"tau={r.tau:g} s: {r.failure}", file=sys.stderr)
    if any(not r.converged and not r.failure for r in res):
        raise NumericalFailure("quadrature tolerance not met at some tau points (see decay.json)")
    print(f"wrote {len(rows)} points ({len(failed)} infeasible)")
    return EXIT_OK


def cmd_noise(cfg: dict, explicit: set, out: Path, man: RunManifest) -> int:
    spec = _spectrum(cfg, man)
    trace = synthesize_trace(spec, float(cfg["duration_s"]), float(cfg["dt_s"]), cfg["seed"])
    for p in trace.write(out / "trace.csv"):
        man.add_output(p)
    est = estimate_psd(trace, int(cfg["segments"]))
    path = out / "psd.csv"
    write_psd_csv(path, est)
    man.add_output(path)
    target = spec.evaluate(est.omega)
    man.add_output(write_csv(out / "psd_target.csv", ["freq_hz", "psd"],
                             np.column_stack([est.omega / TWO_PI, target])))
    print(f"{len(trace.samples)} samples, {trace.components} components, "
          f"variance {np.var(trace.samples):.6g} (rad/s)^2")
    return EXIT_OK


def cmd_validate(cfg: dict, explicit: set, out: Path, man: RunManifest) -> int:
    seq = _sequence(cfg, man, explicit)
    spec = _spectrum(cfg, man)
    res = chi(seq, spec, rtol=cfg["rtol"])
    mc = mc_coherence(seq, spec, int(cfg["realizations"]), cfg["seed"])
    expect = math.exp(-res.chi)
    diff = mc.W - expect
    z = diff / mc.stderr if mc.stderr > 0 else (0.0 if diff == 0 else math.inf)
    report = {"sequence": seq.to_dict(), "spectrum": spec.to_config(), "chi": res.chi,
              "W_expected": expect, "W_mc": mc.W, "stderr": mc.stderr, "z": z,
              "phase_variance": mc.phase_variance, "phase_variance_expected": 2 * res.chi,
              "phase_variance_stderr": mc.phase_variance_stderr,
              "realizations": mc.realizations, "components": mc.components, "dt_s": mc.dt,
              "seed": cfg["seed"], "pass": abs(z) <= 3}
    man.add_output(write_json(out / "validate.json", report))
    print(f"W_mc={mc.W:.6f} +- {mc.stderr:.6f}  exp(-chi)={expect:.6f}  z={z:+.2f}  "
          f"{'PASS' if abs(z) <= 3 else 'FAIL'}")
    if abs(z) > 3:
        raise NumericalFailure(f"Monte Carlo estimate differs from exp(-chi) by {z:.2f} stderr")
    return EXIT_OK


def cmd_optimize(cfg: dict, explicit: set, out: Path, man: RunManifest) -> int:
    spec = _spectrum(cfg, man)
    if cfg.get("family") is None and not cfg.get("sequence_file"):
        cfg["family"] = default_start_family(spec)
    start = _sequence(cfg, man, explicit)
    res = optimize(start, spec, _optimizer_config(cfg))
    man.add_output(write_json(out / "optimize.json", res.to_dict()))
    man.add_output(write_json(out / "best_sequence.json", res.best.to_dict()))
    man.add_output(write_csv(out / "history.csv", ["iteration", "best_objective"],
                             list(enumerate(res.history))))
    print(f"start {res.start_value:.6g} -> best {res.best_value:.6g} "
          f"(x{res.improvement:.3g}) after {res.iterations} iterations: {res.termination}")
    _print_positions(res.best)
    return EXIT_OK


def cmd_sweep(cfg: dict, explicit: set, out: Path, man: RunManifest) -> int:
    spec = _spectrum(cfg, man)
    fam = cfg.get("family") or default_start_family(spec)
    taus = _tau_grid(cfg)
    points = sweep_optimize(fam, int(cfg["n"]), spec, taus, us_to_s(cfg["tau_pi_us"]),
                            _optimizer_config(cfg))
    rows = [(p.tau, p.chi_best, p.chi_cpmg, p.chi_udd) for p in points]
    man.add_output(write_csv(out / "sweep.csv", ["tau_s", "chi_opt", "chi_cpmg", "chi_udd"], rows))
    for i, p in enumerate(points):
        if p.best is not None:
            man.add_output(write_json(out / f"sweep_seq_{i:03d}.json", p.best.to_dict()))
        if p.failure:
            print(f"tau={p.tau:g} s: {p.failure}", file=sys.stderr)
    man.add_output(write_json(out / "sweep.json", [
        {"tau_s": p.tau, "chosen": p.chosen, "chi_best": p.chi_best, "chi_opt": p.chi_opt,
         "chi_cpmg": p.chi_cpmg, "chi_udd": p.chi_udd, "failure": p.failure,
         "iterations": p.result.iterations if p.result else None,
         "termination": p.result.termination if p.result else None} for p in points]))
    print(f"swept {len(points)} tau points")
    return EXIT_OK


def cmd_compare(cfg: dict, explicit: set, out: Path, man: RunManifest) -> int:
    spec = _spectrum(cfg, man)
    if cfg.get("sequence_files"):
        seqs = []
        for path in str(cfg["sequence_files"]).split(","):
            man.add_input(path)
            s = PulseSequence.from_dict(read_json(path))
            seqs.append(s if s.label else make_sequence(list(s.deltas), s.tau, s.tau_pi,
                                                        label=Path(path).stem))
    else:
        n = int(cfg["n"])
        seqs = [make_sequence(FAMILIES[f](n), ms_to_s(cfg["tau_ms"]), us_to_s(cfg["tau_pi_us"]),
                              label=f"{f.upper()}{n}") for f in str(cfg["families"]).split(",")]
    z = np.geomspace(cfg["grid_min"], cfg["grid_max"], int(cfg["grid_points"]))
    table = compare_sequences(seqs, spec, z, rtol=cfg["rtol"])
    man.add_output(write_csv(out / "compare.csv", ["label", "chi", "W", "p"], table.rows))
    labels = list(table.improvement)
    man.add_output(write_csv(out / "improvement.csv", ["omega_tau"] + labels,
                             np.column_stack([z] + [table.improvement[k] for k in labels])))
    for lab, c, W, p in table.rows:
        print(f"{lab:>12}  chi={c:.6g}  W={W:.6g}  p={p:.6g}")
    return EXIT_OK


COMMANDS = {"sequence": cmd_sequence, "filter": cmd_filter, "decay": cmd_decay,
            "noise": cmd_noise, "validate": cmd_validate, "optimize": cmd_optimize,
            "sweep": cmd_sweep, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cmd = args.command
    try:
        cfg, explicit = resolve(cmd, args)
        cfg["threads"] = args.threads or os.cpu_count() or 1
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        man = RunManifest(cmd, cfg, cfg.get("seed"), __version__)
        if args.config:
            man.add_input(args.config)
        code = COMMANDS[cmd](cfg, explicit, out, man)
        man.write(out / "manifest.json")
        return code
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        try:
            man.write(out / "manifest.json")
        except Exception:  # noqa: BLE001
            pass
        return EXIT_NUMERICAL
    except ArithmeticError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SequenceError, SpectrumError, OracleError, ValueError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
