"""Command-line entry point.

Subcommands
-----------
trial             run one seeded trial and print its CSV row
sweep             run a one-dimensional sweep and write the aggregate CSV
quantizer-report  print Lloyd-Max designs and their Bussgang statistics
selftest          run the acceptance checks

Configuration is read from a YAML file whose top-level keys mirror the
``SystemConfig`` fields; optional ``solver`` and ``sweep`` mappings hold
solver options and sweep settings. ``--set key=value`` overrides any of
them (``solver.max_iters=200``, ``sweep.trials=10``). Errors print one JSON
object on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
from dataclasses import fields
import json
import logging
import sys
from typing import Sequence

import yaml

from .experiment import (SWEEP_AXES, TRIAL_COLUMNS, SweepSpec, TrialError, TrialRecord,
                         metrics_of, run_pipeline, run_sweep)
from .mm_solver import SolverOptions
from .system_model import PROFILES, SystemConfig

EXIT_CONFIG = 2
EXIT_RUNTIME = 1
EXIT_CHECK_FAILED = 3


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


_NONE_WORDS = ("inf", "infinity", "none", "null", "~")


def _coerce(value):
    # YAML 1.1 reads "1e-4" as a string; "inf" means an unquantized ADC
    if isinstance(value, str):
        if value.strip().lower() in _NONE_WORDS:
            return None
        for kind in (int, float):
            try:
                return kind(value)
            except ValueError:
                pass
    return value


def _parse_scalar(text: str):
    if text.strip().lower() in _NONE_WORDS:
        return None
    return _coerce(yaml.safe_load(text))


def _parse_values(text: str) -> list:
    vals = [_parse_scalar(t) for t in text.split(",") if t.strip()]
    if not vals:
        raise ConfigError("--values needs at least one entry")
    return vals


def load_config(path: str | None, profile: str, overrides: Sequence[str]):
    """Merge profile defaults, the YAML file and ``--set`` overrides.

    Returns ``(SystemConfig, SolverOptions, sweep_settings)``.
    """
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    system = PROFILES[profile].to_dict()
    if system["Mt"] == system["M"]:
        system["Mt"] = None  # follow M unless set explicitly
    solver: dict = {}
    sweep: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path!r}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must be a mapping")
        solver.update({k: _coerce(v) for k, v in (doc.pop("solver", None) or {}).items()})
        sweep.update(doc.pop("sweep", None) or {})
        system.update({k: _coerce(v) for k, v in doc.items()})
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        section, dot, name = key.partition(".")
        value = _parse_scalar(raw)
        if dot and section == "solver":
            solver[name] = value
        elif dot and section == "sweep":
            sweep[name] = value
        elif dot:
            raise ConfigError(f"unknown section {section!r} in --set {item!r}")
        else:
            system[key] = value
    try:
        cfg = SystemConfig.from_dict(system)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid system config: {exc}") from None
    known = {f.name for f in fields(SolverOptions)}
    if set(solver) - known:
        raise ConfigError(f"unknown solver keys: {sorted(set(solver) - known)}")
    try:
        opts = SolverOptions(**solver)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver options: {exc}") from None
    return cfg, opts, sweep


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jadce", description="Activity detection and channel estimation with low-resolution ADCs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="YAML configuration file")
        sp.add_argument("--profile", default="desk", help="base profile (desk or paper)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry; repeatable")

    t = sub.add_parser("trial", help="run one trial")
    common(t)
    t.add_argument("--seed", type=int, help="trial seed (default: config seed)")
    t.add_argument("--dump", metavar="DIR", help="write trial.npz, bussgang.csv and trace.csv here")
    t.add_argument("--no-header", action="store_true", help="omit the CSV header line")

    s = sub.add_parser("sweep", help="run a parameter sweep")
    common(s)
    s.add_argument("--axis", choices=sorted(SWEEP_AXES))
    s.add_argument("--values", help="comma-separated axis values; 'inf' for an unquantized ADC")
    s.add_argument("--trials", type=int, help="trials per point (default 50)")
    s.add_argument("--seed-base", type=int, help="first trial seed (default 0)")
    s.add_argument("--out", help="output CSV path (default: stdout)")
    s.add_argument("--workers", type=int, help="worker processes (default: $JADCE_WORKERS or 1)")

    q = sub.add_parser("quantizer-report", help="print Lloyd-Max designs")
    q.add_argument("--bits", default="1,2,3", help="comma-separated resolutions")
    q.add_argument("--std", type=float, default=1.0, help="input standard deviation")

    c = sub.add_parser("selftest", help="run acceptance checks")
    c.add_argument("--all", action="store_true", help="include the Monte-Carlo recovery, trend and determinism checks")
    c.add_argument("--only", help="comma-separated check keys, e.g. C1,C4")
    return p


def _cmd_trial(args) -> int:
    cfg, opts, _ = load_config(args.config, args.profile, args.set)
    seed = cfg.seed if args.seed is None else args.seed
    try:
        art = run_pipeline(cfg, seed, opts)
    except Exception as exc:
        raise TrialError(seed, cfg, exc) from exc
    rec = TrialRecord(metrics=metrics_of(art, seed), iterations=art.state.iter,
                      converged=art.state.converged, wall_time_s=0.0,
                      n_active=int(art.scene.s.sum()))
    w = csv.writer(sys.stdout, lineterminator="\n")
    if not args.no_header:
        w.writerow(TRIAL_COLUMNS)
    w.writerow(rec.csv_row())
    if args.dump:
        from .dumps import dump_trial

        for path in dump_trial(args.dump, art):
            logging.getLogger(__name__).info("wrote %s", path)
    return 0


def _cmd_sweep(args) -> int:
    cfg, opts, sweep = load_config(args.config, args.profile, args.set)
    axis = args.axis or sweep.get("axis")
    if axis is None:
        raise ConfigError("sweep axis missing: pass --axis or set sweep.axis")
    if args.values is not None:
        values = _parse_values(args.values)
    else:
        values = sweep.get("values")
        if isinstance(values, str):
            values = _parse_values(values)
        if not values:
            raise ConfigError("sweep values missing: pass --values or set sweep.values")
        values = [_coerce(v) for v in values]
    trials = args.trials if args.trials is not None else sweep.get("trials", 50)
    seed_base = args.seed_base if args.seed_base is not None else sweep.get("seed_base", 0)
    unknown = set(sweep) - {"axis", "values", "trials", "seed_base"}
    if unknown:
        raise ConfigError(f"unknown sweep keys: {sorted(unknown)}")
    try:
        spec = SweepSpec(base=cfg, axis=axis, values=tuple(values), trials=int(trials),
                         seed_base=int(seed_base))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sweep: {exc}") from None
    if args.workers is not None and args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            run_sweep(spec, fh, opts, workers=args.workers)
    else:
        run_sweep(spec, sys.stdout, opts, workers=args.workers)
    return 0


def _cmd_quantizer(args) -> int:
    from .bussgang import bussgang_gain, residual_variance
    from .quantizer import lloyd_max_design, quantization_mse

    try:
        bits = [int(b) for b in args.bits.split(",") if b.strip()]
    except ValueError:
        raise ConfigError(f"--bits must be comma-separated integers, got {args.bits!r}") from None
    if args.std <= 0:
        raise ConfigError("--std must be positive")
    for b in bits:
        if not 1 <= b <= 12:
            raise ConfigError(f"bits={b} outside 1..12")
        q = lloyd_max_design(b, args.std)
        report = q.to_dict()
        report.update(input_std=args.std, mse=quantization_mse(q, args.std),
                      bussgang_gain=bussgang_gain(q, args.std),
                      residual_variance=residual_variance(q, args.std))
        print(json.dumps(report))
    return 0


def _cmd_selftest(args) -> int:
    from .acceptance import ALL_CHECKS, ORACLE_CHECKS

    if args.only:
        keys = [k.strip().upper() for k in args.only.split(",") if k.strip()]
        bad = [k for k in keys if k not in ALL_CHECKS]
        if bad:
            raise ConfigError(f"unknown checks {bad}; available {sorted(ALL_CHECKS)}")
    elif args.all:
        keys = list(ALL_CHECKS)
    else:
        keys = list(ORACLE_CHECKS)
    failed = 0
    for k in keys:
        res = ALL_CHECKS[k]()
        print(res.line(), flush=True)
        failed += not res.passed
    return EXIT_CHECK_FAILED if failed else 0


COMMANDS = {
    "trial": _cmd_trial,
    "sweep": _cmd_sweep,
    "quantizer-report": _cmd_quantizer,
    "selftest": _cmd_selftest,
}


def _emit_error(kind: str, exc: BaseException) -> None:
    print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        _emit_error("usage", exc)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        _emit_error("config", exc)
        return EXIT_CONFIG
    except TrialError as exc:
        print(json.dumps({"error": "trial", "seed": exc.seed, "message": str(exc)}), file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        _emit_error("interrupted", RuntimeError("interrupted; rows written so far are complete"))
        return 130
    except OSError as exc:
        _emit_error("io", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
