"""Command-line front end.

Every subcommand reads an optional TOML configuration, applies
``--override key=value`` edits, validates the result and writes its
outputs into a fresh directory. The directory is assembled under a
temporary name next to ``--out`` and renamed into place when complete;
``manifest.json`` is the first file written into it.

Exit codes: 0 success, 1 a check-style subcommand found a failing
criterion, 2 invalid configuration or arguments, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import shutil
import subprocess
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .basis import GridSpec
from .config import COMMANDS, ConfigError, ConfigIssue, apply_overrides, load_config, validate_config
from .estimators import lse_fit, shrink_fit
from .noise import NoiseModel, lambda_star, simulate_path
from .risk_lab import (CSV_HEADER, ExperimentConfig, HONEST_ESTIMATORS, bayes_risk_study, discrete_lower_bound,
                       improvement_study, make_signal, mc_risk, oracle_check, rate_study)
from .selection import ModelFamily, select, solve_constants

__all__ = ["main", "run", "build_parser", "EXIT_OK", "EXIT_FAIL", "EXIT_INVALID", "EXIT_NUMERIC"]

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INVALID = 2
EXIT_NUMERIC = 3

log = logging.getLogger("perisel")


def _version() -> str:
    try:
        from importlib.metadata import version
        base = version("artifact")
    except Exception:
        base = "0+unknown"
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                              cwd=Path(__file__).resolve().parent, capture_output=True,
                              text=True, timeout=5)
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{base}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return base


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perisel", description="Penalized model selection for "
                                     "periodic signals observed in continuous time.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--seed", type=int, help="base seed (overrides the config)")
        p.add_argument("--out", help="output directory (replaced atomically)")
        p.add_argument("--threads", type=int, help="worker threads (default: $PERISEL_THREADS or 1)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a dotted config key; repeatable")
        if name == "constants":
            p.add_argument("--lambda-star", type=float, default=2.0, dest="lambda_star")
            p.add_argument("--n-max", type=int, default=None, dest="n_max",
                           help="ordered family size for l* (default: its limit 1/(e-1))")
    return parser


# ---------------------------------------------------------------------------
# Output directory


class _OutputDir:
    """Temporary directory renamed onto ``target`` on success."""

    def __init__(self, target: Path | None):
        self.target = target
        self.tmp: Path | None = None
        self.files: list = []

    def __enter__(self):
        if self.target is not None:
            self.target.parent.mkdir(parents=True, exist_ok=True)
            self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.", dir=self.target.parent))
        return self

    def write(self, name: str, text: str) -> None:
        if self.tmp is None:
            return
        (self.tmp / name).write_text(text)
        self.files.append(name)

    def write_with(self, writer, names) -> None:
        """Call ``writer(directory)``; it must create exactly ``names``."""
        if self.tmp is None:
            return
        writer(self.tmp)
        self.files.extend(names)

    def __exit__(self, exc_type, exc, tb):
        if self.tmp is None:
            return False
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        old = None
        if self.target.exists():
            old = self.target.with_name(f".{self.target.name}.old.{os.getpid()}")
            os.replace(self.target, old)
        os.replace(self.tmp, self.target)
        if old is not None:
            shutil.rmtree(old, ignore_errors=True)
        return False


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Subcommands


def _path_objects(cfg: dict, seed: int):
    sec = cfg.get("path", {})
    S = make_signal(sec.get("signal", {"kind": "zero"}))
    model = NoiseModel.from_dict(sec.get("noise", {"kind": "white"}))
    grid = GridSpec(int(sec.get("n", 100)), int(sec.get("p", 1001)))
    return S, model, grid, int(sec.get("replicate", 0))


def _cmd_simulate(cfg, seed, threads, out: _OutputDir) -> tuple:
    S, model, grid, rep = _path_objects(cfg, seed)
    path = simulate_path(S, model, grid, seed, rep)
    out.write_with(lambda d: path.save(d / "path"), ["path.dy.f64", "path.dxi.f64", "path.json"])
    summary = {"n": grid.n, "p": grid.p, "noise": model.to_dict(), "signal": S.label,
               "increments": int(path.d_y.size), "y_end": float(path.d_y.sum())}
    return EXIT_OK, summary


def _cmd_estimate(cfg, seed, threads, out) -> tuple:
    S, model, grid, rep = _path_objects(cfg, seed)
    sec = cfg.get("estimate", {})
    path = simulate_path(S, model, grid, seed, rep)
    est = lse_fit(path, sec.get("model", [1]))
    if sec.get("estimator", "lse") == "shrunk":
        est = shrink_fit(est)
    J = max(max(est.model_m), S.max_index)
    loss = float(np.sum((est.full_coeffs(J) - S.padded(J)) ** 2))
    result = {"estimate": est.to_dict(), "loss": loss}
    out.write("estimate.json", _json(result))
    return EXIT_OK, result


def _cmd_select(cfg, seed, threads, out) -> tuple:
    S, model, grid, rep = _path_objects(cfg, seed)
    sec = cfg.get("select", {})
    fam = ModelFamily.from_dict(sec.get("family", {"kind": "ordered", "n_max": 20}))
    kappa = float(sec.get("kappa", lambda_star(model)))
    params = solve_constants(kappa, fam).scaled(float(sec.get("penalty_scale", 1.0)))
    path = simulate_path(S, model, grid, seed, rep)
    res = select(path, fam, params, sec.get("estimator", "lse"))
    doc = res.to_dict()
    doc["params"] = params.to_dict()
    out.write("selection.json", _json(doc))
    return EXIT_OK, {"chosen_m": list(res.chosen_m), "d": len(res.chosen_m)}


def _experiment(cfg: dict, seed: int) -> ExperimentConfig:
    d = dict(cfg.get("experiment", {}))
    d["seed"] = seed
    return ExperimentConfig.from_dict(d)


def _cmd_risk(cfg, seed, threads, out) -> tuple:
    exp = _experiment(cfg, seed)
    rep = mc_risk(exp, threads)
    out.write("risk.csv", rep.to_csv())
    if exp.audit:
        out.write("audit.jsonl", rep.audit_jsonl())
    errors = [r.error for r in rep.rows if r.error]
    if errors:
        raise ArithmeticError("; ".join(errors))
    return EXIT_OK, {"cells": len(rep.rows), "all_within_bound": rep.passed}


def _cmd_oracle(cfg, seed, threads, out) -> tuple:
    exp = _experiment(cfg, seed)
    forms = cfg.get("oracle", {}).get("forms") or None
    checks = oracle_check(exp, forms, threads)
    header = ["cell", "form", "lhs", "se", "rhs", "margin", "pass"]
    rows = [[c.cell, c.form, repr(c.lhs), repr(c.se), repr(c.rhs), repr(c.margin),
             "true" if c.passed else "false"] for c in checks]
    out.write("oracle.csv", _csv(header, rows))
    failed = [c for c in checks if not c.passed]
    summary = {"checks": len(checks), "failed": len(failed),
               "worst_margin": min(c.margin for c in checks) if checks else None}
    out.write("oracle.json", _json(summary))
    return (EXIT_FAIL if failed else EXIT_OK), summary


def _cmd_rate(cfg, seed, threads, out) -> tuple:
    exp = _experiment(cfg, seed)
    rsec = cfg.get("rate", {})
    rs = rate_study(exp, threads, float(rsec.get("band", 2.0)), float(rsec.get("cap", 1.25)))
    rows = [[n, repr(v), w] for n, v, w in zip(rs.n_values, rs.normalized, rs.worst_cell)]
    out.write("rate.csv", _csv(["n", "sup_normalized_risk", "worst_cell"], rows))
    out.write("risk.csv", _csv(CSV_HEADER, [r.csv_record() for r in rs.rows]))
    summary = {"band_ratio": rs.band_ratio, "last_over_median": rs.last_over_median,
               "passed": rs.passed, "regime_flag": rs.regime_flag}
    out.write("rate.json", _json(summary))
    return (EXIT_OK if rs.passed else EXIT_FAIL), summary


def _cmd_lower_bound(cfg, seed, threads, out) -> tuple:
    sec = cfg.get("lower_bound", {})
    beta = float(sec.get("beta", 2.0))
    nu = float(sec.get("nu", 1.0))
    reps = int(sec.get("replicates", 2000))
    ests = tuple(sec.get("estimators", HONEST_ESTIMATORS))
    kappa = float(sec.get("kappa", 2.0))
    results, ok = [], True
    for n in sec.get("n_values", [256, 1024]):
        study = bayes_risk_study(int(n), beta, nu, reps, seed, kappa=kappa, estimators=ests)
        doc = study.to_dict()
        if beta > 1:
            doc["discrete_normalized_bound"] = discrete_lower_bound(
                int(n), beta, nu, float(sec.get("r", 1.0)), float(sec.get("epsilon", 0.5)))
        results.append(doc)
        ok &= study.all_passed
    header = ["n", "m", "vt_bound", "estimator", "bayes_risk", "se", "pass"]
    rows = [[d["n"], d["vt"]["m"], repr(d["vt_bound"]), e, repr(d["risks"][e]), repr(d["ses"][e]),
             "true" if d["passed"][e] else "false"] for d in results for e in d["risks"]]
    out.write("lower_bound.csv", _csv(header, rows))
    out.write("lower_bound.json", _json(results))
    return (EXIT_OK if ok else EXIT_FAIL), {"passed": ok,
                                            "bounds": {d["n"]: d["vt_bound"] for d in results}}


def _cmd_improve(cfg, seed, threads, out) -> tuple:
    sec = cfg.get("improve", {})
    S = make_signal(sec.get("signal", {"kind": "zero"}))
    fam = ModelFamily.from_dict(sec.get("family", {"kind": "ordered", "n_max": 15}))
    st = improvement_study(S, fam, int(sec.get("n", 100)), int(sec.get("replicates", 2000)), seed,
                           kappa=float(sec.get("kappa", 2.0)))
    rows = st.to_rows()
    header = ["d", "lse_risk", "lse_se", "shrunk_risk", "shrunk_se", "diff_se"]
    out.write("improve.csv", _csv(header, [[r["d"], repr(r["lse_risk"]), repr(r["lse_se"]),
                                            repr(r["shrunk_risk"]), repr(r["shrunk_se"]),
                                            repr(r["diff_se"])] for r in rows]))
    summary = {"selected": {k: {"risk": v[0], "se": v[1]} for k, v in st.selected.items()},
               "bounds": st.bounds}
    out.write("improve.json", _json(summary))
    return EXIT_OK, summary


def _cmd_constants(cfg, seed, threads, out, args=None) -> tuple:
    lam = 2.0 if args is None else args.lambda_star
    fam = ModelFamily.ordered(args.n_max) if args is not None and args.n_max else None
    params = solve_constants(lam, fam)
    doc = params.to_dict()
    out.write("constants.json", _json(doc))
    return EXIT_OK, doc


HANDLERS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "select": _cmd_select,
    "risk": _cmd_risk,
    "oracle-check": _cmd_oracle,
    "rate-study": _cmd_rate,
    "lower-bound": _cmd_lower_bound,
    "improve": _cmd_improve,
    "constants": _cmd_constants,
}


def _threads(args, cfg) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("PERISEL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError([ConfigIssue("PERISEL_THREADS", f"must be an integer, got {env!r}")]) from None
    return max(1, int(cfg.get("threads", 1)))


def run(argv=None, stdout=None) -> int:
    """Parse ``argv``, execute the subcommand and return its exit code."""
    stdout = sys.stdout if stdout is None else stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        cfg = apply_overrides(load_config(args.config), args.override)
        if args.seed is not None:
            cfg["seed"] = args.seed
        issues = validate_config(cfg, args.command)
        if args.threads is not None and args.threads < 1:
            issues.append(ConfigIssue("--threads", "must be >= 1"))
        if issues:
            raise ConfigError(issues)
        threads = _threads(args, cfg)
    except ConfigError as exc:
        for issue in exc.issues:
            print(f"invalid configuration: {issue}", file=sys.stderr)
        return EXIT_INVALID
    seed = int(cfg.get("seed", 0))
    manifest = {
        "subcommand": args.command,
        "config_path": str(Path(args.config).resolve()) if args.config else None,
        "output_dir": str(Path(args.out).resolve()) if args.out else None,
        "seed": seed,
        "threads": threads,
        "overrides": list(args.override),
        "config": cfg,
        "version": _version(),
        "started_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    handler = HANDLERS[args.command]
    t0 = time.perf_counter()
    try:
        with _OutputDir(Path(args.out) if args.out else None) as out:
            out.write("manifest.json", _json(manifest))
            log.info("running %s (seed=%d, threads=%d)", args.command, seed, threads)
            if args.command == "constants":
                code, summary = handler(cfg, seed, threads, out, args)
            else:
                code, summary = handler(cfg, seed, threads, out)
            manifest["wall_seconds"] = round(time.perf_counter() - t0, 3)
            manifest["exit_code"] = code
            manifest["files"] = list(out.files)
            out.write("manifest.json", _json(manifest))
    except (ValueError, KeyError, TypeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(_json(summary), end="", file=stdout)
    if code == EXIT_FAIL:
        print(f"{args.command}: acceptance check failed", file=sys.stderr)
    return code


def main(argv=None) -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
