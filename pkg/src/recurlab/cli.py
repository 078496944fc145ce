"""Command-line front end.

Verbs: simulate, limitlaw, almost-sure, check-a2, e2, compare. Each reads a
TOML config, applies any overrides, runs the corresponding experiment and
writes report.json plus the verb's CSV files into the output directory.

Exit codes: 0 success, 1 threshold breach under --strict, 2 usage or config
error, 3 precision-abort failure, 66 missing input file.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:                              # Python 3.10
    import tomli as tomllib

from . import __version__
from .errors import ConfigError, PrecisionAbort, RunFailure
from .experiments import (
    _KNOWN_KEYS,
    ExperimentConfig,
    build_limit_table,
    chen_stein_e2,
    check_assumption_A2,
    resolve_map,
    run_almost_sure,
    run_distributional,
    write_a2_csv,
    write_as_csv,
    write_limitlaw_csv,
    write_pmf_csv,
    write_report_json,
)
from .limitlaw import QuadratureConfig

VERBS = ("simulate", "limitlaw", "almost-sure", "check-a2", "e2", "compare")

EXIT_OK = 0
EXIT_STRICT = 1
EXIT_USAGE = 2
EXIT_PRECISION = 3
EXIT_NOINPUT = 66


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


@dataclass
class Command:
    verb: str
    config_path: str
    output_dir: str
    overrides: dict = field(default_factory=dict)
    strict: bool = False


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recurlab",
        description="recurrence statistics of interval maps vs their limit laws",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("-c", "--config", required=True, help="TOML config file")
        p.add_argument("-o", "--output-dir", default=".", help="where outputs go")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--samples", type=int, help="override run.samples")
        p.add_argument("--n", type=int, help="override run.n")
        p.add_argument("--map", dest="map_kind", help="override the map key")
        p.add_argument("-O", "--override", action="append", default=[],
                       metavar="KEY=VALUE", help="set any config key")
        p.add_argument("--strict", action="store_true",
                       help="exit 1 when max TV exceeds report.strict_tv")
    return parser


def parse_and_validate(argv) -> Command:
    """argv -> validated Command; raises CliError with the proper exit code."""
    args = _build_parser().parse_args(argv)
    cmd = Command(args.verb, args.config, args.output_dir, strict=args.strict)
    if args.seed is not None:
        cmd.overrides["run.seed"] = args.seed
    if args.samples is not None:
        cmd.overrides["run.samples"] = args.samples
    if args.n is not None:
        cmd.overrides["run.n"] = args.n
    if args.map_kind is not None:
        cmd.overrides["map"] = args.map_kind
    for item in args.override:
        if "=" not in item:
            raise CliError(EXIT_USAGE, f"override {item!r} is not KEY=VALUE")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cmd.overrides[key] = value
    for key in cmd.overrides:
        if key not in _KNOWN_KEYS:
            raise CliError(EXIT_USAGE, f"unknown config key {key!r}")
    if not Path(cmd.config_path).is_file():
        raise CliError(EXIT_NOINPUT, f"config file not found: {cmd.config_path}")
    return cmd


def _load_config(cmd: Command) -> ExperimentConfig:
    with open(cmd.config_path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise CliError(EXIT_USAGE, f"config parse error: {exc}") from exc
    for key, value in cmd.overrides.items():
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    try:
        return ExperimentConfig.from_dict(raw)
    except ConfigError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from exc


def _git_stamp() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=5)
        return out.stdout.strip() if out.returncode == 0 else ""
    except OSError:
        return ""


def _base_report(cfg: ExperimentConfig) -> dict:
    return {
        "version": __version__,
        "git": _git_stamp(),
        "config": cfg.to_dict(),
        "failed": False,
    }


def execute(cmd: Command) -> int:
    """Run the verb and write its outputs; returns the process exit code."""
    cfg = _load_config(cmd)
    outdir = Path(cmd.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    report = _base_report(cfg)
    try:
        if cmd.verb in ("simulate", "compare"):
            result = run_distributional(cfg)
            emp = result.empirical
            ci = emp.wilson()
            report["distributional"] = {
                "engine": result.engine,
                "excluded": emp.excluded,
                "per_tau": [
                    {
                        "tau": tau,
                        "tv": float(result.tv_distance[ti]),
                        "max_abs_dev": float(result.max_abs_dev[ti]),
                        "ties": int(emp.ties[ti]) if ti < len(emp.ties) else 0,
                        "counts": emp.counts[ti].tolist(),
                        "phat": emp.phat[ti].tolist(),
                        "ci": ci[ti].tolist(),
                        "G": result.theory.values[ti].tolist(),
                        "G_overflow": result.theory.overflow_mass(ti),
                    }
                    for ti, tau in enumerate(cfg.tau_grid)
                ],
                "max_tv": result.max_tv,
            }
            write_report_json(str(outdir / "report.json"), report)
            write_pmf_csv(str(outdir / "pmf.csv"), result)
            print(f"map={cfg.map_kind} n={cfg.n} samples={cfg.samples} "
                  f"max_tv={result.max_tv:.5f}")
            if cmd.strict and result.max_tv > cfg.strict_tv:
                return EXIT_STRICT
            return EXIT_OK

        if cmd.verb == "limitlaw":
            m = resolve_map(cfg)
            table = build_limit_table(m.density, cfg.tau_grid, cfg.k_max,
                                      QuadratureConfig(), map_kind=m.kind)
            report["limitlaw"] = {
                "density": table.density_label,
                "rows": [list(r) for r in table.rows()],
            }
            write_report_json(str(outdir / "report.json"), report)
            write_limitlaw_csv(str(outdir / "limitlaw.csv"), table)
            print(f"map={cfg.map_kind} taus={list(cfg.tau_grid)} k_max={cfg.k_max} "
                  f"density={table.density_label}")
            return EXIT_OK

        if cmd.verb == "almost-sure":
            rows = run_almost_sure(cfg)
            report["almost_sure"] = [
                {
                    "k_index": r.k_index, "n_k": r.n_k,
                    "r_upper": r.r_upper, "s_lower": r.s_lower,
                    "viol_upper_freq": r.upper_freq,
                    "viol_lower_freq": r.lower_freq,
                    "upper_ci": list(r.upper_ci()), "lower_ci": list(r.lower_ci()),
                }
                for r in rows
            ]
            write_report_json(str(outdir / "report.json"), report)
            write_as_csv(str(outdir / "as.csv"), rows)
            last = rows[-1]
            print(f"map={cfg.map_kind} paths={cfg.as_paths} final_n={last.n_k} "
                  f"upper_viol={last.upper_freq:.4f} lower_viol={last.lower_freq:.4f}")
            return EXIT_OK

        if cmd.verb == "check-a2":
            rep = check_assumption_A2(cfg)
            report["a2"] = {
                "a_exponent": rep.a_exponent,
                "beta0": rep.beta0,
                "rows": [
                    {"n": r.n, "j": r.j, "r": r.r, "mu_hat": r.mu_hat,
                     "ci": [r.ci_lo, r.ci_hi], "oracle": r.oracle,
                     "flagged": r.flagged}
                    for r in rep.rows
                ],
            }
            write_report_json(str(outdir / "report.json"), report)
            write_a2_csv(str(outdir / "a2.csv"), rep)
            print(f"map={cfg.map_kind} samples={rep.samples} beta0={rep.beta0:.4f}")
            return EXIT_OK

        if cmd.verb == "e2":
            res = chen_stein_e2(cfg)
            report["e2"] = {
                "center": res.center, "r": res.r, "p": res.p,
                "estimate": res.estimate,
                "per_j": [list(t) for t in res.per_j],
                "samples": res.samples,
            }
            write_report_json(str(outdir / "report.json"), report)
            print(f"map={cfg.map_kind} center={res.center} r={res.r} p={res.p} "
                  f"E2={res.estimate:.6g}")
            return EXIT_OK

        raise CliError(EXIT_USAGE, f"unknown verb {cmd.verb!r}")

    except (RunFailure, PrecisionAbort) as exc:
        report["failed"] = True
        report["error"] = str(exc)
        write_report_json(str(outdir / "report.json"), report)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cmd = parse_and_validate(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    try:
        return execute(cmd)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
