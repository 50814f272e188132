"""Command-line front end.

Exit codes are shared by every subcommand: 0 pass, 1 input error,
2 failed check or test, 3 infrastructure error.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from . import __version__, pipeline
from .config import ConfigError, RunConfig, build_config, load_config, parse_tolerance
from .model import ModelError
from .modelfile import ModelFileError, load_model
from .oracle import HorizonError

EXIT_OK, EXIT_INPUT, EXIT_FAIL, EXIT_INFRA = 0, 1, 2, 3


class InfraError(RuntimeError):
    pass


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML run configuration; flags override it")
    p.add_argument("--model", help="model file, or a zoo name (E1, E3, E4, ...)")
    p.add_argument("--env-seed", type=int, dest="env_seed")
    p.add_argument("--seed", type=int, help="master seed for walker streams")
    p.add_argument("-T", type=int, dest="T", help="horizon")
    p.add_argument("-M", type=int, dest="M", help="number of walkers")
    p.add_argument("--workers", type=int)
    p.add_argument("--mode", choices=("quenched", "annealed"))
    p.add_argument("--out", help="output directory")
    p.add_argument("--tests", help="comma-separated test ids")
    p.add_argument("--tolerance", action="append", metavar="KEY=VAL",
                   help="override a tolerance (repeatable)")
    p.add_argument("--cap", type=int, help="horizon cap for exact propagation")
    p.add_argument("--oracle-T", type=int, dest="oracle_T")
    p.add_argument("--paths", type=int, help="paths for the martingale residual check")
    p.add_argument("--directions", type=int, help="projection directions for the KS test")
    p.add_argument("--x0", type=lambda s: [int(a) for a in s.split(",")],
                   help="start site, comma separated")
    p.add_argument("--no-figures", action="store_false", dest="figures", default=None)
    p.add_argument("--shared-env-bands", action="store_true", dest="shared_env_bands",
                   default=None, help="judge QV and occupation with collision-adjusted bands")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rwlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rwlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a model file against the kernel conditions")
    v.add_argument("model_file", nargs="?")
    v.add_argument("--model", dest="model_flag")

    for name, helptext in (
        ("simulate", "run an ensemble; write samples.csv and summary.json"),
        ("verify", "run the verification pipeline; write report.json"),
        ("oracle", "exact quenched laws; write oracle.csv and oracle.json"),
    ):
        _common(sub.add_parser(name, help=helptext))
    return parser


def _config(args) -> RunConfig:
    base = load_config(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k, None) for k in (
        "model", "env_seed", "seed", "T", "M", "workers", "mode", "out", "tests", "cap",
        "oracle_T", "paths", "directions", "x0", "figures", "shared_env_bands")}
    tol = parse_tolerance(args.tolerance)
    if tol:
        overrides["tolerances"] = tol
    return build_config(base, overrides)


def _out_dir(cfg) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise InfraError(f"output directory {out} is not writable: {exc.strerror}") from None
    return out


def _write(path: Path, text: str):
    try:
        path.write_text(text, newline="")
    except OSError as exc:
        raise InfraError(f"cannot write {path}: {exc.strerror}") from None


def cmd_validate(args) -> int:
    path = args.model_file or args.model_flag
    if not path:
        print("error: no model file given", file=sys.stderr)
        return EXIT_INPUT
    model = load_model(path)
    report = model.validation
    for ch in report.checks:
        flag = "PASS" if ch.passed else "FAIL"
        where = "" if ch.offender is None else f"  at {_offender(ch.offender)}"
        print(f"{flag}  {ch.condition:<15} max_violation={ch.max_violation:.3g}{where}")
    if report.ok:
        d = model.derived
        print(f"b = {d.b.tolist()}  eta2 = {d.eta2.tolist()}")
    return EXIT_OK if report.ok else EXIT_FAIL


def _offender(off) -> str:
    parts = []
    for item in off:
        if isinstance(item, tuple):
            parts.append("u=(" + ",".join(map(str, item)) + ")")
        else:
            parts.append(f"s={item}")
    return " ".join(parts)


def _load_valid(cfg):
    model = load_model(cfg.model)
    if not model.validation.ok:
        return model, model.validation.failed()
    return model, []


def cmd_simulate(args) -> int:
    cfg = _config(args)
    model, failed = _load_valid(cfg)
    if failed:
        print(f"model fails: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    out = _out_dir(cfg)
    ens, summary = pipeline.simulate(model, cfg)
    _write(out / "samples.csv", pipeline.samples_csv(ens))
    _write(out / "summary.json", pipeline.dumps(summary))
    if cfg.figures:
        pipeline.write_figures("simulate", out, model, {"ensemble": ens}, cfg)
    print(f"wrote {cfg.M} samples to {out / 'samples.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config(args)
    model = load_model(cfg.model)
    out = _out_dir(cfg)
    report, artifacts = pipeline.verify(model, cfg)
    _write(out / "report.json", pipeline.dumps(report))
    if cfg.figures and model.validation.ok:
        pipeline.write_figures("verify", out, model, artifacts, cfg)
    for r in report["tests"]:
        if r.get("skipped"):
            print(f"SKIP  {r['id']:<24} ({r['skipped']})")
        else:
            flag = "PASS" if r["pass"] else "FAIL"
            print(f"{flag}  {r['id']:<24} statistic={r['statistic']:.6g} "
                  f"threshold={r['threshold']:.6g}")
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_oracle(args) -> int:
    cfg = _config(args)
    model, failed = _load_valid(cfg)
    if failed:
        print(f"model fails: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    T = cfg.T if args.T is not None else cfg.oracle_T
    try:
        env, levels, moments, gaps = pipeline.oracle_run(model, cfg, T)
    except HorizonError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = _out_dir(cfg)
    _write(out / "oracle.csv", pipeline.oracle_csv(levels, gaps))
    doc = pipeline.oracle_summary(model, cfg, T, levels, moments, gaps, env)
    _write(out / "oracle.json", pipeline.dumps(doc))
    if cfg.figures:
        pipeline.write_figures("oracle", out, model, {"oracle_levels": levels}, cfg)
    worst = doc["max_increment_discrepancy"]
    ok = worst <= cfg.tolerances["increment"]
    print(f"{'PASS' if ok else 'FAIL'}  max increment discrepancy {worst:.3g} over t < {T}")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"validate": cmd_validate, "simulate": cmd_simulate,
            "verify": cmd_verify, "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except (ModelFileError, ModelError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFRA
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
