"""Command line runner: ``wigneravg run|validate|list``.

Exit codes: 0 success, 1 a check failed or the numerics raised, 2 the
config did not validate.
"""
import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from ._accel import backend_name
from .config import bundled_configs, bundled_dir, load_config
from .errors import ConfigError
from .experiments import RunContext, run_experiment
from .fieldio import dump_field, write_csv

THREADS_ENV = "WIGNERAVG_THREADS"
EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


def resolve_config(ref):
    """A path, or the stem of a bundled config."""
    p = Path(ref)
    if p.exists():
        return p
    cand = bundled_dir() / f"{ref}.yaml"
    return cand if cand.exists() else p


def resolve_threads(flag, cfg_threads, env=None):
    """Flag beats config beats environment; default 1."""
    env = os.environ if env is None else env
    for v in (flag, cfg_threads):
        if v is not None:
            return max(1, int(v))
    try:
        return max(1, int(env.get(THREADS_ENV, "")))
    except ValueError:
        return 1


def list_experiments():
    """[(name, kind, description)] of the bundled configs."""
    out = []
    for path in bundled_configs():
        cfg = load_config(path)
        out.append((path.stem, cfg.kind, cfg.description))
    return out


def validate(ref):
    """Diagnostics for one config (empty when valid); never runs numerics."""
    try:
        load_config(resolve_config(ref))
    except ConfigError as e:
        return e.diagnostics
    return []


def write_outputs(out_dir, cfg, outcome, seed, threads):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for stem, (header, rows) in sorted(outcome.tables.items()):
        files.append(Path(write_csv(out_dir / f"{stem}.csv", header, rows)).name)
    for stem, (values, meta) in sorted(outcome.fields.items()):
        files.extend(Path(f).name for f in dump_field(out_dir / stem, values, meta))
    manifest = {
        "name": cfg.name,
        "kind": cfg.kind,
        "config": cfg.source,
        "config_sha256": cfg.digest,
        "version": __version__,
        "backend": backend_name(),
        "seed": seed,
        "threads": threads,
        "checks": [{"name": c.name, "value": c.value, "threshold": c.threshold,
                    "result": "PASS" if c.passed else "FAIL"} for c in outcome.checks],
        "result": "PASS" if outcome.passed else "FAIL",
        "files": files,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def cmd_run(args):
    try:
        cfg = load_config(resolve_config(args.config))
    except ConfigError as e:
        for d in e.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    seed = cfg.seed if args.seed is None else args.seed
    threads = resolve_threads(args.threads, cfg.threads)
    out_dir = args.out or os.path.join("runs", cfg.name)
    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outcome = run_experiment(cfg, RunContext(seed, pool.map))
        else:
            outcome = run_experiment(cfg, RunContext(seed))
    except Exception as e:          # numerics failed: report, do not crash the shell
        print(f"{cfg.name}: run failed: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CHECK
    write_outputs(out_dir, cfg, outcome, seed, threads)
    for c in outcome.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.value:.6g}  ({c.threshold})")
    if not outcome.passed:
        failing = ", ".join(c.name for c in outcome.checks if not c.passed)
        print(f"{cfg.name}: failed checks: {failing}", file=sys.stderr)
        return EXIT_CHECK
    print(f"{cfg.name}: all checks passed; outputs in {out_dir}")
    return EXIT_OK


def cmd_validate(args):
    refs = [args.config] if args.config else [str(p) for p in bundled_configs()]
    status = EXIT_OK
    for ref in refs:
        diags = validate(ref)
        if diags:
            status = EXIT_CONFIG
            for d in diags:
                print(f"{ref}: {d}", file=sys.stderr)
        else:
            print(f"{ref}: ok")
    return status


def cmd_list(args):
    for name, kind, desc in list_experiments():
        print(f"{name:32s} {kind:10s} {desc}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="wigneravg", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", required=True, help="config path or bundled name")
    run.add_argument("--out", help="output directory (default runs/<name>)")
    run.add_argument("--threads", type=int, help=f"worker threads (overrides config and ${THREADS_ENV})")
    run.add_argument("--seed", type=int, help="seed for randomized corpora (overrides config)")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check configs without running them")
    val.add_argument("--config", help="config path or bundled name (default: all bundled)")
    val.set_defaults(func=cmd_validate)
    ls = sub.add_parser("list", help="list bundled experiments")
    ls.set_defaults(func=cmd_list)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
