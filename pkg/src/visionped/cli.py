"""Command line entry point: ``visionped run|compare|psi-table|validate``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError, VisionPedError

log = logging.getLogger("visionped")


def _load(args):
    from .scenario import RunConfig

    cfg = RunConfig.load(args.config)
    return cfg.with_overrides(seed=args.seed, out_dir=args.out_dir, threads=args.threads)


def cmd_run(args) -> int:
    from .runner import run

    cfg = _load(args)
    rep = run(cfg)
    ct = "not reached" if rep.completion_time is None else f"{rep.completion_time:.3f} s"
    print(f"{cfg.model}: {rep.steps} steps, t = {rep.t_final:.3f} s, "
          f"evacuated {rep.n_evacuated}/{rep.n_particles} (completion {ct}), "
          f"physics loop {rep.runtime_s:.2f} s -> {rep.output_dir}")
    return 0


def cmd_compare(args) -> int:
    from .runner import compare_runs

    table = compare_runs(args.reports)
    text = json.dumps(table, indent=2)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    for row in table["runs"]:
        ct = row["completion_time"]
        print(f"{row['name']:<30} {row['model']:<22} completion "
              f"{'-' if ct is None else f'{ct:8.3f}'}  runtime {row['runtime_s']:8.2f} s  "
              f"ratio {row['runtime_ratio']:.2f}")
    return 0


def cmd_psi_table(args) -> int:
    from .local_field import cached_psi_table, save_psi_table, scale_params

    cfg = _load(args)
    if not cfg.vision.lam > 0:
        raise ConfigError("psi-table needs lambda > 0 in the vision block")
    table = cached_psi_table(scale_params(cfg.vision), cfg.weights.h, cfg.run.psi_cache_dir)
    if args.output:
        save_psi_table(table, args.output)
    print(f"Psi table: {len(table.speeds)} speeds in [0, {table.speeds[-1]:g}], "
          f"max Psi = {table.psi_plus.max():.6g}, asymmetry {table.max_asymmetry:.2e}")
    return 0


def cmd_validate(args) -> int:
    from .scenario import seed_particles

    cfg = _load(args)
    st = seed_particles(cfg.scenario)
    print(f"ok: {cfg.model}, {len(st)} particles, h = {cfg.weights.h:g}, dt = {cfg.dt:g}, "
          f"hash {cfg.content_hash()[:12]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="visionped", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_overrides(p):
        p.add_argument("config", help="YAML run config")
        p.add_argument("--seed", type=int, default=None, help="override scenario.seed")
        p.add_argument("--threads", type=int, default=None, help="numba thread count")
        p.add_argument("--out-dir", default=None, help="override run.output_dir")
        return p

    p = with_overrides(sub.add_parser("run", help="run a simulation"))
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("compare", help="compare run reports")
    p.add_argument("reports", nargs="+", help="report.json files or run directories")
    p.add_argument("-o", "--output", default=None, help="write the comparison table as JSON")
    p.set_defaults(func=cmd_compare)
    p = with_overrides(sub.add_parser("psi-table", help="build or load the cached Psi table"))
    p.add_argument("-o", "--output", default=None, help="also save the table to this .npz")
    p.set_defaults(func=cmd_psi_table)
    p = with_overrides(sub.add_parser("validate", help="check a config and its seeding"))
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VisionPedError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
