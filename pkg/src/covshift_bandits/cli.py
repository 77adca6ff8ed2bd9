"""Command line entry point: ``run`` experiments or ``diagnose`` their worlds."""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .diagnostics import box_counting, empirical_margin_cdf, estimate_transfer_exponent
from .environments import CovariateSampler
from .harness import ConfigError, describe, emit_csv, load_config, run_experiment

DIAG_SAMPLES = 100_000
DIAG_COLUMNS = ["cell", "phase", "gamma", "length", "gamma_hat", "infinite"]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="covshift-bandits", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the regret experiment and write a CSV report"),
                        ("diagnose", "estimate shift exponents and margins of the configured world")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", help="flat key/value YAML file")
        s.add_argument("--trials", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output CSV path")
        s.add_argument("--threads", type=int)
        s.add_argument("--check-invariants", action="store_true", default=None,
                       help="run the adaptive policy under the strict invariant monitor")
    return p


def cmd_run(cfg) -> int:
    report = run_experiment(cfg)
    path = emit_csv(report, cfg.out)
    print(describe(report))
    print(f"wrote {path}")
    if cfg.figures:
        from .plotting import plot_report

        for fig in plot_report(report, path.with_suffix("")):
            print(f"wrote {fig}")
    for failure in report.failures:
        print(f"FAILED {failure.splitlines()[0]}", file=sys.stderr)
    return 1 if report.failures else 0


def cmd_diagnose(cfg) -> int:
    rng = np.random.default_rng(cfg.seed)
    field_ = cfg.make_field()
    target = CovariateSampler()
    q = target.sample(rng, DIAG_SAMPLES)
    rows = []
    for cell in cfg.cells():
        for k, phase in enumerate(cell.schedule.phases):
            p = phase.sampler.sample(rng, DIAG_SAMPLES)
            prof = estimate_transfer_exponent(p, q)
            rows.append([cell.gamma, k, phase.sampler.exponent, phase.length, prof.gamma_hat, prof.infinite])
    margin = empirical_margin_cdf(field_, target, np.geomspace(0.005, 0.6, 25), rng, DIAG_SAMPLES)
    boxes = box_counting(q, range(1, 7))
    (r0, c0), (r1, c1) = boxes[0], boxes[-1]
    box_dim = math.log(c1 / c0) / math.log(r0 / r1)

    out = Path(cfg.out)
    out = out.with_name(out.stem + "_diagnostics.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAG_COLUMNS)
        w.writerows(rows)
    print(f"field: {field_.n_bumps} bumps, {field_.n_arms} arms, Lipschitz bound {field_.lipschitz_bound:.2f}")
    print(f"margin: alpha_hat={margin.alpha_hat:.3f} c_alpha={margin.c_alpha:.3f} delta_0={margin.delta_0}")
    print(f"target box-counting dimension ~ {box_dim:.3f}")
    for cell, k, g, n, gh, inf in rows:
        print(f"cell {cell:<16s} phase {k}: gamma={g:<5g} length={n:<7d} gamma_hat={gh:.3f}{'  (infinite)' if inf else ''}")
    print(f"wrote {out}")
    if cfg.figures:
        from .plotting import plot_field

        print(f"wrote {plot_field(field_, margin, out.with_suffix(''))}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, trials=args.trials, seed=args.seed, out=args.out, threads=args.threads,
                          check_invariants=args.check_invariants)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return cmd_run(cfg) if args.command == "run" else cmd_diagnose(cfg)


if __name__ == "__main__":
    sys.exit(main())
