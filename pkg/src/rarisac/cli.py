"""Command-line entry point: ``rarisac {run,sweep,validate,trace}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from pathlib import Path

from .baselines import SCHEMES, run_scheme
from .config import ConfigError, ScenarioConfig, load_config
from .harness import (aggregate, export_csv, export_summary, export_trace, load_sweep_spec,
                      run_sweep)
from .scenario import make_instance
from .solver import SensingInfeasibleError

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3

OUT_ENV = "RARISAC_OUT"

log = logging.getLogger("rarisac")


def _schemes(text):
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in names if s not in SCHEMES]
    if bad or not names:
        raise ConfigError(f"unknown scheme(s) {', '.join(bad) or '(none)'}; choose from {', '.join(SCHEMES)}")
    return names


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "out")


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(rng_seed=args.seed)
    return cfg


def build_parser():
    p = argparse.ArgumentParser(prog="rarisac", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, schemes_default):
        sp.add_argument("--config", help="scenario config file (key = value lines)")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
        sp.add_argument("--seed", type=int, help="scenario seed / sweep master seed")
        sp.add_argument("--schemes", default=schemes_default, help="comma-separated subset of " + ",".join(SCHEMES))
        sp.add_argument("--threads", type=int, default=1, help="worker processes")
        sp.add_argument("--trials", type=int, help="Monte-Carlo trials (sweep)")

    common(sub.add_parser("run", help="solve one scenario and print a summary"), ",".join(SCHEMES))
    sp = sub.add_parser("sweep", help="Monte-Carlo sweep from a sweep file")
    sp.add_argument("spec", help="sweep file")
    common(sp, None)
    common(sub.add_parser("trace", help="per-iteration convergence trace"), "proposed")
    sub.add_parser("validate", help="run the built-in oracle and property checks")
    return p


def cmd_run(args):
    cfg = _load(args)
    inst = make_instance(cfg)
    print(f"scenario seed={inst.seed} K={cfg.n_users} M={cfg.n_cells} N={cfg.n_ris} Nt={cfg.n_tx} "
          f"eps={cfg.crb_eps:g} sigma_r={inst.scene.sigma_r:.4g}")
    for name in _schemes(args.schemes):
        rep = run_scheme(name, inst.ch, inst.scene, cfg, inst.init_rng())
        status = "feasible" if rep.feasible else "INFEASIBLE"
        print(f"{name:10s} U_com={rep.U_com_bits:8.4f} bits  tr(CRB)={rep.crb_trace:.5g}  "
              f"iterations={rep.iterations:3d}  {status}" + (f"  flags={rep.flags}" if rep.flags else ""))
    return EXIT_OK


def cmd_sweep(args):
    spec = load_sweep_spec(args.spec)
    if args.trials is not None:
        spec.trials = args.trials
    if args.seed is not None:
        spec.master_seed = args.seed
    if args.schemes:
        spec.schemes = _schemes(args.schemes)
    spec.validate()
    base = load_config(args.config) if args.config else ScenarioConfig()
    out = _out_dir(args)

    def progress(i, n):
        log.info("trial %d/%d", i, n)

    records = run_sweep(spec, base, workers=max(1, args.threads), progress=progress)
    stem = f"sweep_{spec.axis}"
    export_csv(records, out / f"{stem}.csv", timing_path=out / f"{stem}_timing.csv")
    summary = aggregate(records)
    export_summary(summary, out / f"{stem}_summary.csv")
    for row in summary:
        print(f"{spec.axis}={row['value']:<8g} {row['scheme']:10s} median U={row['U_median']:.4f} "
              f"IQR=[{row['U_q1']:.4f}, {row['U_q3']:.4f}] feasible={row['feasible_frac']:.2f}")
    print(f"wrote {len(records)} records to {out / (stem + '.csv')}")
    return EXIT_OK


def cmd_trace(args):
    cfg = _load(args)
    inst = make_instance(cfg)
    out = _out_dir(args)
    for name in _schemes(args.schemes):
        rep = run_scheme(name, inst.ch, inst.scene, cfg, inst.init_rng())
        path = export_trace(rep, out / f"trace_{name}.csv")
        print(f"{name}: {rep.iterations} iterations, U_com={rep.U_com_bits:.4f} bits -> {path}")
    return EXIT_OK


def cmd_validate(args):
    from .validate import run_all

    results = run_all()
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    n_ok = sum(ok for _, ok, _ in results)
    print(f"{n_ok}/{len(results)} checks passed")
    return EXIT_OK if n_ok == len(results) else EXIT_FAILED


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "trace": cmd_trace, "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SensingInfeasibleError as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
