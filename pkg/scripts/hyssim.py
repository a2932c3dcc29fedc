# scripts/hyssim.py
"""hyssim command line: gen / run / sweep / oracle."""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

# Ensure project root is importable
PROJ_ROOT = Path(__file__).resolve().parents[1]
if str(PROJ_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJ_ROOT))

import pandas as pd

from config.settings import HYSSIM_OUTPUT_DIR
from core import experiment as ex
from core.errors import HyssimError
from core.log import get_logger, set_level
from core.lp_format import emit_lp
from core.oracle import compare_platforms, pareto_sweep
from core.tracegen import synthetic_trace, write_arrival_csv, write_rate_csv

logger = get_logger("cli")

EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_IO = 0, 2, 3, 4


def _burstiness(text: str) -> float:
    v = float(text)
    if not 0.5 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"burstiness must be in [0.5, 1), got {v}")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _alphas(text: str) -> List[float]:
    try:
        vals = [float(a) for a in text.split(",") if a.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"alphas must be numbers, got {text!r}") from None
    if not vals or any(not 0.0 <= a <= 1.0 for a in vals):
        raise argparse.ArgumentTypeError("alphas must be a comma list of values in [0, 1]")
    return vals


def _overrides(pairs: Optional[List[str]]) -> Dict[str, str]:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise argparse.ArgumentTypeError(f"--set expects key=value, got {pair!r}")
        k, v = pair.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _out_path(path: str) -> str:
    return path if os.path.isabs(path) or os.path.dirname(path) else os.path.join(HYSSIM_OUTPUT_DIR, path)


def lp_paths(path: str, alphas: List[float]) -> List[Tuple[float, str]]:
    """One LP file per objective weight; several weights get `<stem>.alpha<value><ext>`."""
    if len(alphas) == 1:
        return [(alphas[0], path)]
    stem, ext = os.path.splitext(path)
    return [(a, f"{stem}.alpha{a:g}{ext or '.lp'}") for a in alphas]


def _config(args, extra: Optional[Dict[str, str]] = None) -> ex.ExperimentConfig:
    overrides = _overrides(getattr(args, "set", None))
    overrides.update(extra or {})
    return ex.ExperimentConfig.load(getattr(args, "config", None), overrides)


# -----------------------
# Commands
# -----------------------
def cmd_gen(args) -> int:
    extra = {"trace.bucket": args.bucket, "trace.burstiness": str(args.burstiness), "trace.hours": str(args.hours),
             "trace.avg_workers": str(args.avg_workers), "trace.slot_s": str(args.slot_s), "seed": str(args.seed)}
    if args.size_ms is not None:
        extra["trace.size_ms"] = str(args.size_ms)
    cfg = _config(args, extra)
    rates, arrivals = synthetic_trace(args.bucket, args.burstiness, args.hours, args.avg_workers, args.seed,
                                      args.slot_s, cfg.size_s(), float(cfg["sim.deadline_mult"]))
    out = _out_path(args.out)
    stem, _ = os.path.splitext(out)
    arrivals_out = f"{stem}.arrivals.csv"
    comments = [f"bucket={args.bucket}", f"burstiness={args.burstiness}", f"hours={args.hours}",
                f"avg_workers={args.avg_workers}", f"seed={args.seed}"]
    write_rate_csv(rates, out, comments)
    write_arrival_csv(arrivals, arrivals_out, comments)
    logger.info("wrote %d slots to %s and %d arrivals to %s", rates.num_slots, out, len(arrivals), arrivals_out)
    return EXIT_OK


def cmd_run(args) -> int:
    extra = {}
    if args.seed is not None:
        extra["seed"] = str(args.seed)
    if args.scheduler:
        extra["scheduler"] = args.scheduler
    cfg = _config(args, extra)
    seed = int(cfg["seed"])
    trace = ex.load_trace(args.trace, cfg, seed)
    name = ex.resolve_scheduler_name(cfg["scheduler"], cfg)
    report = ex.run_one(trace, cfg, name, seed)
    df = pd.DataFrame([ex.report_row(report, name, seed, args.extended)])
    ex.write_csv(df, _out_path(args.out), cfg.header_lines(), append=True)
    logger.info("%s: efficiency %.2f%%, relative cost %.3f, %d misses",
                name, report.efficiency_pct, report.relative_cost, report.deadline_misses)
    return EXIT_OK


def cmd_sweep(args) -> int:
    extra = {}
    if args.seed is not None:
        extra["seed"] = str(args.seed)
    if args.repetitions is not None:
        extra["repetitions"] = str(args.repetitions)
    cfg = _config(args, extra)
    axes = ex.parse_axes(args.axis or [])
    names = [ex.resolve_scheduler_name(n.strip(), cfg) for n in args.schedulers.split(",") if n.strip()]
    seeds = ex.repetition_seeds(int(cfg["seed"]), int(cfg["repetitions"]))
    df, errors = ex.run_sweep(cfg, axes, names, seeds, args.trace, args.workers)
    ex.write_csv(df, _out_path(args.out), cfg.header_lines())
    logger.info("sweep wrote %d rows to %s", len(df), args.out)
    if errors:
        logger.error("%d sweep task(s) failed", len(errors))
        return EXIT_FAILED
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _config(args)
    inst = ex.oracle_instance(args.trace, cfg, args.interval_s)
    if args.emit_lp:
        for alpha, path in lp_paths(_out_path(args.emit_lp), args.alphas):
            emit_lp(inst.weighted(alpha), path)
            logger.info("wrote LP file %s (alpha=%g, %d intervals)", path, alpha, inst.T)
        return EXIT_OK
    if args.compare:
        df = pd.DataFrame(compare_platforms(inst, args.alphas),
                          columns=["platform", "alpha", "energy_j", "cost_usd", "objective"])
    else:
        points = pareto_sweep(inst, args.alphas)
        df = pd.DataFrame([{"alpha": p.alpha, "energy_j": p.energy_j, "cost_usd": p.cost_usd} for p in points])
    ex.write_csv(df, _out_path(args.out), cfg.header_lines())
    return EXIT_OK


# -----------------------
# Parser
# -----------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyssim", description="Hybrid FPGA/CPU scheduling simulator")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="key=value file layered over config/defaults.cfg")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    g = sub.add_parser("gen", help="generate a synthetic rate trace and its arrivals")
    common(g)
    g.add_argument("--bucket", choices=["short", "medium", "long"], default="short")
    g.add_argument("--burstiness", type=_burstiness, default=0.6)
    g.add_argument("--hours", type=_positive, default=2.0)
    g.add_argument("--avg-workers", type=_positive, default=100.0)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--slot-s", type=_positive, default=60.0)
    g.add_argument("--size-ms", type=_positive, default=None, help="fixed request size instead of sampling")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="simulate one scheduler on one trace")
    common(r)
    r.add_argument("--trace", required=True)
    r.add_argument("--scheduler", default=None)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", required=True)
    r.add_argument("--extended", action="store_true", help="add share, idle and event-hash columns")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="cross-product parameter sweep")
    common(s)
    s.add_argument("--axis", action="append", metavar="KEY=V1,V2", help="config key and values to sweep")
    s.add_argument("--schedulers", default="sporkE")
    s.add_argument("--repetitions", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--trace", default=None, help="fixed trace; synthetic traces per seed otherwise")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle", help="MILP pareto sweep over a trace")
    common(o)
    o.add_argument("--trace", required=True)
    o.add_argument("--alphas", type=_alphas, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    o.add_argument("--interval-s", type=_positive, default=None)
    o.add_argument("--compare", action="store_true", help="hybrid vs FPGA-only vs CPU-only")
    o.add_argument("--emit-lp", default=None, metavar="PATH",
                   help="write the LP instead of solving; one file per alpha when several are given")
    o.add_argument("--out", default="pareto.csv")
    o.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level:
        try:
            set_level(args.log_level)
        except ValueError:
            parser.error(f"unknown log level {args.log_level!r}")
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except HyssimError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
