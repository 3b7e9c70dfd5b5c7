"""Command-line front end.

    riskmarket run --preset opinion_pool_fig1 --out runs/fig1
    riskmarket run --config market.json --out runs/m --seed 3 --max-rounds 2000
    riskmarket presets

``run`` writes ``<out>.trace.csv`` and ``<out>.summary.json``. Exit status
is 0 when the market converged, 2 when it hit the round limit first (the
trace is still written) and 1 on configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    MarketConfig,
    build_market,
    load_config,
    preset_config,
    presets,
    queue_policy,
    stop_rule,
)
from .duality import UnsupportedFamilyError, dual_objective_from_market, recover_primal
from .engine import MarketRun

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2

logger = logging.getLogger("riskmarket")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class RunSummary:
    name: str
    rounds: int
    converged: bool
    final_objective: float
    final_price: list[float]
    final_inventory: list[float]
    mean_price: list[float]
    primal_value: float | None
    duality_gap: float | None
    wall_clock_seconds: float


def trace_header(k: int) -> list[str]:
    return (
        ["t", "agent"]
        + [f"delta_{i + 1}" for i in range(k)]
        + ["cost_paid", "objective"]
        + [f"price_{i + 1}" for i in range(k)]
        + [f"mean_price_{i + 1}" for i in range(k)]
    )


def write_trace(run: MarketRun, path: Path) -> None:
    """One row per round; ``mean_price_*`` is the running mean over all rounds so far."""
    k = run.market.n_securities
    means = run.running_mean_price() if run.records else np.zeros((0, k))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(k))
        for rec, mean in zip(run.records, means):
            w.writerow(
                [rec.t, rec.agent_id]
                + [fmt(v) for v in rec.delta_shares]
                + [fmt(rec.cost_paid), fmt(rec.objective_after)]
                + [fmt(v) for v in rec.price_after]
                + [fmt(v) for v in mean]
            )


def summarize(cfg: MarketConfig, run: MarketRun, seconds: float) -> RunSummary:
    market = run.market
    L = run.state.objective
    primal_value = gap = None
    try:
        primal = dual_objective_from_market(market.agents, market.cost, market.basis, market.n_securities)
    except UnsupportedFamilyError:
        primal = None
    if primal is not None:
        P = recover_primal(market.cost, run.state.inventory)
        primal_value = primal.value(P)
        gap = primal_value + L
    mean = run.running_mean_price()[-1] if run.records else run.final_price
    return RunSummary(
        name=cfg.name,
        rounds=run.rounds,
        converged=run.converged,
        final_objective=L,
        final_price=[float(v) for v in run.final_price],
        final_inventory=[float(v) for v in run.state.inventory],
        mean_price=[float(v) for v in mean],
        primal_value=primal_value,
        duality_gap=gap,
        wall_clock_seconds=seconds,
    )


def run(
    config_path: str | None = None,
    out_prefix: str = "market",
    seed_override: int | None = None,
    *,
    preset: str | None = None,
    max_rounds: int | None = None,
    eps: float | None = None,
) -> int:
    try:
        if preset is not None:
            cfg = preset_config(preset, seed_override if seed_override is not None else 0)
            base_dir = Path(".")
        elif config_path is not None:
            cfg, base_dir = load_config(config_path)
            if seed_override is not None:
                cfg = cfg.model_copy(update={"seed": seed_override})
        else:
            raise ConfigError("pass --config PATH or --preset NAME")
        if max_rounds is not None or eps is not None:
            stop = cfg.stop.model_copy(
                update={k: v for k, v in (("max_rounds", max_rounds), ("eps", eps)) if v is not None}
            )
            cfg = cfg.model_copy(update={"stop": stop})
        market = build_market(cfg, base_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    start = time.perf_counter()
    result = market.run(queue_policy(cfg), stop_rule(cfg))
    seconds = time.perf_counter() - start
    summary = summarize(cfg, result, seconds)

    out = Path(out_prefix)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_trace(result, Path(f"{out}.trace.csv"))
        with open(f"{out}.summary.json", "w") as fh:
            json.dump(asdict(summary), fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    status = "converged" if summary.converged else "did not converge"
    print(f"{cfg.name}: {status} after {summary.rounds} rounds, objective {summary.final_objective:.10g}")
    return EXIT_OK if summary.converged else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskmarket", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a market and write its trace and summary")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON market config")
    src.add_argument("--preset", choices=presets())
    p.add_argument("--out", default="market", help="output prefix (default: %(default)s)")
    p.add_argument("--seed", type=int, help="root seed, overrides the config")
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--eps", type=float, help="convergence threshold on trade size")

    sub.add_parser("presets", help="list built-in presets")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "presets":
        for name in presets():
            print(name)
        return EXIT_OK
    if args.max_rounds is not None and args.max_rounds < 1:
        print("config error: --max-rounds must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    return run(
        args.config, args.out, args.seed, preset=args.preset, max_rounds=args.max_rounds, eps=args.eps
    )


if __name__ == "__main__":
    sys.exit(main())
