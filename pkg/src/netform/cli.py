"""Command-line entry point: ``netform <subcommand> CONFIG``.

Every subcommand validates the whole config before touching the output
directory, writes plain CSV files whose first line names the config hash,
and produces byte-identical files for any ``--workers`` value.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from . import __version__
from .config import RunConfig, load_config
from .counterfactual import run_counterfactual
from .exchange import (
    DivergedChainError,
    EstimationData,
    read_chain_csv,
    run_two_phase,
    summarize_posterior,
    write_chain_csv,
)
from .features import build_features
from .gibbs import GibbsConfig, density_trace, simulate_villages
from .graph import (
    VillageNetwork,
    link_proportion_diagnostics,
    load_edges,
    network_stats,
    summarize_link_proportions,
    summarize_networks,
    write_edges,
)
from .households import (
    ConfigError,
    DataError,
    generate_synthetic,
    load_households,
    summarize_households,
    write_households,
)
from .logit import LogitSpec, SeparationError, fit_logit, stack_dyads
from .potential import score
from .rng import stream

log = logging.getLogger("netform")

FLOAT = "%.17g"


class CliError(RuntimeError):
    """User-facing failure; the message is printed and the exit status is 2."""


class Stopped(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers


def _emit(path: Path, write: Callable[[Path], None]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    write(tmp)
    os.replace(tmp, path)
    log.info("wrote %s", path)
    return path


INCOME_NOTE = "# income in thousands of taka\n"


def _frame(cfg: RunConfig, name: str, df: pd.DataFrame, index: bool = True, label: str | None = None, note: str = ""):
    def write(p):
        with p.open("w", newline="") as fh:
            fh.write(cfg.header + note)
            df.to_csv(fh, index=index, index_label=label, lineterminator="\n", float_format=FLOAT)

    return _emit(cfg.output_dir / name, write)


# ---------------------------------------------------------------------------
# data


def _villages(cfg: RunConfig):
    if cfg.households_path is not None:
        return load_households(cfg.households_path)
    return generate_synthetic(cfg.synthetic, cfg.seed)


def _features(cfg: RunConfig, villages):
    return [build_features(v, cfg.recipe, cfg.convention) for v in villages]


def _simulate_truth(cfg: RunConfig, villages, features):
    if cfg.truth is None:
        raise CliError("synthetic data needs a [generate] truth table to simulate networks")
    beta = cfg.parameter(cfg.truth, "generate.truth")
    scores = [score(f, beta) for f in features]
    starts = [VillageNetwork.empty(v.village_id, v.n) for v in villages]
    gibbs = GibbsConfig(cfg.truth_sweeps, cfg.gibbs.flips_per_step, cfg.seed)
    return simulate_villages(
        starts, scores, gibbs,
        rng_for=lambda net: stream(cfg.seed, "generate", "network", net.village_id),
        workers=cfg.workers,
    )


def _data(cfg: RunConfig, need_networks: bool = True):
    villages = _villages(cfg)
    features = _features(cfg, villages)
    networks = None
    if cfg.edges_path is not None:
        networks = load_edges(cfg.edges_path, villages)
    elif cfg.synthetic is not None and cfg.truth is not None:
        networks = _simulate_truth(cfg, villages, features)
    if need_networks and networks is None:
        raise CliError("no networks: set data.edges or a [generate] truth for synthetic data")
    return villages, features, networks


def _chain_path(cfg: RunConfig) -> Path:
    return cfg.chain_path or cfg.output_dir / "chain.csv"


def _posterior(cfg: RunConfig):
    path = _chain_path(cfg)
    if not path.exists():
        raise CliError(
            f"posterior chain not found: {path}; run 'netform fit-ergm' first "
            "or point counterfactual.chain at an existing chain file"
        )
    names, draws = read_chain_csv(path)
    expected = cfg.parameter(None, "recipe").names
    if names != expected:
        raise CliError(f"{path}: chain coordinates {names} do not match the feature recipe {expected}")
    return draws


def _beta_for(cfg: RunConfig, mapping: dict | None, what: str):
    if mapping is not None:
        return cfg.parameter(mapping, what)
    path = _chain_path(cfg)
    if path.exists():
        draws = _posterior(cfg)
        log.info("%s: using the posterior mean of %s", what, path)
        return cfg.parameter(None, what).with_flat(draws.mean(axis=0))
    if cfg.truth is not None:
        return cfg.parameter(cfg.truth, what)
    raise CliError(f"{what}: set it in the config or run fit-ergm to produce {path}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_describe(cfg: RunConfig, args) -> None:
    villages, features, networks = _data(cfg, need_networks=False)
    _frame(cfg, "household_summary.csv", summarize_households(villages), label="variable", note=INCOME_NOTE)
    if networks is None:
        log.warning("no networks available; skipping network summaries")
        return
    _frame(cfg, "network_summary.csv", summarize_networks(networks), label="statistic")
    records = [link_proportion_diagnostics(n, f) for n, f in zip(networks, features)]
    _frame(cfg, "link_proportions.csv", summarize_link_proportions(records), label="proportion")
    per = pd.DataFrame([r.__dict__ for r in records])
    _frame(cfg, "link_proportions_by_village.csv", per, index=False)


def cmd_generate(cfg: RunConfig, args) -> None:
    if cfg.synthetic is None:
        raise CliError("generate needs a [data.synthetic] table")
    villages = generate_synthetic(cfg.synthetic, cfg.seed)
    features = _features(cfg, villages)
    networks = _simulate_truth(cfg, villages, features)
    hh = cfg.households_path or cfg.output_dir / "households.csv"
    ed = cfg.edges_path or cfg.output_dir / "edges.csv"
    _emit(hh, lambda p: write_households(villages, p, header=cfg.header + INCOME_NOTE))
    _emit(ed, lambda p: write_edges(networks, villages, p, header=cfg.header))


def cmd_fit_logit(cfg: RunConfig, args) -> None:
    _, features, networks = _data(cfg)
    design = stack_dyads(networks, features)
    specs = [cfg.logit_spec] if cfg.logit_spec else [
        s.value for s in LogitSpec
        if ({"gender"} if s is LogitSpec.GENDER else {"male", "female"}) <= set(design.names)
    ]
    if not specs:
        specs = [None]
    tables = []
    for spec in specs:
        try:
            fit = fit_logit(design, spec, cluster=cfg.logit_cluster)
        except SeparationError as exc:
            raise CliError(
                f"logit ({spec or 'as given'}): {exc}. Drop or merge the named column "
                "in [features], since its outcome is perfectly predicted"
            ) from None
        t = fit.table()
        t.insert(0, "spec", spec or "as_given")
        t.index.name = "variable"
        t = t.reset_index()
        tables.append(t)
        footer = pd.DataFrame(
            [{"spec": spec or "as_given", "variable": k, "coef": v}
             for k, v in (("loglik", fit.loglik), ("observations", fit.nobs),
                          ("iterations", fit.iterations))]
        )
        tables.append(footer)
    _frame(cfg, "logit_report.csv", pd.concat(tables, ignore_index=True), index=False)


def cmd_fit_ergm(cfg: RunConfig, args) -> None:
    _, features, networks = _data(cfg)
    data = EstimationData(networks, features)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    ckpt = cfg.output_dir / "fit_ergm.ckpt.npz"
    stamp = cfg.output_dir / "fit_ergm.ckpt.hash"
    if args.resume:
        if not ckpt.exists():
            raise CliError(f"--resume: no checkpoint at {ckpt}")
        if not stamp.exists() or stamp.read_text().strip() != cfg.hash:
            raise CliError(f"--resume: checkpoint {ckpt} was written under a different config")
    else:
        ckpt.unlink(missing_ok=True)
    stamp.write_text(cfg.hash + "\n")
    beta0 = cfg.parameter(cfg.beta0, "sampler.beta0").flat
    try:
        result = run_two_phase(
            data, cfg.sampler, beta0,
            checkpoint=ckpt if cfg.sampler.checkpoint_every > 0 or args.stop_after else None,
            stop_after=args.stop_after,
        )
    except DivergedChainError as exc:
        raise CliError(
            f"{exc} at beta = {np.array2string(exc.beta, precision=4)}. "
            "Lower sampler.tau0, start from a smaller sampler.beta0, or rescale large features"
        ) from None
    if result is None:
        raise Stopped(f"stopped after {args.stop_after} iterations; rerun with --resume")
    _emit(cfg.output_dir / "chain.csv", lambda p: write_chain_csv(result, p, header=cfg.header))
    summary = summarize_posterior(result.posterior)
    _frame(cfg, "posterior_summary.csv", summary, label="parameter")
    rows = []
    for chain in (result.phase1, result.phase2):
        last = min(10_000, len(chain))
        rows.append(
            {
                "phase": chain.phase,
                "iterations": len(chain),
                "acceptance_rate": chain.acceptance_rate(),
                "trailing_window": last,
                "trailing_acceptance_rate": chain.acceptance_rate(last),
                "final_log_tau": float(chain.log_tau[-1]),
            }
        )
    _frame(cfg, "acceptance.csv", pd.DataFrame(rows), index=False)
    ckpt.unlink(missing_ok=True)
    stamp.unlink(missing_ok=True)


def cmd_simulate(cfg: RunConfig, args) -> None:
    villages, features, networks = _data(cfg, need_networks=cfg.simulate_start == "observed")
    beta = _beta_for(cfg, cfg.simulate_beta, "simulate.beta")
    scores = [score(f, beta) for f in features]
    if cfg.simulate_start == "observed":
        starts = networks
    else:
        starts = [VillageNetwork.empty(v.village_id, v.n) for v in villages]
    sims = simulate_villages(
        starts, scores, cfg.gibbs,
        rng_for=lambda net: stream(cfg.seed, "simulate", net.village_id),
        workers=cfg.workers,
    )
    _emit(cfg.output_dir / "simulated_edges.csv", lambda p: write_edges(sims, villages, p, header=cfg.header))
    rows = []
    for net in sims:
        s = network_stats(net)
        rows.append(
            {"village_id": net.village_id, "n": net.n, "mean_degree": s.mean_degree,
             "density": s.density, "clustering": s.clustering, "asymmetry": s.asymmetry,
             "mean_distance": s.mean_distance, "reachable_fraction": s.reachable_fraction}
        )
    _frame(cfg, "simulated_stats.csv", pd.DataFrame(rows), index=False)
    _frame(cfg, "simulated_summary.csv", summarize_networks(sims), label="statistic")


def cmd_counterfactual(cfg: RunConfig, args) -> None:
    if not cfg.scenarios:
        raise CliError("no [[scenario]] tables in the config")
    draws = _posterior(cfg)
    villages = _villages(cfg)
    for sc in cfg.scenarios:
        log.info("scenario %s: %d grid values x %d replications", sc.label, len(sc.grid), sc.replications)
        result = run_counterfactual(draws, villages, cfg.recipe, sc, cfg.convention, workers=cfg.workers)
        name = "counterfactual_" + sc.label.replace(":", "_") + ".csv"
        _emit(cfg.output_dir / name, lambda p, r=result: r.to_csv(p, header=cfg.header))


def cmd_diagnose_mixing(cfg: RunConfig, args) -> None:
    villages, features, _ = _data(cfg, need_networks=False)
    beta = _beta_for(cfg, cfg.diagnose_beta, "diagnose.beta")
    every = cfg.diagnose_every
    if cfg.gibbs.sweeps < every:
        raise CliError(f"gibbs.sweeps ({cfg.gibbs.sweeps}) is shorter than diagnose.every ({every})")
    jobs = []
    for v, f in zip(villages, features):
        s = score(f, beta)
        full = np.ones((v.n, v.n), dtype=np.uint8)
        np.fill_diagonal(full, 0)
        for label, start in (("empty", VillageNetwork.empty(v.village_id, v.n)),
                             ("full", VillageNetwork(v.village_id, full))):
            jobs.append((v.village_id, label, start, s))

    def trace(job):
        vid, label, start, s = job
        return density_trace(start, s, cfg.gibbs, every, stream(cfg.seed, "diagnose", label, vid))

    if cfg.workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(cfg.workers) as pool:
            traces = list(pool.map(trace, jobs))
    else:
        traces = [trace(j) for j in jobs]
    rows, summary = [], []
    for (vid, label, _, _), tr in zip(jobs, traces):
        for b, d in enumerate(tr, start=1):
            rows.append((vid, label, b * every, d))
    for k in range(0, len(jobs), 2):
        a, b = traces[k], traces[k + 1]
        half = len(a) // 2
        summary.append(
            {
                "village_id": jobs[k][0],
                "final_density_empty_start": a[-1],
                "final_density_full_start": b[-1],
                "late_mean_gap": float(abs(a[half:].mean() - b[half:].mean())),
            }
        )
    _frame(cfg, "mixing_trace.csv", pd.DataFrame(rows, columns=["village_id", "start", "step", "density"]), index=False)
    _frame(cfg, "mixing_summary.csv", pd.DataFrame(summary), index=False)


COMMANDS = {
    "describe": (cmd_describe, "household, network and link-proportion summaries"),
    "generate": (cmd_generate, "write a synthetic household file and simulated edges"),
    "fit-logit": (cmd_fit_logit, "dyadic logit report"),
    "fit-ergm": (cmd_fit_ergm, "two-phase exchange sampler: chain, summary, acceptance"),
    "simulate": (cmd_simulate, "simulate networks at a parameter vector"),
    "counterfactual": (cmd_counterfactual, "scenario curves from the posterior"),
    "diagnose-mixing": (cmd_diagnose_mixing, "density traces from empty and full starts"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netform", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("config", type=Path, help="TOML run configuration")
        p.add_argument("--workers", type=int, default=None, help="parallel workers (results do not depend on it)")
        p.add_argument("--output", type=Path, default=None, help="override output_dir")
        p.add_argument("-v", "--verbose", action="count", default=0)
        if name == "fit-ergm":
            p.add_argument("--resume", action="store_true", help="continue from the checkpoint in output_dir")
            p.add_argument("--stop-after", type=int, default=None, metavar="N",
                           help="checkpoint and stop after N iterations (counted over both phases)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, check_paths=args.command != "generate")
        if args.workers is not None:
            cfg = cfg.with_workers(args.workers)
        if args.output is not None:
            from dataclasses import replace

            cfg = replace(cfg, output_dir=args.output)
        COMMANDS[args.command][0](cfg, args)
    except Stopped as exc:
        print(f"netform: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, DataError, CliError) as exc:
        print(f"netform {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
