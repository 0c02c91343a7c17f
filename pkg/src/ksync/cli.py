"""Command-line interface.

Subcommands: simulate, sweep, compare, disentangle, grp, theory.  Options
from a JSON config file (--config) are overridden by individual flags.
Exit codes: 0 success, 2 configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import grp as grpmod
from .core import save_graph
from .disentangle import (
    DisentangleConfig,
    bad_subgraph,
    classification_errors,
    good_subgraph,
    iterate_disentangle,
)
from .genmodel import MixtureParams, child_seed, sample_angles, sample_er_mixture, theory_bounds
from .harness import (
    ConfigError,
    ExperimentConfig,
    derive_setup2_probs,
    emit_plot,
    run_sweep,
    simulate_once,
    validate_config,
    write_csv,
    write_meta,
)
from .sync import EIG_H, SOLVERS, solve


def _parse_floats(text):
    return tuple(float(x) for x in text.split(",")) if text else None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ksync",
        description="Heterogeneous angular synchronization experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master RNG seed")
        p.add_argument("--out", default=None, help="output path (CSV or prefix)")
        p.add_argument("--threads", type=int, default=None, help="worker threads")
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--k", type=int, default=None)
        return p

    sim = common(sub.add_parser("simulate", help="one instance end-to-end"))
    sim.add_argument("--p", type=str, default=None, help="comma-separated probabilities")
    sim.add_argument("--lam", type=float, default=None)
    sim.add_argument("--solvers", type=str, default=None)

    for name, help_text in (("sweep", "Monte-Carlo sweep (setup1 or setup2)"),
                            ("compare", "multi-solver setup2 sweep")):
        sw = common(sub.add_parser(name, help=help_text))
        sw.add_argument("--mode", default=None, choices=("setup1", "setup2", "compare"))
        sw.add_argument("--p", type=str, default=None)
        sw.add_argument("--lambda-grid", dest="lambda_grid", type=str, default=None)
        sw.add_argument("--eta-grid", dest="eta_grid", type=str, default=None)
        sw.add_argument("--gamma", type=float, default=None)
        sw.add_argument("--lam", type=float, default=None)
        sw.add_argument("--trials-angles", dest="trials_angles", type=int, default=None)
        sw.add_argument("--trials-graphs", dest="trials_graphs", type=int, default=None)
        sw.add_argument("--solvers", type=str, default=None)
        sw.add_argument("--plot", default=None, help="also write an SVG chart here")

    dis = common(sub.add_parser("disentangle", help="iterative graph disentangling"))
    dis.add_argument("--p", type=str, default=None)
    dis.add_argument("--lam", type=float, default=None)
    dis.add_argument("--iterations", type=int, default=None)
    dis.add_argument("--solver", default=None, choices=("EIG-H", "EIG-R"))

    grp = common(sub.add_parser("grp", help="two-configuration graph realization"))
    grp.add_argument("--sigma", type=float, default=None)
    grp.add_argument("--radius", type=float, default=None)
    grp.add_argument("--p1", type=float, default=None)
    grp.add_argument("--p2", type=float, default=None)
    grp.add_argument("--iterations", type=int, default=None)

    theo = common(sub.add_parser("theory", help="print the theoretical bound report"))
    theo.add_argument("--p", type=str, default=None)
    theo.add_argument("--lam", type=float, default=None)
    theo.add_argument("--delta", type=float, default=None)
    theo.add_argument("--mu", type=float, default=None)
    theo.add_argument("--epsilon", type=float, default=None)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    overrides = {}
    for field in ("mode", "n", "k", "lam", "gamma", "seed", "out", "threads",
                  "trials_angles", "trials_graphs", "iterations", "sigma",
                  "radius", "p1", "p2", "delta", "mu", "epsilon"):
        val = getattr(args, field, None)
        if val is not None:
            overrides[field] = val
    for field in ("p", "lambda_grid", "eta_grid"):
        val = getattr(args, field, None)
        if val is not None:
            overrides[field] = _parse_floats(val)
    solvers = getattr(args, "solvers", None)
    if solvers is not None:
        overrides["solvers"] = tuple(s.strip() for s in solvers.split(","))
    solver = getattr(args, "solver", None)
    if solver is not None:
        overrides["solvers"] = (solver,)
    if args.command == "compare":
        overrides.setdefault("mode", "compare")
        overrides.setdefault("solvers", SOLVERS)
    elif args.command in ("sweep", "simulate"):
        pass
    else:
        overrides.setdefault("mode", args.command)
    if getattr(args, "config", None):
        return ExperimentConfig.from_json(args.config, overrides)
    return ExperimentConfig(**overrides)


def _cmd_sweep(cfg: ExperimentConfig, args) -> int:
    rows, meta = run_sweep(cfg, log=lambda msg: print(msg, file=sys.stderr))
    out = cfg.out or "sweep.csv"
    write_csv(rows, out)
    write_meta(meta, out + ".meta")
    if getattr(args, "plot", None):
        emit_plot(rows, args.plot)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def _cmd_simulate(cfg: ExperimentConfig, args) -> int:
    graph, groups, report = simulate_once(cfg)
    if cfg.out:
        save_graph(graph, cfg.out, k=cfg.k)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_disentangle(cfg: ExperimentConfig, args) -> int:
    errors = validate_config(dataclasses.replace(cfg, mode="setup1"))
    if errors:
        raise ConfigError(errors)
    groups = sample_angles(cfg.n, cfg.k, child_seed(cfg.seed, 0, 0xA))
    params = MixtureParams(n=cfg.n, k=cfg.k, lam=cfg.lam, p=cfg.p,
                           seed=child_seed(cfg.seed, 0, 0xB))
    graph = sample_er_mixture(params, groups)
    initial = solve(graph, cfg.k, cfg.solvers[0] if cfg.solvers else EIG_H)
    dcfg = DisentangleConfig(k=cfg.k, iterations=cfg.iterations,
                             solver=cfg.solvers[0] if cfg.solvers else EIG_H,
                             seed=cfg.seed)
    states = iterate_disentangle(graph, dcfg, initial, truth=groups)
    lines = ["iteration,group,matched_corr,gamma_median,gamma_median_good,n_good,n_bad"]
    for st in states:
        for l in range(cfg.k):
            lines.append(
                f"{st.iteration},{l + 1},{st.matched_corr[l]!r},{st.gamma_median!r},"
                f"{st.gamma_median_good!r},{int(st.good.sum())},{int((~st.good).sum())}"
            )
    final = states[-1]
    errs = classification_errors(graph, final)
    print(f"final misclassified edges: {errs['total_misclassified']} of {graph.m}")
    if cfg.out:
        with open(cfg.out + "_history.csv", "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        for l in range(cfg.k):
            save_graph(good_subgraph(graph, final, l), f"{cfg.out}_G{l + 1}.graph", k=cfg.k)
        save_graph(bad_subgraph(graph, final), f"{cfg.out}_W.graph", k=cfg.k)
        print(f"wrote history and {cfg.k + 1} subgraph files with prefix {cfg.out}")
    return 0


def _cmd_grp(cfg: ExperimentConfig, args) -> int:
    problems = []
    if cfg.n < 4:
        problems.append("n must be at least 4")
    if cfg.sigma < 0:
        problems.append("sigma must be non-negative")
    if cfg.radius <= 0:
        problems.append("radius must be positive")
    if cfg.p1 < 0 or cfg.p2 < 0 or cfg.p1 + cfg.p2 > 1.0 + 1e-12:
        problems.append("need p1, p2 >= 0 with p1 + p2 <= 1")
    if problems:
        raise ConfigError(problems)
    pc = grpmod.make_two_configurations(cfg.n, seed=cfg.seed)
    ps, graph = grpmod.build_patches(
        pc, radius=cfg.radius, min_overlap=cfg.min_overlap, sigma=cfg.sigma,
        p1=cfg.p1, p2=cfg.p2, seed=cfg.seed,
    )
    dcfg = DisentangleConfig(k=2, iterations=cfg.iterations, seed=cfg.seed)
    x_hat, y_hat, _ = grpmod.asap_recover(ps, graph, dcfg)
    err_x = grpmod.procrustes_error(pc.X, x_hat)
    err_y = grpmod.procrustes_error(pc.Y, y_hat)
    print(f"mean displacement after alignment: X {err_x!r}  Y {err_y!r}")
    if cfg.out:
        for suffix, arr in (("X", x_hat), ("Y", y_hat)):
            with open(f"{cfg.out}_{suffix}.csv", "w", newline="\n") as fh:
                fh.write("id,x,y\n")
                for i, (x, y) in enumerate(arr):
                    fh.write(f"{i + 1},{float(x)!r},{float(y)!r}\n")
        print(f"wrote recovered embeddings with prefix {cfg.out}")
    return 0


def _cmd_theory(cfg: ExperimentConfig, args) -> int:
    try:
        p = cfg.p if cfg.p is not None else derive_setup2_probs(cfg.k, cfg.eta_grid[0], cfg.gamma)
        params = MixtureParams(n=cfg.n, k=cfg.k, lam=cfg.lam, p=p, seed=cfg.seed)
        report = theory_bounds(params, cfg.delta, cfg.mu, cfg.epsilon)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    for field in dataclasses.fields(report):
        print(f"{field.name}: {getattr(report, field.name)}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "compare": _cmd_sweep,
    "disentangle": _cmd_disentangle,
    "grp": _cmd_grp,
    "theory": _cmd_theory,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        errors = validate_config(cfg) if args.command in ("sweep", "compare") else []
        if errors:
            raise ConfigError(errors)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
