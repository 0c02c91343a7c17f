"""Experiment configuration, Monte-Carlo sweeps, and CSV/SVG emission.

Sweeps are reproducible by construction: every (grid point, angle trial,
graph trial) tuple gets its own RNG substream derived from the master seed,
and aggregation iterates results in a fixed order, so serial and threaded
runs emit byte-identical CSV.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .genmodel import MixtureParams, child_seed, sample_angles, sample_ba_mixture, sample_er_mixture
from .sync import EIG_H, SOLVERS, SdpBmConfig, evaluate, solve

CSV_HEADER = ("mode", "solver", "n", "k", "lambda", "eta", "gamma",
              "group", "mean_corr", "std_corr", "trials")

MODES = ("setup1", "setup2", "compare", "disentangle", "grp", "theory")

# substream tags so angle, graph, and auxiliary draws can never collide
_TAG_ANGLES = 0xA
_TAG_GRAPH = 0xB


class ConfigError(Exception):
    """Invalid experiment configuration; carries the full list of problems."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """One experiment description (a single JSON document on disk).

    setup1 sweeps the edge density over ``lambda_grid`` at an explicit ``p``;
    setup2 (and compare) sweep the noise level over ``eta_grid`` at fixed
    density ``lam``, deriving p from the consecutive gap ``gamma``.
    """

    mode: str = "setup1"
    n: int = 500
    k: int = 2
    p: tuple | None = None
    eta: float | None = None
    lambda_grid: tuple = (0.2, 0.4, 0.6, 0.8, 1.0)
    gamma: float = 0.05
    eta_grid: tuple = (0.1, 0.2, 0.3, 0.4, 0.5)
    lam: float = 1.0
    trials_angles: int = 20
    trials_graphs: int = 20
    solvers: tuple = (EIG_H,)
    seed: int = 0
    out: str | None = None
    threads: int = 1
    ba_attachment: int | None = None
    iterations: int = 20
    sigma: float = 0.0
    radius: float = 2.5
    min_overlap: int = 3
    p1: float = 0.55
    p2: float = 0.45
    delta: float = 0.0
    mu: float = 0.25
    epsilon: float = 0.5

    def __post_init__(self):
        if self.p is not None:
            object.__setattr__(self, "p", tuple(float(x) for x in self.p))
        object.__setattr__(self, "lambda_grid", tuple(float(x) for x in self.lambda_grid))
        object.__setattr__(self, "eta_grid", tuple(float(x) for x in self.eta_grid))
        object.__setattr__(self, "solvers", tuple(self.solvers))

    @classmethod
    def from_json(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        with open(path) as fh:
            data = json.load(fh)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError([f"unknown config key {key!r}" for key in sorted(unknown)])
        if overrides:
            data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


def validate_config(cfg: ExperimentConfig) -> list:
    """Collect every configuration problem (empty list means valid)."""
    errors = []
    if cfg.mode not in MODES:
        errors.append(f"mode must be one of {MODES}, got {cfg.mode!r}")
    if cfg.n < 1:
        errors.append("n must be at least 1")
    if cfg.k < 1:
        errors.append("k must be at least 1")
    if cfg.trials_angles < 1 or cfg.trials_graphs < 1:
        errors.append("trial counts must be at least 1")
    if cfg.threads < 1:
        errors.append("threads must be at least 1")
    for s in cfg.solvers:
        if s not in SOLVERS:
            errors.append(f"unknown solver {s!r}")
    if not 0.0 <= cfg.lam <= 1.0:
        errors.append("lam must lie in [0, 1]")
    if cfg.mode == "setup1":
        if cfg.p is None:
            errors.append("setup1 requires an explicit p vector")
        else:
            if len(cfg.p) != cfg.k:
                errors.append(f"p has {len(cfg.p)} entries for k={cfg.k}")
            try:
                MixtureParams(n=max(cfg.n, 1), k=len(cfg.p), lam=1.0, p=cfg.p)
            except ValueError as exc:
                errors.append(f"invalid p: {exc}")
            if cfg.eta is not None and abs(cfg.eta - (1.0 - sum(cfg.p))) > 1e-9:
                errors.append("eta is inconsistent with 1 - sum(p)")
        if not cfg.lambda_grid:
            errors.append("lambda_grid must be non-empty")
        if any(not 0.0 <= x <= 1.0 for x in cfg.lambda_grid):
            errors.append("lambda_grid values must lie in [0, 1]")
    if cfg.mode in ("setup2", "compare"):
        if not cfg.eta_grid:
            errors.append("eta_grid must be non-empty")
        if any(not 0.0 <= x < 1.0 for x in cfg.eta_grid):
            errors.append("eta_grid values must lie in [0, 1)")
        if cfg.gamma < 0:
            errors.append("gamma must be non-negative")
    if cfg.ba_attachment is not None and not 1 <= cfg.ba_attachment < cfg.n:
        errors.append("ba_attachment must satisfy 1 <= m < n")
    return errors


def derive_setup2_probs(k: int, eta: float, gamma: float) -> tuple:
    """Descending arithmetic p with sum 1 - eta and consecutive gap gamma."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must lie in [0, 1)")
    mean = (1.0 - eta) / k
    p = tuple(mean + 0.5 * (k + 1 - 2 * l) * gamma for l in range(1, k + 1))
    if p[-1] <= 0.0:
        raise ValueError(f"smallest probability {p[-1]:.6g} is not positive")
    return p


def _grid_points(cfg: ExperimentConfig, log) -> list:
    """(lam, eta, p, gamma_text) per grid point, skipping infeasible ones."""
    points = []
    if cfg.mode == "setup1":
        p = cfg.p
        eta = 1.0 - sum(p)
        for lam in cfg.lambda_grid:
            points.append((lam, eta, p, ""))
        return points
    for eta in cfg.eta_grid:
        try:
            p = derive_setup2_probs(cfg.k, eta, cfg.gamma)
            MixtureParams(n=cfg.n, k=cfg.k, lam=cfg.lam, p=p)
        except ValueError as exc:
            log(f"skipping eta={eta}: {exc}")
            continue
        points.append((cfg.lam, eta, p, repr(float(cfg.gamma))))
    return points


def _run_trial(cfg, gi, point, a, gidx):
    lam, eta, p, _ = point
    angle_seed = child_seed(cfg.seed, gi, a, _TAG_ANGLES)
    graph_seed = child_seed(cfg.seed, gi, a, gidx, _TAG_GRAPH)
    groups = sample_angles(cfg.n, cfg.k, angle_seed)
    params = MixtureParams(n=cfg.n, k=cfg.k, lam=lam, p=p, seed=graph_seed)
    if cfg.ba_attachment is not None:
        graph = sample_ba_mixture(params, cfg.ba_attachment, groups)
    else:
        graph = sample_er_mixture(params, groups)
    out = {}
    for solver in cfg.solvers:
        est = solve(graph, cfg.k, solver, SdpBmConfig(seed=graph_seed))
        ev = evaluate(groups, est, matching="by-index")
        diag = {
            "degenerate": len(est.degenerate_entries),
            "iterations": est.meta.get("iterations"),
            "converged": est.meta.get("converged"),
        }
        out[solver] = (ev.matched, diag)
    return out


def run_sweep(cfg: ExperimentConfig, log=None) -> tuple[list, dict]:
    """Monte-Carlo sweep over the configured grid.

    Returns (rows, meta): one row per (grid point, solver, group) with the
    mean and standard deviation of the by-index matched correlation over
    trials_angles x trials_graphs runs, plus aggregated solver diagnostics.
    """
    errors = validate_config(cfg)
    if errors:
        raise ConfigError(errors)
    messages = []
    logger = log if log is not None else messages.append
    points = _grid_points(cfg, logger)

    tasks = [
        (gi, a, gidx)
        for gi in range(len(points))
        for a in range(cfg.trials_angles)
        for gidx in range(cfg.trials_graphs)
    ]
    results = {}
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            for key, res in zip(
                tasks,
                pool.map(lambda t: _run_trial(cfg, t[0], points[t[0]], t[1], t[2]), tasks),
            ):
                results[key] = res
    else:
        for gi, a, gidx in tasks:
            results[(gi, a, gidx)] = _run_trial(cfg, gi, points[gi], a, gidx)

    rows = []
    diagnostics = {}
    trials = cfg.trials_angles * cfg.trials_graphs
    for gi, point in enumerate(points):
        lam, eta, _, gamma_text = point
        for solver in cfg.solvers:
            vals = np.empty((cfg.trials_angles, cfg.trials_graphs, cfg.k))
            degen = 0
            iters = []
            nonconv = 0
            for a in range(cfg.trials_angles):
                for gidx in range(cfg.trials_graphs):
                    matched, diag = results[(gi, a, gidx)][solver]
                    vals[a, gidx] = matched
                    degen += diag["degenerate"]
                    if diag["iterations"] is not None:
                        iters.append(diag["iterations"])
                    if diag["converged"] is False:
                        nonconv += 1
            for l in range(cfg.k):
                flat = vals[:, :, l].ravel()
                rows.append((
                    cfg.mode, solver, cfg.n, cfg.k, lam, eta, gamma_text,
                    l + 1, float(flat.mean()), float(flat.std()), trials,
                ))
            diagnostics[f"grid{gi}/{solver}"] = {
                "lambda": lam,
                "eta": eta,
                "degenerate_entries": degen,
                "sdp_iterations_mean": float(np.mean(iters)) if iters else None,
                "sdp_non_converged": nonconv,
            }
    meta = {
        "config": dataclasses.asdict(cfg),
        "skipped": messages,
        "diagnostics": diagnostics,
    }
    return rows, meta


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows) -> str:
    lines = [",".join(CSV_HEADER)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_csv(rows, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(rows_to_csv(rows))


def write_meta(meta, path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
            "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def plot_svg(rows) -> str:
    """Deterministic SVG line chart of sweep rows (one mode at a time).

    One polyline per (solver, group) with a +-1 std band; the x axis is the
    swept variable (lambda for setup1, eta otherwise).
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to plot")
    modes = {row[0] for row in rows}
    if len(modes) > 1:
        raise ValueError(f"rows mix modes {sorted(modes)}")
    mode = rows[0][0]
    x_index, x_label = (4, "lambda") if mode == "setup1" else (5, "eta")

    series = {}
    for row in rows:
        series.setdefault((row[1], row[7]), []).append(
            (float(row[x_index]), float(row[8]), float(row[9]))
        )
    for pts in series.values():
        pts.sort()
    xs = [x for pts in series.values() for x, _, _ in pts]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi - x_lo < 1e-12:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    left, right, top, bottom = 70.0, 620.0, 20.0, 390.0

    def sx(x):
        return left + (x - x_lo) / (x_hi - x_lo) * (right - left)

    def sy(y):
        y = min(max(y, 0.0), 1.0)
        return bottom - y * (bottom - top)

    parts = [
        '<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 640 440">',
        '<rect width="640" height="440" fill="white"/>',
        f'<line x1="{left:.2f}" y1="{bottom:.2f}" x2="{right:.2f}" y2="{bottom:.2f}" stroke="black"/>',
        f'<line x1="{left:.2f}" y1="{top:.2f}" x2="{left:.2f}" y2="{bottom:.2f}" stroke="black"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        parts.append(
            f'<text x="{left - 8:.2f}" y="{sy(frac) + 4:.2f}" font-size="12" '
            f'text-anchor="end">{frac:g}</text>'
        )
    for x in (x_lo, x_hi):
        parts.append(
            f'<text x="{sx(x):.2f}" y="{bottom + 18:.2f}" font-size="12" '
            f'text-anchor="middle">{x:g}</text>'
        )
    parts.append(
        f'<text x="{(left + right) / 2:.2f}" y="428" font-size="14" '
        f'text-anchor="middle">{x_label}</text>'
    )
    parts.append(
        '<text x="16" y="205" font-size="14" text-anchor="middle" '
        'transform="rotate(-90 16 205)">correlation</text>'
    )
    for idx, key in enumerate(sorted(series)):
        solver, group = key
        color = _PALETTE[idx % len(_PALETTE)]
        pts = series[key]
        if len(pts) > 1:
            band_top = " ".join(f"{sx(x):.2f},{sy(m + s):.2f}" for x, m, s in pts)
            band_bot = " ".join(f"{sx(x):.2f},{sy(m - s):.2f}" for x, m, s in reversed(pts))
            parts.append(
                f'<polygon points="{band_top} {band_bot}" fill="{color}" '
                'fill-opacity="0.15" stroke="none"/>'
            )
            line = " ".join(f"{sx(x):.2f},{sy(m):.2f}" for x, m, _ in pts)
            parts.append(
                f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
        else:
            x, m, _ = pts[0]
            parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(m):.2f}" r="4" fill="{color}"/>')
        ly = top + 14 * (idx + 1)
        parts.append(f'<rect x="{right - 150:.2f}" y="{ly - 9:.2f}" width="10" height="10" fill="{color}"/>')
        parts.append(
            f'<text x="{right - 136:.2f}" y="{ly:.2f}" font-size="12">{solver} group {group}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plot(rows, path) -> None:
    """Write the SVG chart for sweep rows; deterministic bytes per input."""
    svg = plot_svg(rows)
    with open(path, "w", newline="\n") as fh:
        fh.write(svg)


def simulate_once(cfg: ExperimentConfig):
    """One end-to-end instance: sample, solve with every solver, evaluate."""
    errors = validate_config(cfg)
    if errors:
        raise ConfigError(errors)
    lam = cfg.lam
    if cfg.p is not None:
        p = cfg.p
    else:
        eta = cfg.eta_grid[0] if cfg.eta is None else cfg.eta
        p = derive_setup2_probs(cfg.k, eta, cfg.gamma)
    groups = sample_angles(cfg.n, cfg.k, child_seed(cfg.seed, 0, _TAG_ANGLES))
    params = MixtureParams(n=cfg.n, k=cfg.k, lam=lam, p=p,
                           seed=child_seed(cfg.seed, 0, _TAG_GRAPH))
    if cfg.ba_attachment is not None:
        graph = sample_ba_mixture(params, cfg.ba_attachment, groups)
    else:
        graph = sample_er_mixture(params, groups)
    report = {}
    for solver in cfg.solvers:
        est = solve(graph, cfg.k, solver, SdpBmConfig(seed=cfg.seed))
        ev_idx = evaluate(groups, est, matching="by-index")
        ev_best = evaluate(groups, est, matching="exhaustive" if cfg.k <= 8 else "greedy")
        report[solver] = {
            "matched_by_index": [float(x) for x in ev_idx.matched],
            "matched_best": [float(x) for x in ev_best.matched],
            "assignment_best": list(ev_best.assignment),
            "degenerate": len(est.degenerate_entries),
        }
    return graph, groups, report
