"""Iterative synchronization and graph disentangling.

Each round re-partitions the full edge set by smallest circular residual
against the current per-group angle estimates, re-synchronizes every group
on its assigned subgraph, and classifies a per-group quantile of the
largest residuals as bad.  Good edges per group plus the pooled bad edges
always partition the edge set exactly.
"""

from __future__ import annotations

import dataclasses
import itertools

import numpy as np

from . import linalg
from .core import (
    AngleGroups,
    MeasurementGraph,
    build_measurement_matrix,
    circular_distance,
    connected_components,
    correlation,
    wrap_angle,
)
from .sync import EIG_H, EIG_R, SyncEstimate, extract_angles


@dataclasses.dataclass(frozen=True)
class DisentangleConfig:
    """Settings for the iterative disentangling loop.

    ``bad_fractions`` gives, per group, the fraction of assigned edges to
    classify as bad each round.  When None it is derived from the graph's
    ground-truth labels (see :func:`default_bad_fractions`); with
    ``literal_noise_rule`` the fraction for group l is instead the
    complement of that group's share of the whole edge set, computed from
    the same labels.
    """

    k: int
    iterations: int = 20
    bad_fractions: tuple | None = None
    solver: str = EIG_H
    seed: int = 0
    literal_noise_rule: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.solver not in (EIG_H, EIG_R):
            raise ValueError("solver must be EIG-H or EIG-R")
        if self.bad_fractions is not None:
            bf = tuple(float(x) for x in self.bad_fractions)
            if len(bf) != self.k or any(not 0.0 <= f < 1.0 for f in bf):
                raise ValueError("bad_fractions must be k values in [0, 1)")
            object.__setattr__(self, "bad_fractions", bf)


def default_bad_fractions(p, eta: float | None = None) -> tuple:
    """Per-group bad fraction assuming outliers spread uniformly over groups.

    With outlier mass eta split evenly, group l is expected to absorb
    eta/k outliers next to its p_l good edges, so the bad share of its
    assigned edges is (eta/k) / (p_l + eta/k).
    """
    p = [float(x) for x in np.atleast_1d(p)]
    k = len(p)
    if eta is None:
        eta = max(0.0, 1.0 - sum(p))
    share = eta / k
    return tuple(share / (pl + share) if pl + share > 0 else 0.0 for pl in p)


def _fractions_from_labels(labels: np.ndarray, k: int, literal: bool) -> tuple:
    counts = np.array([(labels == l).sum() for l in range(1, k + 1)], dtype=float)
    outliers = float((labels == 0).sum())
    total = counts.sum() + outliers
    if total == 0:
        return tuple(0.0 for _ in range(k))
    if literal:
        # global reading: everything outside group l's share counts as bad
        return tuple(min(0.999, 1.0 - c / total) for c in counts)
    share = outliers / k
    return tuple(share / (c + share) if c + share > 0 else 0.0 for c in counts)


def residual_matrices(g: MeasurementGraph, theta_hat: np.ndarray) -> np.ndarray:
    """Circular residuals psi[l, e] of every edge against every group estimate."""
    theta_hat = np.atleast_2d(np.asarray(theta_hat, dtype=float))
    k = theta_hat.shape[0]
    psi = np.empty((k, g.m))
    for l in range(k):
        predicted = wrap_angle(theta_hat[l, g.ii] - theta_hat[l, g.jj])
        psi[l] = circular_distance(g.theta, predicted)
    return psi


def assign_edges(psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-edge argmin group (ties to the lowest index) and the min residual."""
    psi = np.atleast_2d(psi)
    assignment = np.argmin(psi, axis=0)
    gamma = psi[assignment, np.arange(psi.shape[1])]
    return assignment, gamma


def _sync_subgraph(g: MeasurementGraph, mask: np.ndarray, solver: str) -> tuple[np.ndarray, bool]:
    """Synchronize one assigned subgraph (k=1).

    Only the largest connected component of the subgraph support is
    synchronized; remaining nodes get angle 0.  Returns (angles, flag)
    where the flag marks a disconnected support.
    """
    theta = np.zeros(g.n)
    ii, jj = g.ii[mask], g.jj[mask]
    if ii.size == 0:
        return theta, True
    touched = np.unique(np.concatenate([ii, jj]))
    roots = connected_components(g.n, ii, jj)
    touched_roots = roots[touched]
    uniq, counts = np.unique(touched_roots, return_counts=True)
    main_root = int(uniq[np.argmax(counts)])
    comp = touched[touched_roots == main_root]
    disconnected = comp.size < touched.size

    index = np.full(g.n, -1, dtype=np.int64)
    index[comp] = np.arange(comp.size)
    edge_in = index[ii] >= 0
    sub = MeasurementGraph(
        n=comp.size, ii=index[ii[edge_in]], jj=index[jj[edge_in]], theta=g.theta[mask][edge_in]
    )
    H = build_measurement_matrix(sub, diagonal=1.0)
    if solver == EIG_R:
        pairs = linalg.degree_normalized_eig(H, 1)
    else:
        pairs = linalg.top_k_eig(H, 1)
    angles, _ = extract_angles(pairs.vectors)
    theta[comp] = angles[0]
    return theta, disconnected


@dataclasses.dataclass(frozen=True)
class DisentangleState:
    """Snapshot after one disentangling round.

    ``assignment`` maps every edge to a group (0-based); ``good`` marks the
    edges kept in that group's recovered subgraph, the rest being pooled as
    bad.  ``matched_corr`` holds per-group correlations against ground truth
    when it was supplied, and ``history`` the sequence of those tuples up to
    this round.
    """

    iteration: int
    theta_hat: np.ndarray
    assignment: np.ndarray
    good: np.ndarray
    gamma: np.ndarray
    disconnected: tuple
    matched_corr: tuple | None = None
    history: tuple = ()

    @property
    def gamma_median(self) -> float:
        return float(np.median(self.gamma)) if self.gamma.size else 0.0

    @property
    def gamma_median_good(self) -> float:
        vals = self.gamma[self.good]
        return float(np.median(vals)) if vals.size else 0.0


def good_subgraph(g: MeasurementGraph, state: DisentangleState, group: int) -> MeasurementGraph:
    """Recovered good subgraph of one group (1-based label in the output)."""
    mask = (state.assignment == group) & state.good
    return MeasurementGraph(
        n=g.n, ii=g.ii[mask], jj=g.jj[mask], theta=g.theta[mask],
        labels=np.full(int(mask.sum()), group + 1, dtype=np.int64),
    )


def bad_subgraph(g: MeasurementGraph, state: DisentangleState) -> MeasurementGraph:
    """Pooled bad edges across all groups (label 0)."""
    mask = ~state.good
    return MeasurementGraph(
        n=g.n, ii=g.ii[mask], jj=g.jj[mask], theta=g.theta[mask],
        labels=np.zeros(int(mask.sum()), dtype=np.int64),
    )


def _bad_count(m_l: int, fraction: float) -> int:
    """Nearest-rank count of edges to classify bad out of m_l."""
    if m_l == 0 or fraction <= 0.0:
        return 0
    return m_l - int(np.ceil((1.0 - fraction) * m_l - 1e-12))


def iterate_disentangle(
    g: MeasurementGraph,
    cfg: DisentangleConfig,
    initial: SyncEstimate,
    truth: AngleGroups | None = None,
) -> list[DisentangleState]:
    """Run the iterative disentangling loop from an initial estimate.

    Every round: build residuals against the previous angles, assign each
    edge to its best group, re-synchronize each group on all its assigned
    edges, then classify the top per-group residual quantile as bad (ties
    at the threshold stay good).  Returns one state per round.
    """
    if initial.k != cfg.k:
        raise ValueError("initial estimate has wrong number of groups")
    if initial.n != g.n:
        raise ValueError("initial estimate has wrong number of nodes")
    fractions = cfg.bad_fractions
    if fractions is None:
        if g.labels is None:
            raise ValueError(
                "bad_fractions not set and graph carries no ground-truth labels"
            )
        fractions = _fractions_from_labels(g.labels, cfg.k, cfg.literal_noise_rule)

    theta = np.asarray(initial.theta_hat, dtype=float)
    states: list[DisentangleState] = []
    history: list[tuple] = []
    for r in range(1, cfg.iterations + 1):
        psi = residual_matrices(g, theta)
        assignment, gamma = assign_edges(psi)
        new_theta = np.zeros_like(theta)
        good = np.zeros(g.m, dtype=bool)
        flags = []
        for l in range(cfg.k):
            mask = assignment == l
            angles_l, flag = _sync_subgraph(g, mask, cfg.solver)
            flags.append(flag)
            new_theta[l] = angles_l
            m_l = int(mask.sum())
            if m_l == 0:
                continue
            predicted = wrap_angle(angles_l[g.ii[mask]] - angles_l[g.jj[mask]])
            res = np.asarray(circular_distance(g.theta[mask], predicted))
            n_bad = _bad_count(m_l, fractions[l])
            if n_bad == 0:
                good[mask] = True
                continue
            order = np.sort(res)
            threshold = order[m_l - n_bad - 1] if n_bad < m_l else -np.inf
            good[np.nonzero(mask)[0][res <= threshold]] = True

        matched = None
        if truth is not None:
            matched = tuple(_matched_correlations(truth, new_theta))
            history.append(matched)
        states.append(
            DisentangleState(
                iteration=r,
                theta_hat=new_theta.copy(),
                assignment=assignment,
                good=good,
                gamma=gamma,
                disconnected=tuple(flags),
                matched_corr=matched,
                history=tuple(history),
            )
        )
        theta = new_theta
    return states


def _matched_correlations(truth: AngleGroups, theta_hat: np.ndarray) -> list[float]:
    """Best-permutation per-group correlations (exhaustive for small k)."""
    k = truth.k
    corr = np.array(
        [[correlation(truth.theta[l], theta_hat[j]) for j in range(k)] for l in range(k)]
    )
    if k <= 8:
        best = max(
            itertools.permutations(range(k)),
            key=lambda perm: sum(corr[l, perm[l]] for l in range(k)),
        )
    else:
        best = tuple(range(k))
    return [float(corr[l, best[l]]) for l in range(k)]


def classification_errors(g: MeasurementGraph, state: DisentangleState) -> dict:
    """Extra/missing edge counts per recovered subgraph vs ground-truth labels."""
    if g.labels is None:
        raise ValueError("graph carries no ground-truth labels")
    k = int(state.theta_hat.shape[0])
    out = {}
    recovered_group = np.where(state.good, state.assignment + 1, 0)
    for l in range(1, k + 1):
        true_l = g.labels == l
        rec_l = recovered_group == l
        out[l] = {
            "extra": int(np.sum(rec_l & ~true_l)),
            "missing": int(np.sum(true_l & ~rec_l)),
        }
    true_bad = g.labels == 0
    rec_bad = recovered_group == 0
    out["bad"] = {
        "extra": int(np.sum(rec_bad & ~true_bad)),
        "missing": int(np.sum(true_bad & ~rec_bad)),
    }
    out["total_misclassified"] = int(np.sum(recovered_group != g.labels))
    return out
