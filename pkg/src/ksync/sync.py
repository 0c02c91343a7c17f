"""Solvers for k-group angular synchronization and evaluation helpers.

Three solvers share the same angle-extraction rule (entrywise phase of the
top eigenvectors): EIG-H works on the raw measurement matrix, EIG-R on the
degree-normalized operator, and SDP-BM on a low-rank factorization of the
unit-diagonal semidefinite relaxation.
"""

from __future__ import annotations

import dataclasses
import itertools

import numpy as np

from . import linalg
from .core import (
    AngleGroups,
    MeasurementGraph,
    SyncEstimate,
    build_measurement_matrix,
    correlation,
    wrap_angle,
)

EIG_H = "EIG-H"
EIG_R = "EIG-R"
SDP_BM = "SDP-BM"
SOLVERS = (EIG_H, EIG_R, SDP_BM)

DEGENERATE_MODULUS = 1e-12


def extract_angles(vectors: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Entrywise phases of eigenvector columns: theta_hat[l, i] = arg(v_{l,i}).

    Entries with modulus below 1e-12 get angle 0 and are reported as
    degenerate (l, i) pairs.
    """
    V = np.asarray(vectors)
    degenerate_mask = np.abs(V.T) < DEGENERATE_MODULUS
    theta = np.asarray(wrap_angle(np.angle(V.T)), dtype=float)
    theta[degenerate_mask] = 0.0
    degenerate = tuple((int(l), int(i)) for l, i in zip(*np.nonzero(degenerate_mask)))
    return theta, degenerate


def _estimate_from_pairs(pairs: linalg.EigenPairs, solver: str, meta=None) -> SyncEstimate:
    theta_hat, degenerate = extract_angles(pairs.vectors)
    return SyncEstimate(
        theta_hat=theta_hat,
        eigenvalues=pairs.values,
        eigenvectors=pairs.vectors.T,
        solver=solver,
        degenerate_entries=degenerate,
        meta=meta or {},
    )


def estimate_from_angles(groups: AngleGroups) -> SyncEstimate:
    """Wrap known angles as a SyncEstimate (solver tag "exact").

    Useful to seed the disentangling loop from a reference solution; the
    eigenvector rows are the unit-circle representations of the angles and
    the eigenvalue slots are zeroed.
    """
    from .core import to_unit_vectors

    z = to_unit_vectors(groups)
    return SyncEstimate(
        theta_hat=groups.theta,
        eigenvalues=np.zeros(groups.k),
        eigenvectors=z,
        solver="exact",
    )


def spectral_ksync(g: MeasurementGraph, k: int) -> SyncEstimate:
    """EIG-H: phases of the top-k eigenvectors of the measurement matrix."""
    if g.m == 0:
        raise ValueError("measurement graph has no edges")
    H = build_measurement_matrix(g, diagonal=1.0)
    return _estimate_from_pairs(linalg.top_k_eig(H, k), EIG_H)


def normalized_spectral_ksync(g: MeasurementGraph, k: int) -> SyncEstimate:
    """EIG-R: phases of the top-k eigenvectors of the degree-normalized operator."""
    if g.m == 0:
        raise ValueError("measurement graph has no edges")
    H = build_measurement_matrix(g, diagonal=1.0)
    return _estimate_from_pairs(linalg.degree_normalized_eig(H, k), EIG_R)


@dataclasses.dataclass(frozen=True)
class SdpBmConfig:
    """Low-rank factorization settings for the SDP solver.

    ``rank`` defaults to k + 2 (strictly above k avoids the rank-deficient
    saddle).  ``seed`` only matters when an initial row has zero norm and
    must be filled randomly.
    """

    rank: int | None = None
    max_iters: int = 1000
    rel_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


def _row_normalize(V: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(V, axis=1)
    dead = norms < 1e-300
    if np.any(dead):
        V = V.copy()
        V[dead] = fallback[dead]
        norms = np.linalg.norm(V, axis=1)
    return V / norms[:, None]


def angle_objective(H: np.ndarray, theta_hat: np.ndarray) -> float:
    """trace(H V V^*) for the feasible point with rows e^{i theta}/sqrt(k).

    This turns any k-group angle estimate into a feasible point of the
    unit-diagonal relaxation, giving a baseline objective value.
    """
    theta_hat = np.atleast_2d(np.asarray(theta_hat, dtype=float))
    k = theta_hat.shape[0]
    V = np.exp(1j * theta_hat.T) / np.sqrt(k)
    return float(np.real(np.sum(np.conj(V) * (H @ V))))


def sdp_bm_ksync(g: MeasurementGraph, k: int, cfg: SdpBmConfig | None = None) -> SyncEstimate:
    """SDP-BM: Burer-Monteiro ascent on trace(H V V^*) with unit-norm rows.

    V starts from the top-r eigenvectors of H (rows normalized) and is
    updated by V <- row_normalize((H + beta I) V), where the shift beta
    makes the iteration matrix PSD; the shift adds the constant n*beta to
    the objective, so ascent of the shifted objective is ascent of
    trace(H V V^*) as well.  The objective sequence is checked to be
    non-decreasing at every step.  Angles come from the top-k eigenvectors
    of V V^*, obtained through the r x r Gram matrix.
    """
    if g.m == 0:
        raise ValueError("measurement graph has no edges")
    cfg = cfg or SdpBmConfig()
    r = cfg.rank if cfg.rank is not None else k + 2
    if r < k:
        raise ValueError(f"rank {r} must be at least k={k}")
    H = build_measurement_matrix(g, diagonal=1.0)
    n = g.n
    r = min(r, n)

    w, U = np.linalg.eigh(H)
    shift = max(0.0, -float(w[0]))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    fallback = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    V = _row_normalize(np.ascontiguousarray(U[:, ::-1][:, :r]), fallback)

    def objective(M):
        return float(np.real(np.sum(np.conj(M) * (H @ M))))

    obj = objective(V)
    path = [obj]
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        W = H @ V + shift * V
        V = _row_normalize(W, fallback)
        new_obj = objective(V)
        if new_obj < obj - 1e-9 * max(1.0, abs(obj)):
            raise RuntimeError(
                f"objective decreased at iteration {iterations}: {obj} -> {new_obj}"
            )
        path.append(new_obj)
        if abs(new_obj - obj) <= cfg.rel_tol * max(1.0, abs(obj)):
            obj = new_obj
            converged = True
            break
        obj = new_obj

    gram = V.conj().T @ V
    s, Wg = np.linalg.eigh(gram)
    s, Wg = s[::-1], Wg[:, ::-1]
    cols = []
    for j in range(k):
        if j < s.size and s[j] > 1e-30:
            cols.append((V @ Wg[:, j]) / np.sqrt(s[j]))
        else:
            cols.append(np.zeros(n, dtype=complex))
    vectors = np.column_stack(cols)
    # zero columns (rank-deficient Upsilon) are still reported; their angles
    # all come out degenerate
    norms = np.linalg.norm(vectors, axis=0)
    vectors = vectors / np.where(norms < 1e-30, 1.0, norms)
    values = np.array([s[j] if j < s.size else 0.0 for j in range(k)])

    theta_hat, degenerate = extract_angles(vectors)
    meta = {
        "iterations": iterations,
        "converged": converged,
        "objective": obj,
        "objective_path": tuple(path),
        "shift": shift,
        "rank": r,
    }
    return SyncEstimate(
        theta_hat=theta_hat,
        eigenvalues=values,
        eigenvectors=vectors.T,
        solver=SDP_BM,
        degenerate_entries=degenerate,
        meta=meta,
    )


def solve(g: MeasurementGraph, k: int, solver: str, cfg: SdpBmConfig | None = None) -> SyncEstimate:
    """Dispatch to one of the three solvers by tag."""
    if solver == EIG_H:
        return spectral_ksync(g, k)
    if solver == EIG_R:
        return normalized_spectral_ksync(g, k)
    if solver == SDP_BM:
        return sdp_bm_ksync(g, k, cfg)
    raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")


@dataclasses.dataclass(frozen=True)
class EvalResult:
    """Correlations between truth groups (rows) and estimates (columns).

    ``assignment[l]`` is the estimate index matched to truth group l, and
    ``matched[l]`` the corresponding correlation.
    """

    corr: np.ndarray
    matched: np.ndarray
    assignment: tuple


def evaluate(truth: AngleGroups, est: SyncEstimate, matching: str = "by-index") -> EvalResult:
    """Score an estimate against ground truth under a matching rule.

    by-index pairs estimate j with truth group j (the convention that
    eigenvalue order mirrors descending group density); greedy picks each
    row's best unused column in row order; exhaustive maximizes the total
    matched correlation over all permutations (k <= 8).
    """
    if truth.n != est.n:
        raise ValueError("truth and estimate differ in n")
    if truth.k != est.k:
        raise ValueError("truth and estimate differ in k")
    k = truth.k
    corr = np.empty((k, k))
    for l in range(k):
        for j in range(k):
            corr[l, j] = correlation(truth.theta[l], est.theta_hat[j])

    if matching == "by-index":
        assignment = tuple(range(k))
    elif matching == "greedy":
        used: set[int] = set()
        picks = []
        for l in range(k):
            order = np.argsort(-corr[l])
            j = next(int(x) for x in order if int(x) not in used)
            used.add(j)
            picks.append(j)
        assignment = tuple(picks)
    elif matching == "exhaustive":
        if k > 8:
            raise ValueError("exhaustive matching supports k <= 8; use greedy")
        assignment = max(
            itertools.permutations(range(k)),
            key=lambda perm: sum(corr[l, perm[l]] for l in range(k)),
        )
    else:
        raise ValueError(f"unknown matching {matching!r}")

    matched = np.array([corr[l, assignment[l]] for l in range(k)])
    return EvalResult(corr=corr, matched=matched, assignment=tuple(int(x) for x in assignment))
