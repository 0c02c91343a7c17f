"""Two-configuration graph realization via patch alignment and bi-synchronization.

A point cloud is covered by one patch per node (the node plus its
neighbors within a radius).  Every patch carries two local embeddings, one
per configuration, each expressed in a private frame rotated by an unknown
angle.  Aligning overlapping patches yields pairwise rotation measurements
that form a bi-synchronization instance; disentangling recovers the two
measurement subgraphs, and a least-squares assembly of rotated patches
recovers both global embeddings.
"""

from __future__ import annotations

import dataclasses
import warnings

import numpy as np

from .core import (
    AngleGroups,
    MeasurementGraph,
    TWO_PI,
    connected_components,
    wrap_angle,
)
from .disentangle import (
    DisentangleConfig,
    DisentangleState,
    _sync_subgraph,
    good_subgraph,
    iterate_disentangle,
)
from .genmodel import substream
from .sync import EIG_R, normalized_spectral_ksync, spectral_ksync

NONCONGRUENCE_FLOOR = 0.01  # fraction of the diameter


def _as_complex(points: np.ndarray) -> np.ndarray:
    return points[:, 0] + 1j * points[:, 1]


def procrustes_rotation(a: np.ndarray, b: np.ndarray) -> float:
    """Rotation angle best aligning b onto a (rotation only, centered).

    In complex coordinates the optimum is the argument of the cross
    covariance sum((a - mean(a)) * conj(b - mean(b))).
    """
    ca = _as_complex(np.asarray(a, float))
    cb = _as_complex(np.asarray(b, float))
    ca = ca - ca.mean()
    cb = cb - cb.mean()
    return float(wrap_angle(np.angle(np.sum(ca * np.conj(cb)))))


def procrustes_error(
    A: np.ndarray,
    B: np.ndarray,
    allow_reflection: bool = False,
    allow_scale: bool = False,
) -> float:
    """Mean displacement after optimally aligning B onto A.

    The fit is over rotation + translation; reflection and scale are off by
    default and opt-in.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 2 or A.shape[1] != 2 or A.shape[0] < 2:
        raise ValueError("A and B must be equal n x 2 arrays with n >= 2")
    ca = _as_complex(A)
    ca = ca - ca.mean()

    def fit(cb):
        cb = cb - cb.mean()
        cross = np.sum(ca * np.conj(cb))
        phase = cross / abs(cross) if abs(cross) > 0 else 1.0
        if allow_scale:
            denom = float(np.sum(np.abs(cb) ** 2))
            scale = abs(cross) / denom if denom > 0 else 1.0
        else:
            scale = 1.0
        return float(np.mean(np.abs(ca - scale * phase * cb)))

    err = fit(_as_complex(B))
    if allow_reflection:
        err = min(err, fit(np.conj(_as_complex(B))))
    return err


@dataclasses.dataclass(frozen=True)
class PointCloudPair:
    """Two n x 2 configurations of the same nodes, verified non-congruent."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.shape != Y.shape or X.ndim != 2 or X.shape[1] != 2:
            raise ValueError("X and Y must be equal n x 2 arrays")
        diameter = float(np.max(np.linalg.norm(X - X.mean(axis=0), axis=1))) * 2.0
        if procrustes_error(X, Y) <= NONCONGRUENCE_FLOOR * max(diameter, 1e-12):
            raise ValueError("configurations are congruent (or nearly so)")
        for arr, name in ((X, "X"), (Y, "Y")):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.X.shape[0]


def make_two_configurations(
    n: int,
    generator: str = "grid",
    shear=((1.0, 0.3), (0.0, 1.0)),
    region_rotation: float = 0.4,
    seed: int = 0,
) -> PointCloudPair:
    """Sample X and derive a non-congruent Y by shearing plus a regional twist.

    Y = shear @ X, with the points in the right half-plane (x above the
    median) additionally rotated by ``region_rotation`` about their
    centroid.  Rejects congruent outputs and degenerate shears.
    """
    if n < 4:
        raise ValueError("need at least 4 points")
    shear = np.asarray(shear, dtype=float)
    if shear.shape != (2, 2) or abs(np.linalg.det(shear)) < 1e-8:
        raise ValueError("shear must be a non-degenerate 2x2 matrix")
    rng = substream(seed, 0x6)
    if generator == "grid":
        rows = int(np.floor(np.sqrt(n)))
        while n % rows:
            rows -= 1
        cols = n // rows
        xs, ys = np.meshgrid(np.arange(cols, dtype=float), np.arange(rows, dtype=float))
        X = np.column_stack([xs.ravel(), ys.ravel()])
    elif generator == "uniform-square":
        X = rng.random((n, 2)) * np.sqrt(n)
    else:
        raise ValueError(f"unknown generator {generator!r}")
    Y = X @ shear.T
    region = X[:, 0] > np.median(X[:, 0])
    if np.any(region) and region_rotation:
        c, s = np.cos(region_rotation), np.sin(region_rotation)
        R = np.array([[c, -s], [s, c]])
        centroid = Y[region].mean(axis=0)
        Y[region] = (Y[region] - centroid) @ R.T + centroid
    return PointCloudPair(X=X, Y=Y)


@dataclasses.dataclass(frozen=True)
class PatchSet:
    """Per-node patches with their two rotated local embeddings.

    ``members[i]`` are the node indices of patch i (its center first is not
    guaranteed; membership is radius-based).  ``local_x[i]`` / ``local_y[i]``
    are the type-X / type-Y local coordinates: centered ground-truth
    coordinates rotated by the patch's hidden angle, plus optional noise.
    ``rotations`` holds those hidden angles as a 2-group AngleGroups
    (row 1 for type-X frames, row 2 for type-Y).
    """

    n_points: int
    centers: np.ndarray
    members: tuple
    local_x: tuple
    local_y: tuple
    rotations: AngleGroups

    @property
    def n_patches(self) -> int:
        return len(self.members)


def _local_embedding(coords: np.ndarray, angle: float, noise: np.ndarray) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s], [s, c]])
    centered = coords - coords.mean(axis=0)
    return centered @ R.T + noise


def build_patches(
    pc: PointCloudPair,
    radius: float = 2.5,
    min_overlap: int = 3,
    sigma: float = 0.0,
    p1: float = 0.55,
    p2: float = 0.45,
    seed: int = 0,
) -> tuple[PatchSet, MeasurementGraph]:
    """Cover the cloud with one patch per node and align overlapping pairs.

    Patch membership comes from X's geometry (center plus neighbors within
    ``radius``); patches with fewer than 3 members are dropped with a
    warning.  Patch pairs sharing at least ``min_overlap`` nodes become
    edges of the measurement graph: with probability p1 the two type-X
    embeddings are aligned (group 1), with probability p2 the type-Y ones
    (group 2), otherwise one of each (outlier).  The rotation estimate is
    the rotation-only Procrustes angle over the common nodes.
    """
    if min_overlap < 3:
        raise ValueError("min_overlap must be at least 3")
    if p1 < 0 or p2 < 0 or p1 + p2 > 1.0 + 1e-12:
        raise ValueError("need p1, p2 >= 0 with p1 + p2 <= 1")
    X, Y = pc.X, pc.Y
    n = pc.n
    diff = X[:, None, :] - X[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    members = []
    centers = []
    for i in range(n):
        mem = np.nonzero(dist[i] <= radius)[0]
        if mem.size < 3:
            warnings.warn(f"dropping patch {i}: only {mem.size} members")
            continue
        members.append(mem)
        centers.append(i)
    if not members:
        raise ValueError("no patch has 3 or more members")
    N = len(members)
    centers = np.array(centers, dtype=np.int64)

    rot_rng = substream(seed, 0x1)
    rotations = AngleGroups(theta=wrap_angle(TWO_PI * rot_rng.random((2, N))))
    noise_rng = substream(seed, 0x2)
    local_x, local_y = [], []
    for idx, mem in enumerate(members):
        nx = sigma * noise_rng.standard_normal((mem.size, 2)) if sigma else np.zeros((mem.size, 2))
        ny = sigma * noise_rng.standard_normal((mem.size, 2)) if sigma else np.zeros((mem.size, 2))
        local_x.append(_local_embedding(X[mem], rotations.theta[0, idx], nx))
        local_y.append(_local_embedding(Y[mem], rotations.theta[1, idx], ny))

    member_sets = [set(map(int, mem)) for mem in members]
    type_rng = substream(seed, 0x3)
    ii, jj, theta, labels = [], [], [], []
    for a in range(N):
        for b in range(a + 1, N):
            common = member_sets[a] & member_sets[b]
            if len(common) < min_overlap:
                continue
            common_idx = np.array(sorted(common), dtype=np.int64)
            pos_a = np.searchsorted(members[a], common_idx)
            pos_b = np.searchsorted(members[b], common_idx)
            u = type_rng.random()
            if u < p1:
                label = 1
                pa, pb = local_x[a][pos_a], local_x[b][pos_b]
            elif u < p1 + p2:
                label = 2
                pa, pb = local_y[a][pos_a], local_y[b][pos_b]
            else:
                label = 0
                pa, pb = local_x[a][pos_a], local_y[b][pos_b]
            ii.append(a)
            jj.append(b)
            theta.append(procrustes_rotation(pa, pb))
            labels.append(label)

    ps = PatchSet(
        n_points=n,
        centers=centers,
        members=tuple(np.asarray(m) for m in members),
        local_x=tuple(local_x),
        local_y=tuple(local_y),
        rotations=rotations,
    )
    g = MeasurementGraph(
        n=N,
        ii=np.array(ii, dtype=np.int64),
        jj=np.array(jj, dtype=np.int64),
        theta=np.array(theta, dtype=float),
        labels=np.array(labels, dtype=np.int64),
    )
    return ps, g


def _assemble(ps: PatchSet, patch_ids: np.ndarray, locals_: list, angles: np.ndarray) -> np.ndarray:
    """Solve node coordinates and patch translations by least squares.

    Each (patch, member) pair yields one equation per dimension:
    node = derotated_local + translation.  The first participating patch's
    translation is pinned to zero as the gauge.
    """
    node_ids = sorted({int(m) for pid in patch_ids for m in ps.members[pid]})
    node_index = {m: t for t, m in enumerate(node_ids)}
    n_nodes = len(node_ids)
    n_patch = patch_ids.size

    # connectivity of the patch-node membership bipartite graph
    size = n_nodes + n_patch
    edges_a, edges_b = [], []
    for t, pid in enumerate(patch_ids):
        for m in ps.members[pid]:
            edges_a.append(node_index[int(m)])
            edges_b.append(n_nodes + t)
    roots = connected_components(
        size, np.array(edges_a, dtype=np.int64), np.array(edges_b, dtype=np.int64)
    )
    if np.unique(roots).size > 1:
        comps = [np.nonzero(roots == r)[0].tolist() for r in np.unique(roots)]
        raise ValueError(f"translation system is disconnected: components {comps}")

    rows = sum(ps.members[pid].size for pid in patch_ids)
    cols = n_nodes + n_patch - 1
    A = np.zeros((rows, cols))
    rhs = np.zeros((rows, 2))
    row = 0
    for t, pid in enumerate(patch_ids):
        angle = angles[t]
        c, s = np.cos(angle), np.sin(angle)
        derot = locals_[t] @ np.array([[c, s], [-s, c]]).T  # rotation by -angle
        for pos, m in enumerate(ps.members[pid]):
            A[row, node_index[int(m)]] = 1.0
            if t > 0:
                A[row, n_nodes + t - 1] = -1.0
            rhs[row] = derot[pos]
            row += 1
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    out = np.full((ps.n_points, 2), np.nan)
    for m, t in node_index.items():
        out[m] = sol[t]
    return out


def _group_type(g: MeasurementGraph, mask: np.ndarray, default: int) -> int:
    """Majority ground-truth type (1 = X, 2 = Y) of a recovered edge set."""
    if g.labels is None:
        return default
    labs = g.labels[mask]
    votes = [(int(np.sum(labs == t)), t) for t in (1, 2)]
    best = max(votes)
    return best[1] if best[0] > 0 else default


def asap_recover(
    ps: PatchSet,
    g: MeasurementGraph,
    cfg: DisentangleConfig | None = None,
) -> tuple[np.ndarray, np.ndarray, DisentangleState | None]:
    """Recover both global embeddings from patch alignment measurements.

    Pipeline: bi-synchronize the patch graph, disentangle it into two good
    subgraphs, re-synchronize each good subgraph, then rotate each patch's
    type-matched local embedding by its estimated angle and solve the
    node/translation least-squares system per recovered group.
    """
    if ps.n_patches == 1 and g.m == 0:
        # single patch covering everything: its embeddings are the answer
        one = np.array([0], dtype=np.int64)
        X_hat = _assemble(ps, one, [ps.local_x[0]], np.zeros(1))
        Y_hat = _assemble(ps, one, [ps.local_y[0]], np.zeros(1))
        return X_hat, Y_hat, None
    cfg = cfg or DisentangleConfig(k=2)
    if cfg.k != 2:
        raise ValueError("two-configuration recovery needs k = 2")
    initial = (
        normalized_spectral_ksync(g, 2) if cfg.solver == EIG_R else spectral_ksync(g, 2)
    )
    states = iterate_disentangle(g, cfg, initial)
    final = states[-1]

    results: dict[int, np.ndarray] = {}
    types_taken: set[int] = set()
    for l in range(2):
        sub = good_subgraph(g, final, l)
        mask = (final.assignment == l) & final.good
        gtype = _group_type(g, mask, default=l + 1)
        if gtype in types_taken:
            gtype = 3 - gtype
        types_taken.add(gtype)
        if sub.m == 0:
            raise ValueError(f"group {l + 1}: recovered subgraph has no edges")
        angles, _ = _sync_subgraph(sub, np.ones(sub.m, dtype=bool), cfg.solver)
        # restrict assembly to the synchronized (largest) component
        patch_ids = np.unique(np.concatenate([sub.ii, sub.jj]))
        roots = connected_components(g.n, sub.ii, sub.jj)
        main = np.bincount(roots[patch_ids]).argmax()
        patch_ids = patch_ids[roots[patch_ids] == main]
        locals_ = [
            (ps.local_x if gtype == 1 else ps.local_y)[pid] for pid in patch_ids
        ]
        results[gtype] = _assemble(ps, patch_ids, locals_, angles[patch_ids])
    return results[1], results[2], final
