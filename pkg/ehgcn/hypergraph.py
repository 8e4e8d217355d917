# ehgcn/hypergraph.py

"""
Module: hypergraph.py

Motion-aware hypergraph of one sampled window.

Every retained event gets a motion feature from the displacement to its
nearest earlier neighbor. Pairs of nearby events are scored with the
transition kernel

    gamma(F_i, F_j) = exp(-|dir_j - dir_i|^2 / (2 sigma_v^2) - |s_j - s_i| / sigma_s)

and pairs scoring above the threshold are linked. Hyperedges are the connected
components of the linked pairs with at least two members.

Functions:
- motion_features(sampled) -> List[MotionFeature]
- transition_prob(f_i, f_j, cfg) -> float
- build_hyperedges(features, sampled, cfg) -> Hypergraph
- build_pairwise_graph(sampled, k) -> scipy CSR adjacency with self-loops
- init_features(sampled, adjacency) -> (node_features, edge_features)
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ehgcn.events import Event
from ehgcn.exceptions import EmptyWindowError, InvalidFeatureError
from ehgcn.neighbors import knn
from ehgcn.sampling import SampledStream
from ehgcn.schemas import HyperedgeRecord, HypergraphHeader, MvfConfig

logger = logging.getLogger(__name__)

# neighbors inspected before falling back to a scan of every earlier event
PREDECESSOR_CANDIDATES = 16


@dataclass(frozen=True)
class MotionFeature:
    """Displacement rate ``v``, its norm ``s`` and direction ``v / s``."""

    v: np.ndarray
    s: float
    direction: np.ndarray
    valid: bool = True

    @classmethod
    def from_displacement(cls, v: np.ndarray) -> "MotionFeature":
        v = np.asarray(v, dtype=np.float64)
        s = float(np.linalg.norm(v))
        if s == 0.0:
            return cls.invalid()
        return cls(v=v, s=s, direction=v / s)

    @classmethod
    def invalid(cls) -> "MotionFeature":
        return cls(v=np.zeros(3), s=0.0, direction=np.zeros(3), valid=False)

    def vector(self) -> np.ndarray:
        """F = [direction, s]."""
        return np.append(self.direction, self.s)


@dataclass(frozen=True)
class Hypergraph:
    vertices: Tuple[Event, ...]
    hyperedges: List[Tuple[int, ...]]
    links: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    link_scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    node_features: Optional[np.ndarray] = None
    edge_features: Optional[np.ndarray] = None

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_hyperedges(self) -> int:
        return len(self.hyperedges)

    def incidence(self) -> sp.csr_matrix:
        """Vertex x hyperedge 0/1 matrix."""
        rows = [v for edge in self.hyperedges for v in edge]
        cols = [j for j, edge in enumerate(self.hyperedges) for _ in edge]
        return sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)),
            shape=(self.num_vertices, self.num_hyperedges),
        )

    def with_features(self, node_features: np.ndarray, edge_features: np.ndarray) -> "Hypergraph":
        return Hypergraph(
            self.vertices, self.hyperedges, self.links, self.link_scores,
            node_features, edge_features,
        )


# ---------------------------------------------
# Motion features
# ---------------------------------------------

def _nearest(coords: np.ndarray, i: int, candidates: np.ndarray) -> int:
    d = np.linalg.norm(coords[candidates] - coords[i], axis=1)
    return int(candidates[np.argmin(d)])


def motion_features(sampled: SampledStream) -> List[MotionFeature]:
    """
    Motion feature of every retained event.

    The displacement runs from the nearest strictly earlier event to the event.
    The earliest events of a window have no predecessor and use their nearest
    strictly later event instead. Events whose only neighbors share their
    timestamp get an invalid feature.
    """
    m = len(sampled)
    if m < 2:
        return []
    coords = sampled.coordinates()
    ts = sampled.retained_array()[:, 2]
    _, ind = knn(coords, min(PREDECESSOR_CANDIDATES, m - 1))

    features = []
    for i in range(m):
        earlier_end = int(np.searchsorted(ts, ts[i], side="left"))
        later_start = int(np.searchsorted(ts, ts[i], side="right"))
        if earlier_end > 0:
            earlier = [j for j in ind[i] if ts[j] < ts[i]]
            j = int(earlier[0]) if earlier else _nearest(coords, i, np.arange(earlier_end))
            features.append(MotionFeature.from_displacement(coords[i] - coords[j]))
        elif later_start < m:
            j = _nearest(coords, i, np.arange(later_start, m))
            features.append(MotionFeature.from_displacement(coords[j] - coords[i]))
        else:
            features.append(MotionFeature.invalid())
    return features


def transition_scores(
    dir_a: np.ndarray, s_a: np.ndarray, dir_b: np.ndarray, s_b: np.ndarray, cfg: MvfConfig
) -> np.ndarray:
    """Row-wise kernel values for aligned arrays of directions and intensities."""
    direction_term = np.sum((dir_b - dir_a) ** 2, axis=-1) / (2.0 * cfg.sigma_v ** 2)
    intensity_term = np.abs(s_b - s_a) / cfg.sigma_s
    return np.exp(-direction_term - intensity_term)


def transition_prob(f_i: MotionFeature, f_j: MotionFeature, cfg: MvfConfig) -> float:
    if not (f_i.valid and f_j.valid):
        raise InvalidFeatureError("transition probability needs two valid motion features")
    score = transition_scores(
        f_i.direction[None, :], np.array([f_i.s]), f_j.direction[None, :], np.array([f_j.s]), cfg
    )
    return float(score[0])


# ---------------------------------------------
# Hyperedges
# ---------------------------------------------

def _candidate_pairs(coords: np.ndarray, k: int) -> np.ndarray:
    _, ind = knn(coords, k)
    if ind.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    rows = np.repeat(np.arange(len(coords)), ind.shape[1])
    cols = ind.ravel()
    pairs = np.stack([np.minimum(rows, cols), np.maximum(rows, cols)], axis=1)
    return np.unique(pairs, axis=0)


def build_hyperedges(
    features: Sequence[MotionFeature], sampled: SampledStream, cfg: MvfConfig
) -> Hypergraph:
    """
    Group motion-consistent events into hyperedges.

    Only each valid event's ``candidate_k`` nearest valid neighbors are scored.
    Vertex indices refer to positions in ``sampled.retained``; vertices are
    sorted inside each hyperedge and hyperedges by their smallest vertex.
    """
    vertices = sampled.retained
    valid = np.array([i for i, f in enumerate(features) if f.valid], dtype=np.int64)
    if len(valid) < 2:
        return Hypergraph(vertices, [])

    coords = sampled.coordinates()[valid]
    pairs = _candidate_pairs(coords, cfg.candidate_k)
    directions = np.stack([features[i].direction for i in valid])
    intensities = np.array([features[i].s for i in valid])
    a, b = pairs[:, 0], pairs[:, 1]
    scores = transition_scores(directions[a], intensities[a], directions[b], intensities[b], cfg)
    accepted = scores > cfg.gamma

    graph = sp.csr_matrix(
        (np.ones(int(accepted.sum())), (a[accepted], b[accepted])),
        shape=(len(valid), len(valid)),
    )
    _, component = connected_components(graph, directed=False)
    members: Dict[int, List[int]] = {}
    for local, label in enumerate(component):
        members.setdefault(int(label), []).append(int(valid[local]))
    hyperedges = sorted(tuple(sorted(group)) for group in members.values() if len(group) >= 2)

    logger.debug(
        f"{len(pairs)} candidate pairs, {int(accepted.sum())} linked, {len(hyperedges)} hyperedges"
    )
    return Hypergraph(
        vertices=vertices,
        hyperedges=hyperedges,
        links=valid[pairs[accepted]].reshape(-1, 2),
        link_scores=scores[accepted],
    )


# ---------------------------------------------
# Pairwise graph and features
# ---------------------------------------------

def build_pairwise_graph(sampled: SampledStream, k: int) -> sp.csr_matrix:
    """Symmetric k-NN adjacency over (x, y, scale*t) with unit self-loops."""
    m = len(sampled)
    if m == 0:
        raise EmptyWindowError("pairwise graph needs at least one event")
    _, ind = knn(sampled.coordinates(), k)
    rows = np.repeat(np.arange(m), ind.shape[1])
    adjacency = sp.csr_matrix((np.ones(rows.size), (rows, ind.ravel())), shape=(m, m))
    adjacency = adjacency.maximum(adjacency.T).tolil()
    adjacency.setdiag(1.0)
    return adjacency.tocsr()


def init_features(sampled: SampledStream, adjacency: sp.spmatrix) -> Tuple[np.ndarray, np.ndarray]:
    """
    Node features [p, rank(t)/M, x/width, y/height] and one edge feature
    (dx/width, dy/height, dt/duration) per stored entry of ``adjacency`` in
    CSR order. The earliest event has rank 1.
    """
    window = sampled.window
    events = sampled.retained_array().astype(np.float64)
    m = len(events)
    node = np.zeros((m, 4))
    if m:
        node[:, 0] = events[:, 3]
        node[:, 1] = np.arange(1, m + 1) / m
        node[:, 2] = events[:, 0] / window.width
        node[:, 3] = events[:, 1] / window.height

    adjacency = sp.csr_matrix(adjacency)
    rows = np.repeat(np.arange(adjacency.shape[0]), np.diff(adjacency.indptr))
    cols = adjacency.indices
    scale = np.array([window.width, window.height, window.duration], dtype=np.float64)
    edge = (events[cols, :3] - events[rows, :3]) / scale if m else np.zeros((0, 3))
    return node, edge


# ---------------------------------------------
# Statistics and serialization
# ---------------------------------------------

def size_histogram(hypergraph: Hypergraph) -> Dict[str, int]:
    counts = Counter(len(edge) for edge in hypergraph.hyperedges)
    return {str(size): counts[size] for size in sorted(counts)}


def hyperedge_purities(hypergraph: Hypergraph, labels: Sequence[int]) -> List[float]:
    """Fraction of each hyperedge's members that share its majority label."""
    purities = []
    for edge in hypergraph.hyperedges:
        counts = Counter(labels[v] for v in edge)
        purities.append(counts.most_common(1)[0][1] / len(edge))
    return purities


def mean_purity(hypergraph: Hypergraph, labels: Sequence[int]) -> Optional[float]:
    purities = hyperedge_purities(hypergraph, labels)
    return float(np.mean(purities)) if purities else None


def write_hypergraph(handle: TextIO, hypergraph: Hypergraph, cfg: MvfConfig, window: int = 0) -> None:
    """One header line, then one line per hyperedge."""
    header = HypergraphHeader(
        window=window,
        num_vertices=hypergraph.num_vertices,
        num_hyperedges=hypergraph.num_hyperedges,
        gamma=cfg.gamma,
        sigma_v=cfg.sigma_v,
        sigma_s=cfg.sigma_s,
    )
    handle.write(header.model_dump_json() + "\n")
    for edge in hypergraph.hyperedges:
        handle.write(HyperedgeRecord(window=window, vertices=list(edge)).model_dump_json() + "\n")
