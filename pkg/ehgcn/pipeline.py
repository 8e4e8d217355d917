# ehgcn/pipeline.py

"""
Per-window composition: sample -> pairwise graph -> motion hypergraph ->
normalized aggregation matrices, and collation of windows into one
block-diagonal batch.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import torch

from ehgcn.events import EventWindow
from ehgcn.exceptions import EmptyWindowError
from ehgcn.hypergraph import (
    Hypergraph,
    build_hyperedges,
    build_pairwise_graph,
    init_features,
    motion_features,
)
from ehgcn.network import (
    GraphBatch,
    aggregation_matrix,
    normalize_adjacency,
    normalize_hypergraph,
    to_torch_sparse,
)
from ehgcn.sampling import SampledStream, sample, window_seeds
from ehgcn.schemas import RunConfig, WindowStats

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Components:
    """Switches of the ablation grid; all on is the full model."""

    adaptive_sampling: bool = True
    motion_hypergraph: bool = True
    hyperbolic_embedding: bool = True

    def apply(self, cfg: RunConfig) -> RunConfig:
        sampling = cfg.sampling.model_copy(
            update={"mode": "adaptive" if self.adaptive_sampling else "uniform"}
        )
        network = cfg.network.model_copy(update={
            "aggregation_source": cfg.network.aggregation_source if self.motion_hypergraph else "pairwise",
            "geometry": "dual" if self.hyperbolic_embedding else "euclidean",
        })
        return cfg.model_copy(update={"sampling": sampling, "network": network})


@dataclass
class WindowGraph:
    sampled: SampledStream
    pairwise: sp.csr_matrix
    hypergraph: Hypergraph
    node_features: np.ndarray
    euclidean_adj: sp.csr_matrix
    hyperbolic_adj: sp.csr_matrix
    label: Optional[int] = None

    @property
    def num_nodes(self) -> int:
        return len(self.sampled)

    def neighbor_adj(self) -> sp.csr_matrix:
        adjacency = self.pairwise.tolil()
        adjacency.setdiag(0.0)
        adjacency = adjacency.tocsr()
        adjacency.eliminate_zeros()
        return adjacency

    def stats(self) -> WindowStats:
        return WindowStats(
            num_nodes=self.num_nodes,
            pairwise_nnz=int(self.euclidean_adj.nnz),
            hypergraph_nnz=int(normalize_hypergraph(self.hypergraph.incidence()).nnz),
            num_hyperedges=self.hypergraph.num_hyperedges,
        )


def prepare_window(window: EventWindow, cfg: RunConfig, label: Optional[int] = None) -> WindowGraph:
    """
    Run the structural pipeline on one window with ``cfg.sampling.seed``.

    Raises:
    - EmptyWindowError: sampling retained no event.
    """
    sampled = sample(window, cfg.sampling)
    if not len(sampled):
        raise EmptyWindowError(f"window [{window.t_start}, {window.t_end}) retained no events")
    pairwise = build_pairwise_graph(sampled, cfg.graph_k)
    hypergraph = build_hyperedges(motion_features(sampled), sampled, cfg.mvf)
    node, edge = init_features(sampled, pairwise)
    hypergraph = hypergraph.with_features(node, edge)
    return WindowGraph(
        sampled=sampled,
        pairwise=pairwise,
        hypergraph=hypergraph,
        node_features=node,
        euclidean_adj=normalize_adjacency(pairwise),
        hyperbolic_adj=aggregation_matrix(pairwise, hypergraph, cfg.network.aggregation_source),
        label=label,
    )


def prepare_windows(
    windows: Sequence[EventWindow], cfg: RunConfig, labels: Optional[Sequence[int]] = None
) -> List[Optional[WindowGraph]]:
    """One graph per window, ``None`` where sampling kept nothing."""
    seeds = window_seeds(cfg.sampling.seed, len(windows))
    graphs: List[Optional[WindowGraph]] = []
    for i, (window, seed) in enumerate(zip(windows, seeds)):
        window_cfg = cfg.model_copy(update={"sampling": cfg.sampling.model_copy(update={"seed": seed})})
        label = labels[i] if labels is not None else None
        try:
            graphs.append(prepare_window(window, window_cfg, label))
        except EmptyWindowError as e:
            logger.debug(str(e))
            graphs.append(None)
    return graphs


def collate(graphs: Sequence[WindowGraph]) -> GraphBatch:
    """Stack windows into one block-diagonal graph; windows stay independent."""
    if not graphs:
        raise EmptyWindowError("no events to classify")
    x = torch.as_tensor(np.vstack([g.node_features for g in graphs]), dtype=torch.float64)
    batch = torch.as_tensor(
        np.concatenate([np.full(g.num_nodes, i) for i, g in enumerate(graphs)]), dtype=torch.long
    )
    labels = None
    if all(g.label is not None for g in graphs):
        labels = torch.as_tensor([g.label for g in graphs], dtype=torch.long)
    return GraphBatch(
        x=x,
        euclidean_adj=to_torch_sparse(sp.block_diag([g.euclidean_adj for g in graphs], format="csr")),
        hyperbolic_adj=to_torch_sparse(sp.block_diag([g.hyperbolic_adj for g in graphs], format="csr")),
        neighbor_adj=to_torch_sparse(sp.block_diag([g.neighbor_adj() for g in graphs], format="csr")),
        batch=batch,
        num_graphs=len(graphs),
        labels=labels,
    )
