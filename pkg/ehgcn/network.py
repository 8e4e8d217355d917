# ehgcn/network.py

"""
Module: network.py

Dual-space graph convolutional network.

A stack of Euclidean GCN layers extracts local features, the result is mapped
onto the Poincare ball and refined by hyperbolic GCN layers, each of which

1. transforms points with a Moebius matrix-vector product and a bias,
2. aggregates neighbors in the tangent space at the origin,
3. applies the activation in the tangent space and re-enters the ball at the
   next layer's curvature.

Curvatures are per-layer parameters: layer l maps from curvature c[l] to
c[l + 1]. Window logits come from the gyromidpoint of the last layer's points,
read in the tangent space at the origin, and a linear classifier.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional, Union

import numpy as np
import scipy.sparse as sp
import torch
import torch.nn as nn
import torch.nn.functional as F

from ehgcn.exceptions import DatasetError, DivergenceError, EmptyWindowError, ParameterError
from ehgcn.hypergraph import Hypergraph
from ehgcn.poincare import (
    CurvatureLike,
    exp_map_origin,
    gyro_midpoint,
    log_map_origin,
    mobius_add,
    mobius_matvec,
)
from ehgcn.schemas import NetworkConfig

logger = logging.getLogger(__name__)

ACTIVATIONS: Dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "relu": torch.relu,
    "identity": lambda x: x,
    "tanh": torch.tanh,
}

FD_STEP = 1e-5


# ---------------------------------------------
# Aggregation matrices
# ---------------------------------------------

def normalize_adjacency(adjacency: sp.spmatrix) -> sp.csr_matrix:
    """D^-1/2 (Adj + I) D^-1/2; existing self-loops are replaced by unit ones."""
    n = adjacency.shape[0]
    if n == 0:
        raise EmptyWindowError("cannot normalize an empty vertex set")
    a = sp.lil_matrix(adjacency, dtype=np.float64)
    a.setdiag(0.0)
    a = a.tocsr() + sp.identity(n, format="csr")
    d_inv_sqrt = sp.diags(1.0 / np.sqrt(np.asarray(a.sum(axis=1)).ravel()))
    return (d_inv_sqrt @ a @ d_inv_sqrt).tocsr()


def normalize_hypergraph(incidence: sp.spmatrix) -> sp.csr_matrix:
    """
    Dv^-1/2 H De^-1 H^T Dv^-1/2 with unit hyperedge weights.

    Vertices outside every hyperedge keep a unit self-loop.
    """
    n = incidence.shape[0]
    if n == 0:
        raise EmptyWindowError("cannot normalize an empty vertex set")
    h = sp.csr_matrix(incidence, dtype=np.float64)
    dv = np.asarray(h.sum(axis=1)).ravel()
    de = np.asarray(h.sum(axis=0)).ravel()
    dv_inv_sqrt = np.divide(1.0, np.sqrt(dv), out=np.zeros(n), where=dv > 0)
    de_inv = np.divide(1.0, de, out=np.zeros(len(de)), where=de > 0)
    a = sp.diags(dv_inv_sqrt) @ h @ sp.diags(de_inv) @ h.T @ sp.diags(dv_inv_sqrt)
    return (a + sp.diags((dv == 0).astype(np.float64))).tocsr()


def aggregation_matrix(pairwise: sp.spmatrix, hypergraph: Hypergraph, source: str) -> sp.csr_matrix:
    if source == "pairwise":
        return normalize_adjacency(pairwise)
    if source == "hypergraph":
        return normalize_hypergraph(hypergraph.incidence())
    if source == "both":
        return (0.5 * (normalize_adjacency(pairwise) + normalize_hypergraph(hypergraph.incidence()))).tocsr()
    raise ParameterError(f"unknown aggregation source {source!r}")


def to_torch_sparse(matrix: sp.spmatrix) -> torch.Tensor:
    coo = sp.coo_matrix(matrix)
    indices = torch.as_tensor(np.vstack([coo.row, coo.col]), dtype=torch.long)
    values = torch.as_tensor(coo.data, dtype=torch.float64)
    return torch.sparse_coo_tensor(indices, values, coo.shape).coalesce()


def _aggregate(a: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    if a.shape[-1] != x.shape[0]:
        raise ParameterError(f"aggregation matrix of width {a.shape[-1]} applied to {x.shape[0]} nodes")
    return torch.sparse.mm(a, x) if a.is_sparse else a @ x


# ---------------------------------------------
# Layer operations
# ---------------------------------------------

@dataclass
class LayerParams:
    weight: torch.Tensor
    bias: torch.Tensor
    c_in: CurvatureLike
    c_out: CurvatureLike
    activation: str = "relu"


def euclidean_gcn_layer(
    x: torch.Tensor, a: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor, activation: str = "relu"
) -> torch.Tensor:
    if weight.shape[-1] != x.shape[-1]:
        raise ParameterError(f"weight expects width {weight.shape[-1]}, features have {x.shape[-1]}")
    return ACTIVATIONS[activation](_aggregate(a, x @ weight.T) + bias)


def to_hyperbolic(x: torch.Tensor, c: CurvatureLike) -> torch.Tensor:
    return exp_map_origin(x, c)


def hyperbolic_transform(h: torch.Tensor, params: LayerParams) -> torch.Tensor:
    """(W (x) h) (+) exp_o(b) on the input ball."""
    moved = mobius_matvec(params.weight, h, params.c_in)
    return mobius_add(moved, exp_map_origin(params.bias, params.c_in), params.c_in)


def hyperbolic_aggregate(h: torch.Tensor, a: torch.Tensor, c: CurvatureLike) -> torch.Tensor:
    return exp_map_origin(_aggregate(a, log_map_origin(h, c)), c)


def hyperbolic_activation(h: torch.Tensor, params: LayerParams) -> torch.Tensor:
    tangent = ACTIVATIONS[params.activation](log_map_origin(h, params.c_in))
    return exp_map_origin(tangent, params.c_out)


def hyperbolic_gcn_layer(h: torch.Tensor, a: torch.Tensor, params: LayerParams) -> torch.Tensor:
    h = hyperbolic_transform(h, params)
    h = hyperbolic_aggregate(h, a, params.c_in)
    return hyperbolic_activation(h, params)


def mobius_fusion(h_i: torch.Tensor, neighbors: torch.Tensor, c: CurvatureLike) -> torch.Tensor:
    """h_i (+) exp_o(sum of the neighbors' tangent vectors)."""
    if neighbors.shape[0] == 0:
        return h_i
    summed = log_map_origin(neighbors, c).sum(dim=0)
    return mobius_add(h_i, exp_map_origin(summed, c), c)


def fuse_neighbors(h: torch.Tensor, neighbor_adj: torch.Tensor, c: CurvatureLike) -> torch.Tensor:
    """mobius_fusion for every node at once; ``neighbor_adj`` is 0/1 without self-loops."""
    return mobius_add(h, exp_map_origin(_aggregate(neighbor_adj, log_map_origin(h, c)), c), c)


def readout_classify(
    h: torch.Tensor,
    batch: torch.Tensor,
    num_graphs: int,
    classifier: nn.Linear,
    c: Optional[CurvatureLike] = None,
) -> torch.Tensor:
    """
    Pool every window's nodes, then apply the classifier.

    Ball points are pooled to their gyromidpoint on the c-ball and moved to
    the tangent space at the origin, so the result depends on c. ``c=None``
    means the nodes are already Euclidean and are mean-pooled.
    """
    if h.shape[0] == 0:
        raise EmptyWindowError("no events to classify")
    counts = torch.bincount(batch, minlength=num_graphs)
    if bool((counts == 0).any()):
        raise EmptyWindowError("no events to classify")
    if c is not None:
        return classifier(log_map_origin(gyro_midpoint(h, batch, num_graphs, c), c))
    pooled = torch.zeros(num_graphs, h.shape[-1], dtype=h.dtype).index_add(0, batch, h)
    return classifier(pooled / counts.unsqueeze(-1).to(h.dtype))


def loss(logits: torch.Tensor, labels: Union[int, torch.Tensor]) -> torch.Tensor:
    """Mean softmax cross-entropy."""
    if logits.dim() == 1:
        logits = logits.unsqueeze(0)
    labels = torch.as_tensor(labels, dtype=torch.long).reshape(-1)
    if bool((labels >= logits.shape[-1]).any()) or bool((labels < 0).any()):
        raise DatasetError(f"label outside [0, {logits.shape[-1]})")
    return F.cross_entropy(logits, labels)


# ---------------------------------------------
# Model
# ---------------------------------------------

@dataclass
class GraphBatch:
    """Windows collated into one block-diagonal graph."""

    x: torch.Tensor
    euclidean_adj: torch.Tensor
    hyperbolic_adj: torch.Tensor
    neighbor_adj: torch.Tensor
    batch: torch.Tensor
    num_graphs: int
    labels: Optional[torch.Tensor] = None


def _uniform(shape, fan_in: int, generator: torch.Generator) -> torch.Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return (torch.rand(shape, generator=generator, dtype=torch.float64) * 2 - 1) * bound


class EuclideanGCNLayer(nn.Module):
    def __init__(self, d_in: int, d_out: int, activation: str, generator: torch.Generator):
        super().__init__()
        self.activation = activation
        self.weight = nn.Parameter(_uniform((d_out, d_in), d_in, generator))
        self.bias = nn.Parameter(torch.zeros(d_out, dtype=torch.float64))

    def forward(self, x: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
        return euclidean_gcn_layer(x, a, self.weight, self.bias, self.activation)


class HyperbolicGCNLayer(nn.Module):
    def __init__(self, d_in: int, d_out: int, activation: str, generator: torch.Generator):
        super().__init__()
        self.activation = activation
        self.weight = nn.Parameter(_uniform((d_out, d_in), d_in, generator))
        self.bias = nn.Parameter(torch.zeros(d_out, dtype=torch.float64))

    def forward(self, h: torch.Tensor, a: torch.Tensor, c_in: torch.Tensor, c_out: torch.Tensor) -> torch.Tensor:
        return hyperbolic_gcn_layer(h, a, LayerParams(self.weight, self.bias, c_in, c_out, self.activation))


def _check_finite(t: torch.Tensor, where: str) -> None:
    if not bool(torch.isfinite(t).all()):
        raise DivergenceError(f"non-finite values in {where}")


class EHGCN(nn.Module):
    """
    Euclidean GCN stage followed by the hyperbolic stage and a classifier.

    With ``geometry="euclidean"`` the second stage is built from Euclidean
    layers of the same widths and no curvature is learned.
    """

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        generator = torch.Generator().manual_seed(cfg.seed)

        dims = [cfg.input_dim] + list(cfg.euclidean_widths)
        self.euclidean = nn.ModuleList(
            EuclideanGCNLayer(d_in, d_out, cfg.activation, generator)
            for d_in, d_out in zip(dims[:-1], dims[1:])
        )
        dims = [dims[-1]] + list(cfg.hyperbolic_widths)
        layer_cls = HyperbolicGCNLayer if self.is_dual else EuclideanGCNLayer
        self.hyperbolic = nn.ModuleList(
            layer_cls(d_in, d_out, cfg.activation, generator)
            for d_in, d_out in zip(dims[:-1], dims[1:])
        )
        self.curvatures = nn.ParameterList(
            nn.Parameter(torch.tensor(cfg.initial_c, dtype=torch.float64))
            for _ in range(len(self.hyperbolic) + 1 if self.is_dual else 0)
        )
        self.classifier = nn.Linear(dims[-1], cfg.num_classes, dtype=torch.float64)
        with torch.no_grad():
            self.classifier.weight.copy_(_uniform(self.classifier.weight.shape, dims[-1], generator))
            self.classifier.bias.zero_()

    @property
    def is_dual(self) -> bool:
        return self.cfg.geometry == "dual"

    def euclidean_parameters(self) -> Iterable[nn.Parameter]:
        yield from self.euclidean.parameters()
        yield from self.classifier.parameters()

    def hyperbolic_parameters(self) -> Iterable[nn.Parameter]:
        yield from self.hyperbolic.parameters()

    def curvature_values(self):
        return [float(c) for c in self.curvatures]

    def embed(self, batch: GraphBatch) -> torch.Tensor:
        """Node outputs of the last layer (ball points in the dual geometry)."""
        x = batch.x
        for l, layer in enumerate(self.euclidean):
            x = layer(x, batch.euclidean_adj)
            _check_finite(x, f"euclidean layer {l}")
        if not self.is_dual:
            for l, layer in enumerate(self.hyperbolic):
                x = layer(x, batch.hyperbolic_adj)
                _check_finite(x, f"second-stage layer {l}")
            return x

        h = to_hyperbolic(x, self.curvatures[0])
        for l, layer in enumerate(self.hyperbolic):
            h = layer(h, batch.hyperbolic_adj, self.curvatures[l], self.curvatures[l + 1])
            if self.cfg.fusion:
                h = fuse_neighbors(h, batch.neighbor_adj, self.curvatures[l + 1])
            _check_finite(h, f"hyperbolic layer {l}")
        return h

    def forward(self, batch: GraphBatch) -> torch.Tensor:
        h = self.embed(batch)
        c = self.curvatures[-1] if self.is_dual else None
        return readout_classify(h, batch.batch, batch.num_graphs, self.classifier, c)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


# ---------------------------------------------
# Gradients and curvature updates
# ---------------------------------------------

def batch_loss(model: EHGCN, batch: GraphBatch) -> torch.Tensor:
    if batch.labels is None:
        raise DatasetError("batch carries no labels")
    value = loss(model(batch), batch.labels)
    _check_finite(value, "loss")
    return value


def gradients(model: EHGCN, batch: GraphBatch) -> Dict[str, torch.Tensor]:
    """d loss / d parameter for every named parameter, curvatures included."""
    named = list(model.named_parameters())
    value = batch_loss(model, batch)
    grads = torch.autograd.grad(value, [p for _, p in named], allow_unused=True)
    result = {}
    for (name, param), grad in zip(named, grads):
        grad = torch.zeros_like(param) if grad is None else grad
        if not bool(torch.isfinite(grad).all()):
            raise DivergenceError(f"non-finite gradient for {name}")
        result[name] = grad
    return result


def finite_difference_gradients(
    model: EHGCN, batch: GraphBatch, h: float = FD_STEP, names: Optional[Iterable[str]] = None
) -> Dict[str, torch.Tensor]:
    """Central differences (L(p + h) - L(p - h)) / 2h, one entry at a time."""
    wanted = set(names) if names is not None else None
    result = {}
    with torch.no_grad():
        for name, param in model.named_parameters():
            if wanted is not None and name not in wanted:
                continue
            grad = torch.zeros_like(param)
            flat, flat_grad = param.view(-1), grad.view(-1)
            for i in range(flat.numel()):
                original = flat[i].item()
                flat[i] = original + h
                upper = batch_loss(model, batch).item()
                flat[i] = original - h
                lower = batch_loss(model, batch).item()
                flat[i] = original
                flat_grad[i] = (upper - lower) / (2 * h)
            result[name] = grad
    return result


def gradient_check(model: EHGCN, batch: GraphBatch, h: float = FD_STEP, floor: float = 1e-3) -> Dict[str, float]:
    """Max relative error |a - n| / max(|a|, |n|, floor) per parameter."""
    analytic = gradients(model, batch)
    numeric = finite_difference_gradients(model, batch, h)
    errors = {}
    for name, a in analytic.items():
        n = numeric[name]
        scale = torch.maximum(torch.maximum(a.abs(), n.abs()), torch.full_like(a, floor))
        errors[name] = float(((a - n).abs() / scale).max()) if a.numel() else 0.0
    return errors


def curvature_step(c: float, grad: float, lr: float, c_min: float) -> float:
    """c - lr * grad, floored at c_min."""
    if c <= 0:
        raise ParameterError(f"curvature must be positive, got {c}")
    return max(c - lr * grad, c_min)
