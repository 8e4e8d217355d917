# ehgcn/flops.py

"""
Analytic FLOP count of one forward pass over one window.

Convention:
- linear map or Moebius matrix-vector product: 2 * d_in * d_out per node
- sparse aggregation: 2 * nnz(A) * d
- exp/log map, Moebius addition or activation: 6 * d per node
- hyperbolic activation (log, phi, exp) and Moebius fusion: three maps
- pooling: d per node, plus a conformal weight (one map) per node and two maps
  per window for the gyromidpoint on the ball
- classifier: 2 * d * num_classes per window

With ``aggregation_source="both"`` the hyperbolic aggregation is charged
pairwise_nnz + hypergraph_nnz.
"""

from collections import OrderedDict
from typing import List

from ehgcn.schemas import FlopEntry, FlopReport, NetworkConfig, WindowStats

MAP_COST = 6


def _hyperbolic_nnz(cfg: NetworkConfig, stats: WindowStats) -> int:
    if cfg.aggregation_source == "pairwise":
        return stats.pairwise_nnz
    if cfg.aggregation_source == "hypergraph":
        return stats.hypergraph_nnz
    return stats.pairwise_nnz + stats.hypergraph_nnz


def parameter_count(cfg: NetworkConfig) -> int:
    dims = [cfg.input_dim] + list(cfg.euclidean_widths) + list(cfg.hyperbolic_widths)
    weights = sum(d_in * d_out + d_out for d_in, d_out in zip(dims[:-1], dims[1:]))
    curvatures = len(cfg.hyperbolic_widths) + 1 if cfg.geometry == "dual" else 0
    return weights + curvatures + dims[-1] * cfg.num_classes + cfg.num_classes


def estimate_flops(cfg: NetworkConfig, stats: WindowStats) -> FlopReport:
    n = stats.num_nodes
    entries: List[FlopEntry] = []

    def add(layer: str, op: str, flops: int) -> None:
        entries.append(FlopEntry(layer=layer, op=op, flops=int(flops)))

    if n > 0:
        dims = [cfg.input_dim] + list(cfg.euclidean_widths)
        for l, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            name = f"euclidean.{l}"
            add(name, "linear", 2 * d_in * d_out * n)
            add(name, "aggregate", 2 * stats.pairwise_nnz * d_out)
            add(name, "activation", MAP_COST * d_out * n)

        dual = cfg.geometry == "dual"
        second_nnz = _hyperbolic_nnz(cfg, stats)
        if dual:
            add("embedding", "exp_map", MAP_COST * dims[-1] * n)
        dims = [dims[-1]] + list(cfg.hyperbolic_widths)
        for l, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            name = f"hyperbolic.{l}"
            if not dual:
                add(name, "linear", 2 * d_in * d_out * n)
                add(name, "aggregate", 2 * second_nnz * d_out)
                add(name, "activation", MAP_COST * d_out * n)
                continue
            add(name, "matvec", 2 * d_in * d_out * n)
            add(name, "bias_add", MAP_COST * d_out * n)
            add(name, "log_map", MAP_COST * d_out * n)
            add(name, "aggregate", 2 * second_nnz * d_out)
            add(name, "exp_map", MAP_COST * d_out * n)
            add(name, "activation", 3 * MAP_COST * d_out * n)
            if cfg.fusion:
                # neighbor matrix is the pairwise graph without its n self-loops
                add(name, "fusion", 3 * MAP_COST * d_out * n + 2 * max(stats.pairwise_nnz - n, 0) * d_out)

        d = dims[-1]
        if dual:
            add("readout", "midpoint", MAP_COST * d * n)
        add("readout", "pool", d * n)
        if dual:
            # one scalar multiplication and one log map per window
            add("readout", "log_map", 2 * MAP_COST * d)
        add("readout", "classifier", 2 * d * cfg.num_classes)

    per_layer: "OrderedDict[str, int]" = OrderedDict()
    for entry in entries:
        per_layer[entry.layer] = per_layer.get(entry.layer, 0) + entry.flops
    total = sum(entry.flops for entry in entries)
    return FlopReport(
        total=total,
        per_event=total / n if n else 0.0,
        parameters=parameter_count(cfg),
        per_layer=dict(per_layer),
        entries=entries,
    )
