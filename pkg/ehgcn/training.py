# ehgcn/training.py

"""
Module: training.py

Two-phase full-batch training, evaluation and model persistence.

Phase 1 updates the Euclidean layers and the classifier. Phase 2 also updates
the hyperbolic layers, and moves every curvature with
c <- max(c - lr * dL/dc, c_min). Each trace row holds the loss and accuracy
measured before that step's update.

Functions:
- train(graphs, cfg) -> TrainResult
- evaluate(model, graphs) -> EvalMetrics
- evaluate_windows(model, windows, labels, run_cfg, ...) -> EvalMetrics
- save_checkpoint(path, model) / load_checkpoint(path) -> EHGCN
- write_trace(path, trace)
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import torch

from ehgcn.events import EventWindow
from ehgcn.exceptions import DatasetError, DivergenceError
from ehgcn.network import EHGCN, curvature_step, loss
from ehgcn.pipeline import WindowGraph, collate, prepare_windows
from ehgcn.schemas import Checkpoint, EvalMetrics, NetworkConfig, RunConfig, TraceRow

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = "ehgcn-checkpoint/1"
PROTOCOLS = ("prefix", "random")


@dataclass
class TrainResult:
    model: EHGCN
    trace: List[TraceRow]


def _make_optimizer(cfg: NetworkConfig, params) -> torch.optim.Optimizer:
    if cfg.optimizer == "sgd":
        return torch.optim.SGD(params, lr=cfg.learning_rate)
    return torch.optim.Adam(params, lr=cfg.learning_rate)


def _accuracy(logits: torch.Tensor, labels: torch.Tensor) -> float:
    return float((logits.argmax(dim=-1) == labels).double().mean())


def check_label_range(labels: Sequence[int], num_classes: int) -> None:
    if any(label < 0 or label >= num_classes for label in labels):
        raise DatasetError(f"labels must lie in [0, {num_classes})")


def check_labels(labels: Sequence[int], num_classes: int) -> None:
    check_label_range(labels, num_classes)
    if len(set(labels)) < 2:
        raise DatasetError("training needs at least two classes")


def train(graphs: Sequence[WindowGraph], cfg: NetworkConfig) -> TrainResult:
    """
    Fit an EHGCN to labeled window graphs.

    Raises:
    - DatasetError: a graph has no label, a label is out of range or only one class is present.
    - DivergenceError: the loss became non-finite.
    """
    if any(g.label is None for g in graphs):
        raise DatasetError("every training window needs a label")
    check_labels([g.label for g in graphs], cfg.num_classes)

    batch = collate(graphs)
    model = EHGCN(cfg)
    trace: List[TraceRow] = []
    step = 0
    phases = (
        (1, cfg.phase1_steps, list(model.euclidean_parameters())),
        (2, cfg.phase2_steps, list(model.euclidean_parameters()) + list(model.hyperbolic_parameters())),
    )
    for phase, steps, params in phases:
        optimizer = _make_optimizer(cfg, params)
        update_curvature = phase == 2 and cfg.learn_curvature and model.is_dual
        for _ in range(steps):
            model.zero_grad()
            logits = model(batch)
            value = loss(logits, batch.labels)
            if not bool(torch.isfinite(value)):
                raise DivergenceError(f"loss became {float(value)} at step {step} (phase {phase})")
            trace.append(TraceRow(
                step=step,
                phase=phase,
                loss=float(value),
                accuracy=_accuracy(logits, batch.labels),
                curvatures=model.curvature_values(),
            ))
            value.backward()
            optimizer.step()
            if update_curvature:
                with torch.no_grad():
                    for c in model.curvatures:
                        grad = 0.0 if c.grad is None else float(c.grad)
                        c.fill_(curvature_step(float(c), grad, cfg.learning_rate, cfg.c_min))
            if step % cfg.log_every == 0:
                row = trace[-1]
                logger.info(f"step {step} phase {phase}: loss {row.loss:.4f} acc {row.accuracy:.3f}")
            step += 1
    return TrainResult(model, trace)


@torch.no_grad()
def predict(model: EHGCN, graphs: Sequence[WindowGraph]) -> List[int]:
    if not graphs:
        return []
    model.eval()
    return model(collate(graphs)).argmax(dim=-1).tolist()


def evaluate(model: EHGCN, graphs: Sequence[Optional[WindowGraph]]) -> EvalMetrics:
    """Accuracy over all windows; windows that sampled to nothing count as wrong."""
    present = [g for g in graphs if g is not None]
    predictions = predict(model, present)
    correct = sum(int(p == g.label) for p, g in zip(predictions, present))
    total = len(graphs)
    return EvalMetrics(
        split="test",
        num_windows=total,
        num_empty=total - len(present),
        accuracy=correct / total if total else 0.0,
    )


def limit_events(window: EventWindow, max_events: Optional[int], protocol: str, seed: int) -> EventWindow:
    if max_events is None:
        return window
    if protocol == "prefix":
        return window.truncate(max_events)
    if protocol == "random":
        return window.subsample(max_events, seed)
    raise DatasetError(f"unknown event-count protocol {protocol!r}")


def evaluate_windows(
    model: EHGCN,
    windows: Sequence[EventWindow],
    labels: Sequence[int],
    run_cfg: RunConfig,
    max_events: Optional[int] = None,
    protocol: str = "prefix",
    split: str = "test",
) -> EvalMetrics:
    check_label_range(labels, model.cfg.num_classes)
    limited = [limit_events(w, max_events, protocol, run_cfg.seed + i) for i, w in enumerate(windows)]
    metrics = evaluate(model, prepare_windows(limited, run_cfg, labels))
    return metrics.model_copy(update={"split": split, "max_events": max_events})


# ---------------------------------------------
# Persistence
# ---------------------------------------------

def save_checkpoint(path: Union[str, Path], model: EHGCN) -> None:
    state = model.state_dict()
    checkpoint = Checkpoint(
        version=CHECKPOINT_VERSION,
        config=model.cfg,
        state={name: tensor.reshape(-1).tolist() for name, tensor in state.items()},
        shapes={name: list(tensor.shape) for name, tensor in state.items()},
    )
    Path(path).write_text(checkpoint.model_dump_json(indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path: Union[str, Path]) -> EHGCN:
    checkpoint = Checkpoint.model_validate_json(Path(path).read_text(encoding="utf-8"))
    if checkpoint.version != CHECKPOINT_VERSION:
        raise DatasetError(f"unsupported checkpoint version {checkpoint.version!r}")
    model = EHGCN(checkpoint.config)
    state = {
        name: torch.tensor(values, dtype=torch.float64).reshape(checkpoint.shapes[name])
        for name, values in checkpoint.state.items()
    }
    model.load_state_dict(state)
    return model


def write_trace(path: Union[str, Path], trace: Sequence[TraceRow]) -> None:
    num_c = len(trace[0].curvatures) if trace else 0
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["step", "phase", "loss", "accuracy"] + [f"c{i}" for i in range(num_c)])
        for row in trace:
            writer.writerow([row.step, row.phase, repr(row.loss), repr(row.accuracy)] + [repr(c) for c in row.curvatures])
