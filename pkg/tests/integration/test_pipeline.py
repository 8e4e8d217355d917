# tests/integration/test_pipeline.py

import csv

import numpy as np
import pytest
import torch
from scipy.stats import spearmanr

from ehgcn.config import load_run_config
from ehgcn.datasets import load_dataset, make_motion_dataset, motion_scene, split, write_dataset
from ehgcn.events import EventWindow, synthesize_scene
from ehgcn.exceptions import DatasetError, EmptyWindowError
from ehgcn.pipeline import Components, collate, prepare_window, prepare_windows
from ehgcn.schemas import NetworkConfig, RunConfig, SceneObject, SceneSpec
from ehgcn.training import (
    evaluate,
    evaluate_windows,
    load_checkpoint,
    save_checkpoint,
    train,
    write_trace,
)


def _quadrant_window(label: int, seed: int) -> EventWindow:
    """Static blob in the top-left (label 0) or bottom-right (label 1) quadrant."""
    center = (12.0, 12.0) if label == 0 else (52.0, 52.0)
    spec = SceneSpec(
        objects=[SceneObject(start=center, velocity=(0.0, 0.0), radius=4.0, rate=3000.0)],
        noise_rate=0.0,
        duration=0.05,
        seed=seed,
        width=64,
        height=64,
    )
    return EventWindow(tuple(synthesize_scene(spec)), 0, 50_000, (64, 64))


@pytest.fixture(scope="module")
def separable_graphs():
    windows = [_quadrant_window(label, seed) for seed in range(4) for label in (0, 1)]
    labels = [label for _ in range(4) for label in (0, 1)]
    cfg = RunConfig(network=NetworkConfig(num_classes=2))
    return prepare_windows(windows, cfg, labels)


@pytest.fixture(scope="module")
def dataset_graphs(small_dataset_dir):
    cfg = RunConfig(network=NetworkConfig(phase1_steps=100, phase2_steps=100, learning_rate=0.05))
    items = load_dataset(small_dataset_dir)
    train_items = split(items, "train")
    graphs = prepare_windows([i.window for i in train_items], cfg, [i.label for i in train_items])
    return cfg, [g for g in graphs if g is not None]


# ---------------------------------------------
# Window preparation
# ---------------------------------------------

def test_prepare_window_builds_every_structure() -> None:
    graph = prepare_window(_quadrant_window(0, 1), RunConfig(), label=0)
    n = graph.num_nodes
    assert n > 0
    assert graph.node_features.shape == (n, 4)
    assert graph.pairwise.shape == graph.euclidean_adj.shape == graph.hyperbolic_adj.shape == (n, n)
    assert graph.hypergraph.edge_features.shape == (graph.pairwise.nnz, 3)
    stats = graph.stats()
    assert stats.num_nodes == n
    assert stats.pairwise_nnz == graph.euclidean_adj.nnz
    assert graph.neighbor_adj().diagonal().sum() == 0


def test_empty_window_is_reported() -> None:
    with pytest.raises(EmptyWindowError):
        prepare_window(EventWindow((), 0, 10, (8, 8)), RunConfig())
    assert prepare_windows([EventWindow((), 0, 10, (8, 8))], RunConfig()) == [None]


def test_collate_keeps_windows_apart(separable_graphs) -> None:
    batch = collate(separable_graphs[:3])
    sizes = [g.num_nodes for g in separable_graphs[:3]]
    assert batch.x.shape == (sum(sizes), 4)
    assert batch.num_graphs == 3
    assert torch.bincount(batch.batch).tolist() == sizes
    dense = batch.euclidean_adj.to_dense()
    first = sizes[0]
    assert float(dense[:first, first:].abs().sum()) == 0.0
    assert batch.labels.tolist() == [0, 1, 0]


def test_components_switch_the_configuration() -> None:
    cfg = Components(adaptive_sampling=False, motion_hypergraph=False, hyperbolic_embedding=False).apply(RunConfig())
    assert cfg.sampling.mode == "uniform"
    assert cfg.network.aggregation_source == "pairwise"
    assert cfg.network.geometry == "euclidean"
    assert Components().apply(RunConfig()).model_dump() == RunConfig().model_dump()


# ---------------------------------------------
# Training
# ---------------------------------------------

@pytest.mark.slow
def test_separable_windows_are_learned(separable_graphs) -> None:
    result = train(separable_graphs, NetworkConfig(num_classes=2))
    assert result.trace[-1].accuracy == 1.0
    assert result.trace[-1].loss < result.trace[0].loss
    assert evaluate(result.model, separable_graphs).accuracy == 1.0


def test_two_phase_schedule(separable_graphs) -> None:
    cfg = NetworkConfig(num_classes=2, phase1_steps=5, phase2_steps=5, learning_rate=0.05)
    result = train(separable_graphs, cfg)
    assert [row.phase for row in result.trace] == [1] * 5 + [2] * 5
    assert [row.step for row in result.trace] == list(range(10))
    phase1 = [row.curvatures for row in result.trace if row.phase == 1]
    assert all(c == [1.0, 1.0, 1.0] for c in phase1)
    assert result.model.curvature_values() != [1.0, 1.0, 1.0]
    assert all(c >= cfg.c_min for row in result.trace for c in row.curvatures)


def test_every_curvature_moves_in_phase_two(separable_graphs) -> None:
    cfg = NetworkConfig(num_classes=2, phase1_steps=2, phase2_steps=6, learning_rate=0.05)
    curvatures = train(separable_graphs, cfg).model.curvature_values()
    assert all(c != 1.0 for c in curvatures), curvatures


def test_zero_learning_rate_gives_a_constant_trace(separable_graphs) -> None:
    result = train(separable_graphs, NetworkConfig(num_classes=2, phase1_steps=4, phase2_steps=4, learning_rate=0.0))
    losses = {row.loss for row in result.trace}
    assert len(losses) == 1


def test_training_is_deterministic(separable_graphs) -> None:
    cfg = NetworkConfig(num_classes=2, phase1_steps=6, phase2_steps=6)
    first, second = train(separable_graphs, cfg), train(separable_graphs, cfg)
    assert [r.loss for r in first.trace] == [r.loss for r in second.trace]
    assert first.model.curvature_values() == second.model.curvature_values()


def test_structure_is_deterministic() -> None:
    windows = [_quadrant_window(0, 5), _quadrant_window(1, 6)]
    a, b = prepare_windows(windows, RunConfig()), prepare_windows(windows, RunConfig())
    for x, y in zip(a, b):
        assert x.sampled.retained == y.sampled.retained
        assert x.hypergraph.hyperedges == y.hypergraph.hyperedges
        assert (x.hyperbolic_adj != y.hyperbolic_adj).nnz == 0


def test_single_class_is_rejected(separable_graphs) -> None:
    with pytest.raises(DatasetError):
        train([g for g in separable_graphs if g.label == 0], NetworkConfig(num_classes=2))


def test_out_of_range_label_is_rejected(separable_graphs) -> None:
    with pytest.raises(DatasetError):
        train(separable_graphs, NetworkConfig(num_classes=2).model_copy(update={"num_classes": 1}))


@pytest.mark.slow
def test_motion_dataset_beats_chance(small_dataset_dir, dataset_graphs) -> None:
    cfg, graphs = dataset_graphs
    result = train(graphs, cfg.network)
    assert result.trace[-1].loss < result.trace[0].loss
    test_items = split(load_dataset(small_dataset_dir), "test")
    metrics = evaluate_windows(result.model, [i.window for i in test_items], [i.label for i in test_items], cfg)
    assert metrics.num_windows == len(test_items)
    assert metrics.accuracy >= 0.5


# ---------------------------------------------
# Evaluation and persistence
# ---------------------------------------------

def test_zero_event_budget_counts_every_window_as_wrong(separable_graphs) -> None:
    model = train(separable_graphs, NetworkConfig(num_classes=2, phase1_steps=1, phase2_steps=0)).model
    windows = [_quadrant_window(0, 9), _quadrant_window(1, 9)]
    metrics = evaluate_windows(model, windows, [0, 1], RunConfig(network=model.cfg), max_events=0)
    assert metrics.num_empty == 2
    assert metrics.accuracy == 0.0
    assert metrics.max_events == 0


@pytest.mark.parametrize("protocol", ["prefix", "random"])
def test_event_budget_protocols(separable_graphs, protocol: str) -> None:
    model = train(separable_graphs, NetworkConfig(num_classes=2, phase1_steps=1, phase2_steps=0)).model
    windows = [_quadrant_window(0, 11)]
    metrics = evaluate_windows(model, windows, [0], RunConfig(network=model.cfg), 20, protocol)
    assert metrics.num_windows == 1
    assert metrics.max_events == 20


def test_unknown_protocol(separable_graphs) -> None:
    model = train(separable_graphs, NetworkConfig(num_classes=2, phase1_steps=1, phase2_steps=0)).model
    with pytest.raises(DatasetError):
        evaluate_windows(model, [_quadrant_window(0, 1)], [0], RunConfig(network=model.cfg), 5, "middle")


def test_checkpoint_round_trip(tmp_path, separable_graphs) -> None:
    cfg = NetworkConfig(num_classes=2, phase1_steps=3, phase2_steps=3, fusion=True)
    model = train(separable_graphs, cfg).model
    path = tmp_path / "model.json"
    save_checkpoint(path, model)
    restored = load_checkpoint(path)
    assert restored.cfg.model_dump() == model.cfg.model_dump()
    batch = collate(separable_graphs)
    with torch.no_grad():
        assert torch.equal(restored(batch), model(batch))


def test_checkpoint_version_is_checked(tmp_path, separable_graphs) -> None:
    model = train(separable_graphs, NetworkConfig(num_classes=2, phase1_steps=1, phase2_steps=0)).model
    path = tmp_path / "model.json"
    save_checkpoint(path, model)
    path.write_text(path.read_text().replace("ehgcn-checkpoint/1", "ehgcn-checkpoint/0"))
    with pytest.raises(DatasetError):
        load_checkpoint(path)


def test_trace_csv(tmp_path, separable_graphs) -> None:
    result = train(separable_graphs, NetworkConfig(num_classes=2, phase1_steps=2, phase2_steps=2))
    path = tmp_path / "trace.csv"
    write_trace(path, result.trace)
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["step", "phase", "loss", "accuracy", "c0", "c1", "c2"]
    assert len(rows) == 5
    assert float(rows[1][2]) == result.trace[0].loss


# ---------------------------------------------
# Dataset files
# ---------------------------------------------

def test_dataset_round_trip(tmp_path) -> None:
    items = make_motion_dataset(per_class=2, seed=5, num_classes=2, test_every=2)
    write_dataset(tmp_path, items)
    loaded = load_dataset(tmp_path)
    assert [(i.label, i.split) for i in loaded] == [(i.label, i.split) for i in items]
    assert all(a.window.events == b.window.events for a, b in zip(loaded, items))
    assert {i.split for i in loaded} == {"train", "test"}


def test_dataset_is_seeded() -> None:
    a = make_motion_dataset(per_class=1, seed=2)
    b = make_motion_dataset(per_class=1, seed=2)
    assert [i.window.events for i in a] == [i.window.events for i in b]
    assert [i.label for i in a] == [0, 1, 2]


def test_missing_manifest(tmp_path) -> None:
    with pytest.raises(DatasetError):
        load_dataset(tmp_path)


def test_malformed_manifest(tmp_path) -> None:
    (tmp_path / "manifest.jsonl").write_text('{"file": "w.csv", "label": 0}\n')
    with pytest.raises(DatasetError):
        load_dataset(tmp_path)


def test_class_means_differ() -> None:
    """Each class's mean event position sits where its motion predicts."""
    items = make_motion_dataset(per_class=3, seed=1)
    (x0, y0), (x1, y1), (x2, y2) = (
        np.vstack([i.window.as_array()[:, :2] for i in items if i.label == label]).mean(axis=0)
        for label in range(3)
    )
    assert x0 < x1 < x2
    assert y1 < min(y0, y2)


def test_crossing_variant_shares_the_start() -> None:
    rng = np.random.default_rng(0)
    for label in range(3):
        spec = motion_scene(label, rng, seed=label, variant="crossing")
        assert np.abs(np.array(spec.objects[0].start) - 32.0).max() <= 5.0
        assert spec.noise_rate > motion_scene(label, rng, seed=label).noise_rate


def test_variants_differ_and_standard_is_the_default() -> None:
    default = make_motion_dataset(per_class=1, seed=4)
    standard = make_motion_dataset(per_class=1, seed=4, variant="standard")
    crossing = make_motion_dataset(per_class=1, seed=4, variant="crossing")
    assert [i.window.events for i in default] == [i.window.events for i in standard]
    assert [i.window.events for i in default] != [i.window.events for i in crossing]


def test_unknown_variant() -> None:
    with pytest.raises(DatasetError):
        make_motion_dataset(per_class=1, variant="zigzag")


# ---------------------------------------------
# Learning at dataset scale
# ---------------------------------------------

SEEDS = range(5)


@pytest.fixture(scope="module")
def crossing_items():
    items = make_motion_dataset(per_class=24, seed=8, variant="crossing")
    return split(items, "train"), split(items, "test")


def _train_and_test(train_items, test_items, cfg: RunConfig):
    graphs = prepare_windows([i.window for i in train_items], cfg, [i.label for i in train_items])
    model = train([g for g in graphs if g is not None], cfg.network).model
    return model, [i.window for i in test_items], [i.label for i in test_items]


@pytest.mark.slow
def test_desk_scale_dataset_is_learned() -> None:
    items = make_motion_dataset(per_class=60, seed=0)
    cfg = RunConfig()
    train_items, test_items = split(items, "train"), split(items, "test")
    graphs = prepare_windows([i.window for i in train_items], cfg, [i.label for i in train_items])
    result = train([g for g in graphs if g is not None], cfg.network)
    assert all(np.isfinite(row.loss) for row in result.trace)
    assert result.trace[-1].loss < result.trace[0].loss
    metrics = evaluate_windows(result.model, [i.window for i in test_items], [i.label for i in test_items], cfg)
    assert metrics.num_windows == 45
    assert metrics.accuracy >= 0.95


@pytest.mark.slow
def test_accuracy_grows_with_observed_events(crossing_items) -> None:
    train_items, test_items = crossing_items
    largest = max(len(i.window) for i in test_items)
    budgets = [int(round(largest * f / 10)) for f in range(1, 11)]
    curves = []
    for seed in SEEDS:
        cfg = load_run_config(None, {"seed": seed})
        model, windows, labels = _train_and_test(train_items, test_items, cfg)
        curves.append([evaluate_windows(model, windows, labels, cfg, n).accuracy for n in budgets])
    mean_curve = np.mean(curves, axis=0)
    rho, _ = spearmanr(budgets, mean_curve)
    assert rho > 0.8, mean_curve


@pytest.mark.slow
def test_full_pipeline_is_not_worse_than_the_bare_one(crossing_items) -> None:
    train_items, test_items = crossing_items
    means = {}
    for name, components in (("all", Components()), ("none", Components(False, False, False))):
        accuracies = []
        for seed in SEEDS:
            cfg = components.apply(load_run_config(None, {"seed": seed}))
            model, windows, labels = _train_and_test(train_items, test_items, cfg)
            accuracies.append(evaluate_windows(model, windows, labels, cfg).accuracy)
        means[name] = np.mean(accuracies)
    assert means["all"] >= means["none"], means
