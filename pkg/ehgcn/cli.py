# ehgcn/cli.py

"""
Command-line front end: ``ehg <command> [flags]``.

Exit codes: 0 success, 1 I/O or data error, 2 configuration error.
"""

import csv
import functools
import itertools
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
import tomli
from pydantic import ValidationError

from ehgcn.config import configure_threads, derive_seeds, load_run_config, load_scene_spec
from ehgcn.datasets import VARIANTS, LabeledWindow, load_dataset, make_motion_dataset, split, write_dataset
from ehgcn.events import (
    NOISE_LABEL,
    Event,
    event_sort_key,
    infer_sensor_dims,
    read_events,
    synthesize_labeled_scene,
    window_stream,
    write_events,
)
from ehgcn.exceptions import EhgcnError, ParameterError
from ehgcn.flops import estimate_flops
from ehgcn.hypergraph import build_hyperedges, mean_purity, motion_features, size_histogram, write_hypergraph
from ehgcn.pipeline import Components, prepare_windows
from ehgcn.sampling import SampledStream, diagnostics, sample_windows
from ehgcn.schemas import AblationRow, HypergraphStats, RunConfig, WindowStats
from ehgcn.training import evaluate_windows, load_checkpoint, save_checkpoint, train, write_trace

logger = logging.getLogger(__name__)

EXIT_DATA = 1
EXIT_CONFIG = 2


def reports_errors(func):
    """Map library errors onto the exit-code contract."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ValidationError, ParameterError, tomli.TOMLDecodeError) as e:
            logger.error(f"configuration error: {e}")
            click.echo(f"error: {e}", err=True)
            raise SystemExit(EXIT_CONFIG)
        except (EhgcnError, OSError) as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"error: {e}", err=True)
            raise SystemExit(EXIT_DATA)

    return wrapper


def config_options(func):
    func = click.option("--seed", type=int, default=None, help="Global seed, split into sub-seeds.")(func)
    func = click.option(
        "--config", "config_path", type=click.Path(dir_okay=False), default=None,
        help="TOML run configuration; flags override its values.",
    )(func)
    return func


def sensor_options(func):
    func = click.option("--height", type=int, default=None, help="Sensor height in pixels; inferred when omitted.")(func)
    func = click.option("--width", type=int, default=None, help="Sensor width in pixels; inferred when omitted.")(func)
    return func


def _run_config(config_path: Optional[str], overrides: Dict[str, Any]) -> RunConfig:
    return load_run_config(config_path, overrides)


def _read_labels(path: str) -> List[int]:
    with open(path, encoding="utf-8") as handle:
        try:
            return [int(line) for line in handle if line.strip()]
        except ValueError as e:
            raise EhgcnError(f"{path}: labels must be integers") from e


def _write_labels(path: Path, labels: Sequence[int]) -> None:
    path.write_text("".join(f"{label}\n" for label in labels), encoding="ascii")


def _read_labeled(
    events_file: str, labels_path: Optional[str], polarity_zero_one: bool = False
) -> Tuple[List[Event], Optional[List[int]]]:
    """Events in stream order, with the sidecar labels (given in file order) moved along."""
    if labels_path is None:
        return read_events(events_file, polarity_zero_one=polarity_zero_one), None
    events = read_events(events_file, polarity_zero_one=polarity_zero_one, sort=False)
    labels = _read_labels(labels_path)
    if len(labels) != len(events):
        raise EhgcnError(f"{len(labels)} labels for {len(events)} events")
    order = sorted(range(len(events)), key=lambda i: event_sort_key(events[i]))
    return [events[i] for i in order], [labels[i] for i in order]


def _sensor_dims(events: Sequence[Event], width: Optional[int], height: Optional[int]) -> Tuple[int, int]:
    inferred = infer_sensor_dims(events)
    return (width or inferred[0], height or inferred[1])


def _retention(kept: Sequence[bool], mask: np.ndarray) -> str:
    return f"{float(np.mean(np.asarray(kept)[mask])):.4f}" if mask.any() else "n/a"


@click.group()
@click.option(
    "--log-level", default="WARNING", show_default=True,
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    help="Logging threshold (logs go to stderr).",
)
@reports_errors
def cli(log_level: str) -> None:
    """Event-stream perception: sampling, motion hypergraphs and dual-space GCNs."""
    logging.basicConfig(level=getattr(logging, log_level.upper()))
    configure_threads()


@cli.command()
@click.argument("spec_file", type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Event CSV to write.")
@reports_errors
def synth(spec_file: str, out: str) -> None:
    """Render a scene file into events plus a per-event object-id sidecar."""
    spec = load_scene_spec(spec_file)
    events, labels = synthesize_labeled_scene(spec)
    write_events(out, events)
    _write_labels(Path(f"{out}.labels"), labels)
    click.echo(f"wrote {len(events)} events to {out}")


@cli.command()
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--per-class", type=click.IntRange(min=1), default=60, show_default=True,
              help="Windows per class.")
@click.option("--num-classes", type=click.IntRange(2, 3), default=3, show_default=True,
              help="Motion classes (right, down, left).")
@click.option("--variant", type=click.Choice(sorted(VARIANTS)), default="standard", show_default=True,
              help="standard: classes start apart; crossing: shared start under heavy noise.")
@click.option("--seed", type=int, default=0, show_default=True, help="Global seed; the dataset sub-seed is used.")
@reports_errors
def dataset(out_dir: str, per_class: int, num_classes: int, variant: str, seed: int) -> None:
    """Write the labeled synthetic motion dataset."""
    items = make_motion_dataset(per_class, derive_seeds(seed)[2], num_classes, variant=variant)
    manifest = write_dataset(out_dir, items)
    click.echo(f"wrote {len(items)} windows, manifest {manifest}")


@cli.command("sample")
@click.argument("events_file", type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Retained events.")
@click.option("--diagnostics", "diagnostics_path", type=click.Path(dir_okay=False), default=None,
              help="Per-event density/probability JSONL.")
@click.option("--labels", "labels_path", type=click.Path(dir_okay=False), default=None,
              help="Label sidecar of the input; the retained labels go to <out>.labels.")
@click.option("--window-us", type=int, default=None, help="Window length in microseconds.")
@click.option("--k", type=int, default=None, help="Neighbors of the density estimate.")
@click.option("--epsilon", type=float, default=None, help="Density stabilizer.")
@click.option("--alpha", type=float, default=None, help="Sigmoid sensitivity of the window rate.")
@click.option("--beta", type=float, default=None, help="Motion-intensity bias of the window rate.")
@click.option("--mode", type=click.Choice(["adaptive", "uniform"]), default=None, help="Sampling strategy.")
@sensor_options
@click.option("--polarity-zero-one", is_flag=True, help="Input polarity is {0, 1}.")
@config_options
@reports_errors
def sample_command(events_file, out, diagnostics_path, labels_path, window_us, k, epsilon, alpha, beta,
                   mode, width, height, polarity_zero_one, config_path, seed) -> None:
    """
    Adaptively downsample an event stream window by window.

    With --labels, a last line compares the retention of object events
    (label >= 0) with that of noise events (label -1).
    """
    cfg = _run_config(config_path, {
        "seed": seed,
        "window_us": window_us,
        "sampling": {"k": k, "epsilon": epsilon, "alpha": alpha, "beta": beta, "mode": mode},
    })
    events, labels = _read_labeled(events_file, labels_path, polarity_zero_one)
    windows = window_stream(events, cfg.window_us, _sensor_dims(events, width, height))
    streams = sample_windows(windows, cfg.sampling)

    retained: List[Event] = []
    kept_mask: List[bool] = []
    records = []
    for i, stream in enumerate(streams):
        retained.extend(stream.retained)
        kept_mask.extend(bool(keep) for keep in stream.kept)
        records.extend(diagnostics(stream, i))
        rate = len(stream) / len(stream.window) if len(stream.window) else 0.0
        click.echo(
            f"window {i} [{stream.window.t_start}, {stream.window.t_end}): "
            f"kept {len(stream)}/{len(stream.window)} retention {rate:.4f} P {stream.window_rate:.4f}"
        )

    write_events(out, retained)
    if labels is not None:
        # windows tile the sorted stream, so kept_mask lines up with labels
        _write_labels(Path(f"{out}.labels"), [label for label, keep in zip(labels, kept_mask) if keep])
        label_array = np.asarray(labels)
        click.echo(
            f"retention object {_retention(kept_mask, label_array != NOISE_LABEL)} "
            f"noise {_retention(kept_mask, label_array == NOISE_LABEL)}"
        )
    if diagnostics_path:
        Path(diagnostics_path).write_text(
            "".join(record.model_dump_json() + "\n" for record in records), encoding="utf-8"
        )


@cli.command()
@click.argument("sampled_file", type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Hypergraph JSONL.")
@click.option("--stats", "stats_path", type=click.Path(dir_okay=False), default=None,
              help="Write the summary statistics JSON here as well.")
@click.option("--labels", "labels_path", type=click.Path(dir_okay=False), default=None,
              help="Label sidecar; enables purity in the stats.")
@click.option("--window-us", type=int, default=None, help="Window length in microseconds.")
@click.option("--gamma", type=float, default=None, help="Link threshold on the transition score, in (0, 1).")
@click.option("--sigma-v", type=float, default=None, help="Direction tolerance of the transition score.")
@click.option("--sigma-s", type=float, default=None, help="Intensity tolerance of the transition score (px).")
@click.option("--candidate-k", type=int, default=None, help="Neighbors scored per event.")
@sensor_options
@config_options
@reports_errors
def hypergraph(sampled_file, out, stats_path, labels_path, window_us, gamma, sigma_v, sigma_s, candidate_k,
               width, height, config_path, seed) -> None:
    """Group motion-consistent events of an (already sampled) stream into hyperedges."""
    cfg = _run_config(config_path, {
        "seed": seed,
        "window_us": window_us,
        "mvf": {"gamma": gamma, "sigma_v": sigma_v, "sigma_s": sigma_s, "candidate_k": candidate_k},
    })
    events, labels = _read_labeled(sampled_file, labels_path)
    windows = window_stream(events, cfg.window_us, _sensor_dims(events, width, height))

    histogram: Dict[str, int] = {}
    purities = []
    num_hyperedges = 0
    offset = 0
    with open(out, "w", encoding="utf-8", newline="\n") as handle:
        for i, window in enumerate(windows):
            stream = SampledStream.passthrough(window, cfg.sampling.spatial_time_scale)
            graph = build_hyperedges(motion_features(stream), stream, cfg.mvf)
            write_hypergraph(handle, graph, cfg.mvf, window=i)
            num_hyperedges += graph.num_hyperedges
            for size, count in size_histogram(graph).items():
                histogram[size] = histogram.get(size, 0) + count
            if labels is not None and graph.num_hyperedges:
                purities.append((mean_purity(graph, labels[offset:offset + len(window)]), graph.num_hyperedges))
            offset += len(window)

    purity = None
    if labels is not None and purities:
        purity = float(sum(p * n for p, n in purities) / sum(n for _, n in purities))
    stats = HypergraphStats(
        num_windows=len(windows),
        num_vertices=len(events),
        num_hyperedges=num_hyperedges,
        size_histogram=dict(sorted(histogram.items(), key=lambda item: int(item[0]))),
        purity=purity,
    )
    if stats_path:
        Path(stats_path).write_text(stats.model_dump_json(indent=1) + "\n", encoding="utf-8")
    click.echo(stats.model_dump_json())


def _network_overrides(phase1_steps, phase2_steps, learning_rate, geometry, aggregation) -> Dict[str, Any]:
    return {
        "phase1_steps": phase1_steps,
        "phase2_steps": phase2_steps,
        "learning_rate": learning_rate,
        "geometry": geometry,
        "aggregation_source": aggregation,
    }


def _graphs(items: Sequence[LabeledWindow], cfg: RunConfig):
    graphs = prepare_windows([item.window for item in items], cfg, [item.label for item in items])
    return [g for g in graphs if g is not None]


@cli.command("train")
@click.argument("dataset_dir", type=click.Path(file_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Checkpoint JSON.")
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None, help="Loss trace CSV.")
@click.option("--phase1-steps", type=int, default=None, help="Steps training the Euclidean stage only.")
@click.option("--phase2-steps", type=int, default=None, help="Steps with hyperbolic layers and curvatures unfrozen.")
@click.option("--learning-rate", type=float, default=None, help="Learning rate, curvatures included.")
@click.option("--geometry", type=click.Choice(["dual", "euclidean"]), default=None,
              help="Dual-space network or a Euclidean stack of the same widths.")
@click.option("--aggregation", type=click.Choice(["pairwise", "hypergraph", "both"]), default=None,
              help="Structure feeding the hyperbolic aggregation.")
@config_options
@reports_errors
def train_command(dataset_dir, out, trace_path, phase1_steps, phase2_steps, learning_rate, geometry,
                  aggregation, config_path, seed) -> None:
    """Train on the train split of a dataset directory."""
    cfg = _run_config(config_path, {
        "seed": seed,
        "network": _network_overrides(phase1_steps, phase2_steps, learning_rate, geometry, aggregation),
    })
    result = train(_graphs(split(load_dataset(dataset_dir), "train"), cfg), cfg.network)
    save_checkpoint(out, result.model)
    if trace_path:
        write_trace(trace_path, result.trace)
    last = result.trace[-1] if result.trace else None
    click.echo(json.dumps({
        "steps": len(result.trace),
        "final_loss": last.loss if last else None,
        "train_accuracy": last.accuracy if last else None,
        "curvatures": result.model.curvature_values(),
    }))


@cli.command("eval")
@click.argument("dataset_dir", type=click.Path(file_okay=False))
@click.option("--checkpoint", type=click.Path(dir_okay=False), required=True, help="Checkpoint JSON from train.")
@click.option("--split", "split_name", type=click.Choice(["train", "test"]), default="test", show_default=True,
              help="Dataset split to evaluate.")
@click.option("--max-events", type=click.IntRange(min=0), multiple=True,
              help="Event budget per window; repeat for an accuracy-vs-events curve.")
@click.option("--protocol", type=click.Choice(["prefix", "random"]), default="prefix", show_default=True,
              help="Keep the first n events or n random events.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Metrics JSON or curve CSV.")
@config_options
@reports_errors
def eval_command(dataset_dir, checkpoint, split_name, max_events, protocol, out, config_path, seed) -> None:
    """Evaluate a checkpoint; with --max-events emit one CSV row per budget."""
    model = load_checkpoint(checkpoint)
    cfg = _run_config(config_path, {"seed": seed})
    cfg = cfg.model_copy(update={"network": model.cfg})
    items = split(load_dataset(dataset_dir), split_name)
    windows = [item.window for item in items]
    labels = [item.label for item in items]

    if not max_events:
        metrics = evaluate_windows(model, windows, labels, cfg, split=split_name)
        text = metrics.model_dump_json(indent=1) + "\n"
    else:
        rows = ["max_events,accuracy,num_windows,num_empty\n"]
        for n in max_events:
            metrics = evaluate_windows(model, windows, labels, cfg, n, protocol, split_name)
            rows.append(f"{n},{metrics.accuracy!r},{metrics.num_windows},{metrics.num_empty}\n")
        text = "".join(rows)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


@cli.command()
@click.option("--stats", "stats_path", type=click.Path(dir_okay=False), default=None,
              help="WindowStats JSON; overrides the count flags.")
@click.option("--nodes", type=int, default=0, help="Events (graph nodes) in the window.")
@click.option("--pairwise-nnz", type=int, default=0, help="Non-zeros of the pairwise aggregation matrix.")
@click.option("--hypergraph-nnz", type=int, default=0, help="Non-zeros of the hypergraph aggregation matrix.")
@click.option("--hyperedges", type=int, default=0, help="Hyperedge count of the window.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="TOML run configuration giving the network shape.")
@reports_errors
def flops(stats_path, nodes, pairwise_nnz, hypergraph_nnz, hyperedges, config_path) -> None:
    """Count the FLOPs of one forward pass over one window."""
    cfg = _run_config(config_path, {})
    if stats_path:
        stats = WindowStats.model_validate_json(Path(stats_path).read_text(encoding="utf-8"))
    else:
        stats = WindowStats(
            num_nodes=nodes, pairwise_nnz=pairwise_nnz, hypergraph_nnz=hypergraph_nnz, num_hyperedges=hyperedges
        )
    click.echo(estimate_flops(cfg.network, stats).model_dump_json(indent=1))


@cli.command()
@click.argument("dataset_dir", type=click.Path(file_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Ablation CSV.")
@click.option("--seeds", type=int, multiple=True, default=(0, 1, 2, 3, 4), show_default=True,
              help="Global seeds averaged per row; repeat the flag.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="TOML run configuration the components are switched on.")
@reports_errors
def ablate(dataset_dir, out, seeds, config_path) -> None:
    """Accuracy of every on/off combination of the three pipeline components."""
    items = load_dataset(dataset_dir)
    train_items, test_items = split(items, "train"), split(items, "test")
    rows = []
    for flags in itertools.product((False, True), repeat=3):
        components = Components(*flags)
        accuracies = []
        for seed in seeds:
            cfg = components.apply(_run_config(config_path, {"seed": seed}))
            model = train(_graphs(train_items, cfg), cfg.network).model
            metrics = evaluate_windows(
                model, [i.window for i in test_items], [i.label for i in test_items], cfg
            )
            accuracies.append(metrics.accuracy)
        rows.append(AblationRow(
            adaptive_sampling=components.adaptive_sampling,
            motion_hypergraph=components.motion_hypergraph,
            hyperbolic_embedding=components.hyperbolic_embedding,
            mean_accuracy=float(np.mean(accuracies)),
            accuracies=accuracies,
        ))
        logger.info(f"{components}: mean accuracy {rows[-1].mean_accuracy:.4f}")

    with open(out, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["adaptive_sampling", "motion_hypergraph", "hyperbolic_embedding", "mean_accuracy", "accuracies"])
        for row in rows:
            writer.writerow([
                int(row.adaptive_sampling), int(row.motion_hypergraph), int(row.hyperbolic_embedding),
                repr(row.mean_accuracy), ";".join(repr(a) for a in row.accuracies),
            ])
    click.echo(f"wrote {len(rows)} rows to {out}")


def main() -> None:
    cli(prog_name="ehg")


if __name__ == "__main__":
    main()
