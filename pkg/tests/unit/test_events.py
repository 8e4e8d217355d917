# tests/unit/test_events.py

import numpy as np
import pytest
from pydantic import ValidationError

from ehgcn.events import (
    Event,
    EventWindow,
    NOISE_LABEL,
    parse_events,
    read_events,
    serialize_events,
    synthesize_labeled_scene,
    synthesize_scene,
    window_stream,
    write_events,
)
from ehgcn.exceptions import EventFormatError, ParameterError
from ehgcn.schemas import SceneObject, SceneSpec


# ---------------------------------------------
# Ingestion
# ---------------------------------------------

def test_parse_sorts_by_time() -> None:
    """Rows come back ordered by timestamp."""
    events = parse_events(b"3,4,1000,1\n1,2,500,-1")
    assert events == [Event(1, 2, 500, -1), Event(3, 4, 1000, 1)]


def test_parse_breaks_ties_by_x_y_p() -> None:
    events = parse_events("5,0,10,1\n2,9,10,1\n2,1,10,1\n2,1,10,-1\n")
    assert events == [Event(2, 1, 10, -1), Event(2, 1, 10, 1), Event(2, 9, 10, 1), Event(5, 0, 10, 1)]


@pytest.mark.parametrize(
    "source",
    [b"", "", "\n\n"],
    ids=["empty_bytes", "empty_text", "blank_lines"],
)
def test_parse_empty_input(source) -> None:
    assert parse_events(source) == []


@pytest.mark.parametrize(
    "source, line",
    [
        ("3,4,1000,2", 1),
        ("3,4,1000,1\n3,4,1001,0", 2),
        ("1,2,3", 1),
        ("1,2,a,1", 1),
        ("1,1,1,1\n-1,2,3,1", 2),
    ],
    ids=["polarity_two", "polarity_zero_not_remapped", "missing_field", "non_integer", "negative_x"],
)
def test_parse_errors_carry_line_numbers(source: str, line: int) -> None:
    with pytest.raises(EventFormatError) as excinfo:
        parse_events(source)
    assert excinfo.value.line == line
    assert str(excinfo.value).startswith(f"line {line}:")


def test_parse_zero_one_polarity_flag() -> None:
    events = parse_events("1,1,5,0\n2,2,6,1\n", polarity_zero_one=True)
    assert [e.p for e in events] == [-1, 1]


def test_parse_rejects_pixels_outside_sensor() -> None:
    with pytest.raises(EventFormatError):
        parse_events("10,2,5,1\n", sensor_dims=(10, 10))


def test_parse_jsonl() -> None:
    source = '{"x": 1, "y": 2, "t": 7, "p": 1}\n{"x": 0, "y": 0, "t": 3, "p": -1}\n'
    assert parse_events(source, fmt="jsonl") == [Event(0, 0, 3, -1), Event(1, 2, 7, 1)]


@pytest.mark.parametrize(
    "line",
    [
        '{"x": 1, "y": 2, "t": 3, "p": 1.5}',
        '{"x": 1, "y": 2, "t": "12", "p": 1}',
        '{"x": 1, "y": 2, "t": 3, "p": true}',
        '{"x": 1.0, "y": 2, "t": 3, "p": 1}',
    ],
    ids=["float_polarity", "string_time", "bool_polarity", "float_x"],
)
def test_jsonl_fields_must_be_integers(line: str) -> None:
    with pytest.raises(EventFormatError) as excinfo:
        parse_events(line + "\n", fmt="jsonl")
    assert excinfo.value.line == 1


def test_parse_can_keep_file_order() -> None:
    source = "3,4,1000,1\n1,2,500,-1\n"
    assert parse_events(source, sort=False) == [Event(3, 4, 1000, 1), Event(1, 2, 500, -1)]
    assert parse_events(source) == [Event(1, 2, 500, -1), Event(3, 4, 1000, 1)]


def test_parse_unknown_format() -> None:
    with pytest.raises(ParameterError):
        parse_events("", fmt="aedat")


@pytest.mark.parametrize("fmt", ["csv", "jsonl"], ids=["csv", "jsonl"])
def test_serialize_then_parse_is_idempotent(fmt: str) -> None:
    """Parsing the serialization of a parsed stream yields the same events."""
    events = parse_events("9,9,20,1\n1,2,5,-1\n1,2,5,1\n")
    assert parse_events(serialize_events(events, fmt), fmt=fmt) == events


def test_csv_file_round_trip(tmp_path) -> None:
    path = tmp_path / "events.csv"
    events = [Event(1, 2, 3, 1), Event(4, 5, 6, -1)]
    write_events(path, events)
    assert path.read_bytes() == b"1,2,3,1\n4,5,6,-1\n"
    assert read_events(path) == events


# ---------------------------------------------
# Windows
# ---------------------------------------------

def _events_at(times):
    return [Event(0, 0, t, 1) for t in times]


@pytest.mark.parametrize(
    "times, delta_t, expected_counts",
    [
        ([0, 5, 10], 10, [2, 1]),
        ([42], 7, [1]),
        ([0, 30], 10, [1, 0, 0, 1]),
    ],
    ids=["two_windows", "single_event", "empty_middle_windows"],
)
def test_window_stream_tiling(times, delta_t, expected_counts) -> None:
    windows = window_stream(_events_at(times), delta_t)
    assert [len(w) for w in windows] == expected_counts
    t_min = min(times)
    for k, window in enumerate(windows):
        assert window.t_start == t_min + k * delta_t
        assert window.duration == delta_t


def test_window_stream_partitions_the_input() -> None:
    rng = np.random.default_rng(1)
    events = sorted(
        (Event(int(x), int(y), int(t), 1) for x, y, t in rng.integers(0, 100, (200, 3))),
        key=lambda e: (e.t, e.x, e.y, e.p),
    )
    windows = window_stream(events, 13)
    assert [e for w in windows for e in w.events] == events


@pytest.mark.parametrize("delta_t", [0, -5], ids=["zero", "negative"])
def test_window_stream_rejects_bad_length(delta_t: int) -> None:
    with pytest.raises(ParameterError):
        window_stream(_events_at([1, 2]), delta_t)


def test_window_stream_empty() -> None:
    assert window_stream([], 10) == []


def test_window_rejects_event_outside_interval() -> None:
    with pytest.raises(ParameterError):
        EventWindow((Event(0, 0, 10, 1),), 0, 10, (4, 4))


def test_window_truncate_and_subsample() -> None:
    window = EventWindow(tuple(_events_at(range(10))), 0, 10, (4, 4))
    assert window.truncate(3).events == window.events[:3]
    sub = window.subsample(4, seed=7)
    assert len(sub) == 4
    assert set(sub.events) <= set(window.events)
    assert list(sub.events) == sorted(sub.events, key=lambda e: e.t)
    assert sub.events == window.subsample(4, seed=7).events


# ---------------------------------------------
# Synthetic scenes
# ---------------------------------------------

def _single_object(seed=0, noise_rate=0.0):
    return SceneSpec(
        objects=[SceneObject(start=(20.0, 20.0), velocity=(200.0, 0.0), radius=3.0, rate=5000.0)],
        noise_rate=noise_rate,
        duration=0.05,
        seed=seed,
        width=64,
        height=64,
    )


def test_scene_is_deterministic() -> None:
    assert synthesize_scene(_single_object(5)) == synthesize_scene(_single_object(5))
    assert synthesize_scene(_single_object(5)) != synthesize_scene(_single_object(6))


def test_object_events_lie_near_the_moving_center() -> None:
    events = synthesize_scene(_single_object())
    assert events
    for e in events:
        cx = 20.0 + 200.0 * e.t * 1e-6
        # quantization moves a point by at most half a pixel per axis
        assert np.hypot(e.x - cx, e.y - 20.0) <= 3.0 + 1.0 + 1e-9


def test_noise_count_is_poisson() -> None:
    spec = SceneSpec(noise_rate=20_000.0, duration=0.5, seed=2, width=32, height=32)
    expected = 20_000.0 * 0.5
    assert abs(len(synthesize_scene(spec)) - expected) <= 4 * np.sqrt(expected)


def test_labels_align_with_events() -> None:
    events, labels = synthesize_labeled_scene(_single_object(noise_rate=2000.0))
    assert len(events) == len(labels)
    assert set(labels) <= {0, NOISE_LABEL}
    assert NOISE_LABEL in labels and 0 in labels
    assert events == sorted(events, key=lambda e: (e.t, e.x, e.y, e.p))


def test_events_leaving_the_sensor_are_dropped() -> None:
    spec = SceneSpec(
        objects=[SceneObject(start=(2.0, 2.0), velocity=(-2000.0, 0.0), radius=2.0, rate=5000.0)],
        duration=0.05,
        width=16,
        height=16,
    )
    events = synthesize_scene(spec)
    assert all(0 <= e.x < 16 and 0 <= e.y < 16 for e in events)
    assert len(events) < 5000.0 * 0.05 / 2


@pytest.mark.parametrize("duration", [0.0, -1.0], ids=["zero", "negative"])
def test_scene_spec_rejects_non_positive_duration(duration: float) -> None:
    with pytest.raises(ValidationError):
        SceneSpec(duration=duration)
