# ehgcn/events.py

"""
Module: events.py

Raw event streams: ingestion, serialization, windowing and synthetic scenes.

An event is the tuple (x, y, t, p) emitted by an event camera: pixel column,
pixel row, timestamp in microseconds and polarity in {-1, +1}. Streams are
always ordered by (t, x, y, p) so that every later stage is deterministic.

Functions:
- parse_events(source, fmt, polarity_zero_one, sensor_dims) -> List[Event]
- serialize_events(events, fmt) -> str
- read_events(path, ...) / write_events(path, events, ...)
- window_stream(events, delta_t, sensor_dims) -> List[EventWindow]
- synthesize_scene(spec) -> List[Event]
- synthesize_labeled_scene(spec) -> (List[Event], List[int])
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ehgcn.exceptions import EventFormatError, ParameterError
from ehgcn.schemas import SceneSpec

logger = logging.getLogger(__name__)

NOISE_LABEL = -1
FORMATS = ("csv", "jsonl")

Source = Union[bytes, str, BinaryIO]


class Event(NamedTuple):
    x: int
    y: int
    t: int
    p: int


def event_sort_key(event: Event) -> Tuple[int, int, int, int]:
    # timestamp first, ties broken by (x, y, p)
    return (event.t, event.x, event.y, event.p)


@dataclass(frozen=True)
class EventWindow:
    """Events of one half-open slice [t_start, t_end) of a stream."""

    events: Tuple[Event, ...]
    t_start: int
    t_end: int
    sensor_dims: Tuple[int, int]

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise ParameterError(f"empty window interval [{self.t_start}, {self.t_end})")
        for event in self.events:
            if not self.t_start <= event.t < self.t_end:
                raise ParameterError(
                    f"event at t={event.t} outside window [{self.t_start}, {self.t_end})"
                )

    def __len__(self) -> int:
        return len(self.events)

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start

    @property
    def width(self) -> int:
        return self.sensor_dims[0]

    @property
    def height(self) -> int:
        return self.sensor_dims[1]

    def as_array(self) -> np.ndarray:
        """Events as an (N, 4) int64 array with columns x, y, t, p."""
        if not self.events:
            return np.zeros((0, 4), dtype=np.int64)
        return np.asarray(self.events, dtype=np.int64)

    def truncate(self, n: int) -> "EventWindow":
        """Keep the first ``n`` events in time order."""
        return EventWindow(self.events[: max(n, 0)], self.t_start, self.t_end, self.sensor_dims)

    def subsample(self, n: int, seed: int) -> "EventWindow":
        """Keep ``n`` events chosen uniformly at random, order preserved."""
        if n >= len(self.events):
            return self
        rng = np.random.default_rng(seed)
        chosen = np.sort(rng.choice(len(self.events), size=max(n, 0), replace=False))
        return EventWindow(
            tuple(self.events[i] for i in chosen), self.t_start, self.t_end, self.sensor_dims
        )


# ---------------------------------------------
# Ingestion
# ---------------------------------------------

def _read_text(source: Source) -> str:
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            return source.decode("utf-8")
        except UnicodeDecodeError as e:
            raise EventFormatError(f"undecodable input: {e}") from e
    return source


def _polarity(value: int, line: int, polarity_zero_one: bool) -> int:
    if polarity_zero_one:
        if value not in (0, 1):
            raise EventFormatError(f"polarity {value} not in {{0, 1}}", line)
        return 1 if value == 1 else -1
    if value not in (-1, 1):
        raise EventFormatError(f"polarity {value} not in {{-1, +1}}", line)
    return value


def _row_values(line: str, lineno: int, fmt: str) -> Tuple[int, int, int, int]:
    if fmt == "csv":
        parts = line.split(",")
        if len(parts) != 4:
            raise EventFormatError(f"expected 4 fields, got {len(parts)}", lineno)
        try:
            x, y, t, p = (int(part) for part in parts)
        except ValueError:
            raise EventFormatError(f"non-integer field in {line!r}", lineno)
        return x, y, t, p
    try:
        record = json.loads(line)
        values = tuple(record[key] for key in ("x", "y", "t", "p"))
    except (ValueError, TypeError, KeyError) as e:
        raise EventFormatError(f"bad JSON event: {e}", lineno)
    for key, value in zip(("x", "y", "t", "p"), values):
        # bool is an int subclass
        if isinstance(value, bool) or not isinstance(value, int):
            raise EventFormatError(f"field {key} must be an integer, got {value!r}", lineno)
    return values


def parse_events(
    source: Source,
    fmt: str = "csv",
    polarity_zero_one: bool = False,
    sensor_dims: Optional[Tuple[int, int]] = None,
    sort: bool = True,
) -> List[Event]:
    """
    Decode an event stream and return it sorted by (t, x, y, p).

    Parameters:
    - source: raw bytes, text, or a binary file object.
    - fmt: "csv" (``x,y,t,p`` per line, no header) or "jsonl".
    - polarity_zero_one: the input encodes polarity as {0, 1}; map it to {-1, +1}.
    - sensor_dims: optional (width, height) bound checked for every event.
    - sort: with False the events keep their file order.

    Raises:
    - EventFormatError: a row is malformed, negative, out of bounds or has a bad polarity.
    """
    if fmt not in FORMATS:
        raise ParameterError(f"unknown event format {fmt!r}")
    events = []
    for lineno, raw in enumerate(_read_text(source).splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        x, y, t, p = _row_values(line, lineno, fmt)
        if x < 0 or y < 0 or t < 0:
            raise EventFormatError("negative coordinate or timestamp", lineno)
        if sensor_dims is not None and (x >= sensor_dims[0] or y >= sensor_dims[1]):
            raise EventFormatError(f"pixel ({x}, {y}) outside sensor {sensor_dims}", lineno)
        events.append(Event(x, y, t, _polarity(p, lineno, polarity_zero_one)))
    if sort:
        events.sort(key=event_sort_key)
    return events


def serialize_events(events: Sequence[Event], fmt: str = "csv") -> str:
    if fmt == "csv":
        return "".join(f"{e.x},{e.y},{e.t},{e.p}\n" for e in events)
    if fmt == "jsonl":
        return "".join(
            json.dumps({"x": e.x, "y": e.y, "t": e.t, "p": e.p}, separators=(",", ":")) + "\n"
            for e in events
        )
    raise ParameterError(f"unknown event format {fmt!r}")


def format_from_path(path: Union[str, Path]) -> str:
    return "jsonl" if Path(path).suffix.lower() in (".jsonl", ".json") else "csv"


def read_events(
    path: Union[str, Path],
    fmt: Optional[str] = None,
    polarity_zero_one: bool = False,
    sensor_dims: Optional[Tuple[int, int]] = None,
    sort: bool = True,
) -> List[Event]:
    with open(path, "rb") as handle:
        return parse_events(
            handle, fmt or format_from_path(path), polarity_zero_one, sensor_dims, sort
        )


def write_events(path: Union[str, Path], events: Sequence[Event], fmt: Optional[str] = None) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as handle:
        handle.write(serialize_events(events, fmt or format_from_path(path)))


# ---------------------------------------------
# Windowing
# ---------------------------------------------

def infer_sensor_dims(events: Sequence[Event]) -> Tuple[int, int]:
    if not events:
        return (1, 1)
    return (max(e.x for e in events) + 1, max(e.y for e in events) + 1)


def window_stream(
    events: Sequence[Event],
    delta_t: int,
    sensor_dims: Optional[Tuple[int, int]] = None,
) -> List[EventWindow]:
    """
    Tile [t_min, t_max] with half-open windows of length ``delta_t``.

    Empty windows are kept so that window index k always covers
    [t_min + k*delta_t, t_min + (k+1)*delta_t).
    """
    if delta_t <= 0:
        raise ParameterError(f"window length must be positive, got {delta_t}")
    if not events:
        return []
    dims = sensor_dims or infer_sensor_dims(events)
    t_min = min(e.t for e in events)
    t_max = max(e.t for e in events)
    count = (t_max - t_min) // delta_t + 1
    buckets: List[List[Event]] = [[] for _ in range(count)]
    for event in events:
        buckets[(event.t - t_min) // delta_t].append(event)
    windows = [
        EventWindow(tuple(bucket), t_min + k * delta_t, t_min + (k + 1) * delta_t, dims)
        for k, bucket in enumerate(buckets)
    ]
    logger.debug(f"windowed {len(events)} events into {len(windows)} windows of {delta_t} us")
    return windows


# ---------------------------------------------
# Synthetic scenes
# ---------------------------------------------

def synthesize_labeled_scene(spec: SceneSpec) -> Tuple[List[Event], List[int]]:
    """
    Generate a scene and the id of the object behind every event.

    Each object emits a Poisson number of events at uniform times, scattered
    uniformly over the disk of its radius around the moving center. Noise events
    are uniform over the sensor and the duration and carry label -1. Events that
    leave the sensor are dropped.
    """
    rng = np.random.default_rng(spec.seed)
    duration_us = max(int(round(spec.duration * 1e6)), 1)
    columns = []

    for object_id, obj in enumerate(spec.objects):
        n = rng.poisson(obj.rate * spec.duration)
        seconds = rng.uniform(0.0, spec.duration, n)
        radius = obj.radius * np.sqrt(rng.uniform(0.0, 1.0, n))
        theta = rng.uniform(0.0, 2.0 * np.pi, n)
        polarity = rng.choice(np.array([-1, 1]), n)
        cx = obj.start[0] + obj.velocity[0] * seconds + radius * np.cos(theta)
        cy = obj.start[1] + obj.velocity[1] * seconds + radius * np.sin(theta)
        t_us = np.minimum(np.floor(seconds * 1e6), duration_us - 1)
        columns.append((np.floor(cx + 0.5), np.floor(cy + 0.5), t_us, polarity,
                        np.full(n, object_id)))

    n_noise = rng.poisson(spec.noise_rate * spec.duration)
    columns.append((
        rng.integers(0, spec.width, n_noise),
        rng.integers(0, spec.height, n_noise),
        rng.integers(0, duration_us, n_noise),
        rng.choice(np.array([-1, 1]), n_noise),
        np.full(n_noise, NOISE_LABEL),
    ))

    x, y, t, p, labels = (np.concatenate([c[i] for c in columns]).astype(np.int64) for i in range(5))
    inside = (x >= 0) & (x < spec.width) & (y >= 0) & (y < spec.height)
    dropped = int((~inside).sum())
    if dropped:
        logger.debug(f"dropped {dropped} events outside the {spec.width}x{spec.height} sensor")
    x, y, t, p, labels = x[inside], y[inside], t[inside], p[inside], labels[inside]

    order = np.lexsort((p, y, x, t))
    events = [Event(int(x[i]), int(y[i]), int(t[i]), int(p[i])) for i in order]
    return events, [int(labels[i]) for i in order]


def synthesize_scene(spec: SceneSpec) -> List[Event]:
    events, _ = synthesize_labeled_scene(spec)
    return events
