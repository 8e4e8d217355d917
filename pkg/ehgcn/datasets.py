# ehgcn/datasets.py

"""
Labeled synthetic motion datasets.

Every window shows one disk-shaped object crossing a 64x64 sensor over
background noise. The class is the direction of motion: 0 moves right,
1 moves down, 2 moves left. Start positions and speeds are jittered per
window. On disk a dataset is a ``manifest.jsonl`` (one ManifestRecord per
window) next to one CSV event file per window.

Two variants exist:

- ``standard``: every class starts on its own side of the sensor over light
  noise, so the whole window separates the classes easily.
- ``crossing``: every class starts at the sensor center with a wider jitter
  over heavy noise. Only the displacement tells the classes apart, so
  accuracy grows with the share of the window that is observed.
"""

import logging
from pathlib import Path
from typing import Dict, List, NamedTuple, Tuple, Union

import numpy as np
from pydantic import ValidationError

from ehgcn.events import EventWindow, read_events, synthesize_scene, write_events
from ehgcn.exceptions import DatasetError
from ehgcn.schemas import ManifestRecord, SceneObject, SceneSpec

logger = logging.getLogger(__name__)

MANIFEST = "manifest.jsonl"
SENSOR = 64
DURATION_S = 0.05
WINDOW_US = int(DURATION_S * 1e6)
OBJECT_RATE = 4000.0
OBJECT_RADIUS = 4.0
SPEED_JITTER = 0.2

# unit direction per class; every object travels 24 px at nominal speed
CLASS_DIRECTIONS: Tuple[Tuple[float, float], ...] = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0))
NOMINAL_SPEED = 24.0 / DURATION_S


class MotionVariant(NamedTuple):
    starts: Tuple[Tuple[float, float], ...]
    noise_rate: float
    start_jitter: float


VARIANTS: Dict[str, MotionVariant] = {
    "standard": MotionVariant(((12.0, 32.0), (32.0, 12.0), (52.0, 32.0)), noise_rate=400.0, start_jitter=2.0),
    "crossing": MotionVariant(((32.0, 32.0),) * 3, noise_rate=2000.0, start_jitter=5.0),
}


class LabeledWindow(NamedTuple):
    window: EventWindow
    label: int
    split: str


def motion_scene(label: int, rng: np.random.Generator, seed: int, variant: str = "standard") -> SceneSpec:
    params = VARIANTS[variant]
    (sx, sy), (dx, dy) = params.starts[label], CLASS_DIRECTIONS[label]
    jitter = rng.uniform(-params.start_jitter, params.start_jitter, 2)
    speed = NOMINAL_SPEED * (1 + rng.uniform(-SPEED_JITTER, SPEED_JITTER))
    return SceneSpec(
        objects=[SceneObject(
            start=(sx + jitter[0], sy + jitter[1]),
            velocity=(dx * speed, dy * speed),
            radius=OBJECT_RADIUS,
            rate=OBJECT_RATE,
        )],
        noise_rate=params.noise_rate,
        duration=DURATION_S,
        seed=seed,
        width=SENSOR,
        height=SENSOR,
    )


def make_motion_dataset(
    per_class: int = 60, seed: int = 0, num_classes: int = 3, test_every: int = 4, variant: str = "standard"
) -> List[LabeledWindow]:
    """
    ``per_class`` windows of each class; every ``test_every``-th window of a
    class goes to the test split.
    """
    if not 2 <= num_classes <= len(CLASS_DIRECTIONS):
        raise DatasetError(f"num_classes must lie in [2, {len(CLASS_DIRECTIONS)}]")
    if variant not in VARIANTS:
        raise DatasetError(f"unknown dataset variant {variant!r}; expected one of {sorted(VARIANTS)}")
    rng = np.random.default_rng(seed)
    scene_seeds = rng.integers(0, 2**31 - 1, size=(num_classes, per_class))
    items = []
    for i in range(per_class):
        for label in range(num_classes):
            spec = motion_scene(label, rng, int(scene_seeds[label, i]), variant)
            window = EventWindow(tuple(synthesize_scene(spec)), 0, WINDOW_US, (SENSOR, SENSOR))
            split = "test" if i % test_every == test_every - 1 else "train"
            items.append(LabeledWindow(window, label, split))
    return items

def write_dataset(directory: Union[str, Path], items: List[LabeledWindow]) -> Path:
    directory = Path(directory)
    (directory / "windows").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, item in enumerate(items):
        name = f"windows/{item.split}_{i:05d}.csv"
        write_events(directory / name, item.window.events, "csv")
        record = ManifestRecord(
            file=name,
            label=item.label,
            split=item.split,
            t_start=item.window.t_start,
            t_end=item.window.t_end,
            width=item.window.width,
            height=item.window.height,
        )
        lines.append(record.model_dump_json())
    manifest = directory / MANIFEST
    manifest.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    logger.info(f"wrote {len(items)} windows to {directory}")
    return manifest


def load_dataset(directory: Union[str, Path]) -> List[LabeledWindow]:
    """
    Raises:
    - DatasetError: the manifest is missing, malformed or points outside a window.
    """
    directory = Path(directory)
    manifest = directory / MANIFEST
    if not manifest.is_file():
        raise DatasetError(f"no {MANIFEST} in {directory}")
    items = []
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = ManifestRecord.model_validate_json(line)
        except ValidationError as e:
            raise DatasetError(f"{manifest}:{lineno}: {e}") from e
        events = read_events(directory / record.file, "csv", sensor_dims=(record.width, record.height))
        try:
            window = EventWindow(tuple(events), record.t_start, record.t_end, (record.width, record.height))
        except ValueError as e:
            raise DatasetError(f"{record.file}: {e}") from e
        items.append(LabeledWindow(window, record.label, record.split))
    return items


def split(items: List[LabeledWindow], name: str) -> List[LabeledWindow]:
    return [item for item in items if item.split == name]
