# ehgcn/sampling.py

"""
Module: sampling.py

Adaptive spatio-temporal sampling of one event window.

Every event gets a local density from the mean distance to its k nearest
neighbors in (x, y, scale*t). The whole window gets a motion-intensity rate P
from the variance of its normalized timestamps pushed through a sigmoid. The
retention probability of an event is P scaled by its density relative to the
densest event, so dense regions keep more events and isolated noise is
attenuated.

Functions:
- mean_knn_distance(window, k, scale) -> per-event mean neighbor distance
- density(mean_distance, epsilon) -> 1 / (mean_distance + epsilon)
- temporal_variance(window) -> variance of timestamps normalized to [0, 1]
- sampling_rate(variance, alpha, beta) -> sigmoid(alpha * (variance - beta))
- final_probabilities(rate, densities) -> rate * d_i / max_j d_j
- sample(window, cfg) -> SampledStream
- uniform_sample(window, rate, seed) -> SampledStream with a fixed rate
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ehgcn.events import Event, EventWindow
from ehgcn.exceptions import ParameterError
from ehgcn.neighbors import event_coordinates, knn
from ehgcn.schemas import SampleDiagnostic, SamplingConfig

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class SampledStream:
    """Retained subset of a window plus the per-event diagnostics behind it."""

    window: EventWindow
    retained: Tuple[Event, ...]
    kept: np.ndarray
    probabilities: np.ndarray
    densities: np.ndarray
    window_rate: float
    time_scale: float

    def __len__(self) -> int:
        return len(self.retained)

    @property
    def retained_indices(self) -> np.ndarray:
        return np.flatnonzero(self.kept)

    def retained_array(self) -> np.ndarray:
        if not self.retained:
            return np.zeros((0, 4), dtype=np.int64)
        return np.asarray(self.retained, dtype=np.int64)

    def coordinates(self) -> np.ndarray:
        return event_coordinates(self.retained_array(), self.time_scale, self.window.t_start)

    @classmethod
    def passthrough(cls, window: EventWindow, time_scale: Optional[float] = None) -> "SampledStream":
        """Keep every event; used for streams that were sampled earlier."""
        n = len(window)
        return cls(
            window=window,
            retained=window.events,
            kept=np.ones(n, dtype=bool),
            probabilities=np.ones(n),
            densities=np.zeros(n),
            window_rate=1.0,
            time_scale=time_scale or default_time_scale(window),
        )


def default_time_scale(window: EventWindow) -> float:
    """Map the window length onto the sensor diagonal."""
    return float(np.hypot(window.width, window.height)) / window.duration


def mean_knn_distance(window: EventWindow, k: int, scale: Optional[float] = None) -> np.ndarray:
    """
    Mean distance from every event to its k nearest other events.

    Windows with at most k events use every other event; windows with fewer
    than two events get +inf everywhere.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    n = len(window)
    if n < 2:
        return np.full(n, np.inf)
    scale = default_time_scale(window) if scale is None else scale
    coords = event_coordinates(window.as_array(), scale, window.t_start)
    dist, _ = knn(coords, k)
    return dist.mean(axis=1)


def density(mean_distance: ArrayLike, epsilon: float) -> ArrayLike:
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    return 1.0 / (np.asarray(mean_distance, dtype=np.float64) + epsilon)


def normalized_time_variance(normalized_times: np.ndarray) -> float:
    """Population variance of timestamps already scaled to [0, 1]."""
    if len(normalized_times) == 0:
        return 0.0
    return float(np.var(np.asarray(normalized_times, dtype=np.float64)))


def temporal_variance(window: EventWindow) -> float:
    if not len(window):
        return 0.0
    ts = (window.as_array()[:, 2] - window.t_start) / window.duration
    return normalized_time_variance(ts)


def sampling_rate(variance: float, alpha: float, beta: float) -> float:
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    return float(expit(alpha * (variance - beta)))


def final_probabilities(rate: float, densities: np.ndarray) -> np.ndarray:
    densities = np.asarray(densities, dtype=np.float64)
    if np.any(densities < 0):
        raise ParameterError("densities must be non-negative")
    if densities.size == 0:
        return densities.copy()
    top = densities.max()
    if top > 0:
        return rate * densities / top
    return np.full(densities.shape, rate, dtype=np.float64)


def _bernoulli(window: EventWindow, probabilities: np.ndarray, seed: int) -> Tuple[np.ndarray, Tuple[Event, ...]]:
    rng = np.random.default_rng(seed)
    kept = rng.random(len(window)) < probabilities
    retained = tuple(event for event, keep in zip(window.events, kept) if keep)
    return kept, retained


def sample(window: EventWindow, cfg: SamplingConfig) -> SampledStream:
    """Retain each event independently with its adaptive probability."""
    if cfg.mode == "uniform":
        return uniform_sample(window, cfg.uniform_rate, cfg.seed, cfg.spatial_time_scale)

    scale = cfg.spatial_time_scale or default_time_scale(window)
    densities = density(mean_knn_distance(window, cfg.k, scale), cfg.epsilon)
    rate = sampling_rate(temporal_variance(window), cfg.alpha, cfg.beta)
    probabilities = final_probabilities(rate, densities)
    kept, retained = _bernoulli(window, probabilities, cfg.seed)
    logger.debug(f"window [{window.t_start}, {window.t_end}): P={rate:.4f}, kept {len(retained)}/{len(window)}")
    return SampledStream(window, retained, kept, probabilities, densities, rate, scale)


def uniform_sample(
    window: EventWindow, rate: float, seed: int, time_scale: Optional[float] = None
) -> SampledStream:
    """Fixed-rate downsampling, the baseline the adaptive strategy replaces."""
    if not 0 <= rate <= 1:
        raise ParameterError(f"rate must lie in [0, 1], got {rate}")
    n = len(window)
    probabilities = np.full(n, rate, dtype=np.float64)
    kept, retained = _bernoulli(window, probabilities, seed)
    return SampledStream(
        window, retained, kept, probabilities, np.zeros(n), float(rate),
        time_scale or default_time_scale(window),
    )


def window_seeds(seed: int, count: int) -> List[int]:
    """Independent per-window seeds split from one seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1)[0]) for child in children]


def sample_windows(windows: Sequence[EventWindow], cfg: SamplingConfig) -> List[SampledStream]:
    seeds = window_seeds(cfg.seed, len(windows))
    return [
        sample(window, cfg.model_copy(update={"seed": seed}))
        for window, seed in zip(windows, seeds)
    ]


def diagnostics(stream: SampledStream, window_index: int = 0) -> List[SampleDiagnostic]:
    return [
        SampleDiagnostic(
            window=window_index,
            index=i,
            t=event.t,
            density=float(stream.densities[i]),
            probability=float(stream.probabilities[i]),
            kept=bool(stream.kept[i]),
        )
        for i, event in enumerate(stream.window.events)
    ]
