# ehgcn/config.py

"""
Run configuration: TOML files, command-line overrides and seed splitting.

A run file holds the top-level keys ``seed``, ``window_us`` and ``graph_k`` and
the tables ``[sampling]``, ``[mvf]`` and ``[network]``. Scene files hold the
SceneSpec keys with the objects as an array of ``[[objects]]`` tables.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import tomli
import torch

from ehgcn.exceptions import ParameterError
from ehgcn.schemas import RunConfig, SceneSpec

logger = logging.getLogger(__name__)

THREADS_ENV = "EHG_THREADS"


def read_toml(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, "rb") as handle:
        return tomli.load(handle)


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            merged[key] = _merge(merged.get(key, {}), value)
        else:
            merged[key] = value
    return merged


def derive_seeds(seed: int) -> Tuple[int, int, int]:
    """Sampling, network and dataset seeds, in that order."""
    children = np.random.SeedSequence(seed).spawn(3)
    sampling, network, dataset = (int(child.generate_state(1)[0]) for child in children)
    return sampling, network, dataset


def load_run_config(
    path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None
) -> RunConfig:
    """
    Build a RunConfig from an optional TOML file and flag overrides.

    ``None`` override values leave the file value in place. Sub-seeds that
    the file or the flags do not set are derived from the global seed.

    Raises:
    - pydantic.ValidationError: a value violates its constraints.
    - tomli.TOMLDecodeError: the file is not valid TOML.
    """
    data = read_toml(path) if path is not None else {}
    data = _merge(data, overrides or {})
    sampling_seed, network_seed, _ = derive_seeds(int(data.get("seed", 0)))
    data.setdefault("sampling", {}).setdefault("seed", sampling_seed)
    data.setdefault("network", {}).setdefault("seed", network_seed)
    cfg = RunConfig.model_validate(data)
    logger.debug(f"run config: {cfg.model_dump_json()}")
    return cfg


def load_scene_spec(path: Union[str, Path]) -> SceneSpec:
    return SceneSpec.model_validate(read_toml(path))


def configure_threads() -> Optional[int]:
    """
    Bound torch intra-op threads by EHG_THREADS when it is set.

    Raises:
    - ParameterError: the variable is not an integer.
    """
    value = os.getenv(THREADS_ENV)
    if not value:
        return None
    try:
        threads = max(int(value), 1)
    except ValueError:
        raise ParameterError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
    torch.set_num_threads(threads)
    return threads
