import numpy as np
import pytest
import scipy.sparse as sp
import torch

from ehgcn.datasets import make_motion_dataset, write_dataset
from ehgcn.events import Event, EventWindow, event_sort_key
from ehgcn.network import EHGCN, GraphBatch, normalize_adjacency, to_torch_sparse
from ehgcn.sampling import SampledStream
from ehgcn.schemas import NetworkConfig, SceneObject, SceneSpec


def make_window(events, t_start=0, t_end=None, sensor_dims=(64, 64)):
    """Window over ``events`` (tuples or Events); t_end defaults to just past the last event."""
    events = tuple(sorted((Event(*e) for e in events), key=event_sort_key))
    if t_end is None:
        t_end = (max(e.t for e in events) + 1) if events else t_start + 1
    return EventWindow(events, t_start, t_end, sensor_dims)


def make_stream(events, time_scale=1.0, **kwargs):
    return SampledStream.passthrough(make_window(events, **kwargs), time_scale)


@pytest.fixture
def window_factory():
    return make_window


@pytest.fixture
def stream_factory():
    return make_stream


@pytest.fixture
def two_object_spec():
    """Two well-separated objects moving in opposite directions, no noise."""
    def factory(seed: int = 0) -> SceneSpec:
        return SceneSpec(
            objects=[
                SceneObject(start=(16.0, 20.0), velocity=(400.0, 0.0), radius=3.0, rate=4000.0),
                SceneObject(start=(48.0, 44.0), velocity=(-400.0, 0.0), radius=3.0, rate=4000.0),
            ],
            noise_rate=0.0,
            duration=0.05,
            seed=seed,
            width=64,
            height=64,
        )
    return factory


@pytest.fixture
def toy_config():
    def factory(**overrides) -> NetworkConfig:
        values = dict(
            euclidean_widths=[4, 3],
            hyperbolic_widths=[3, 3],
            input_dim=4,
            num_classes=2,
            activation="tanh",
            seed=0,
        )
        values.update(overrides)
        return NetworkConfig(**values)
    return factory


def random_batch(num_graphs: int = 2, nodes: int = 6, input_dim: int = 4, num_classes: int = 2, seed: int = 0):
    """Random block-diagonal batch with k-ring adjacency inside every window."""
    rng = np.random.default_rng(seed)
    blocks, labels = [], []
    for g in range(num_graphs):
        ring = sp.diags([1, 1], [1, -1], shape=(nodes, nodes)).tolil()
        ring[0, nodes - 1] = ring[nodes - 1, 0] = 1
        blocks.append(normalize_adjacency(ring))
        labels.append(g % num_classes)
    adjacency = to_torch_sparse(sp.block_diag(blocks, format="csr"))
    neighbors = to_torch_sparse(sp.block_diag(
        [sp.diags([1, 1], [1, -1], shape=(nodes, nodes)) for _ in range(num_graphs)], format="csr"
    ))
    return GraphBatch(
        x=torch.as_tensor(rng.uniform(-1, 1, (num_graphs * nodes, input_dim)), dtype=torch.float64),
        euclidean_adj=adjacency,
        hyperbolic_adj=adjacency,
        neighbor_adj=neighbors,
        batch=torch.arange(num_graphs).repeat_interleave(nodes),
        num_graphs=num_graphs,
        labels=torch.as_tensor(labels, dtype=torch.long),
    )


@pytest.fixture
def batch_factory():
    return random_batch


@pytest.fixture
def toy_model(toy_config):
    return EHGCN(toy_config())


@pytest.fixture(scope="session")
def small_dataset_dir(tmp_path_factory):
    """A 3-class motion dataset with 8 windows per class on disk."""
    directory = tmp_path_factory.mktemp("motion")
    write_dataset(directory, make_motion_dataset(per_class=8, seed=3))
    return directory
