import pytest
import torch

from core.config import config_from_dict
from harness.data import ingest_dataset, prepare_experiment
from ingest.writers import write_city
from risk.synthetic import generate_synthetic_city


SMALL_MODEL = {
    "embed_dim": 8,
    "heads": 2,
    "layers": 1,
    "k": 4,
    "k_members": 4,
    "hyperedge_ratio": 0.25,
    "input_steps": 6,
    "horizon": 2,
    "head_hidden": 16,
    "batch_size": 4,
    "max_epochs": 2,
    "patience": 5,
    "seed": 3,
}


@pytest.fixture(autouse=True)
def single_thread():
    """Bitwise determinism is only promised single-threaded."""
    torch.set_num_threads(1)
    yield


@pytest.fixture
def small_settings():
    return dict(SMALL_MODEL)


@pytest.fixture
def small_config(tmp_path):
    """Desk-sized model settings writing into a temporary run directory."""
    return config_from_dict({**SMALL_MODEL, "output_dir": str(tmp_path / "run")})


@pytest.fixture(scope="session")
def tiny_city():
    """3x3 grid, 60 daily steps, three hotspots."""
    return generate_synthetic_city(n_regions=9, n_steps=60, n_hotspots=3, seed=7)


@pytest.fixture
def dataset_dir(tmp_path, tiny_city):
    write_city(tiny_city, tmp_path / "data")
    return tmp_path / "data"


@pytest.fixture
def small_dataset(dataset_dir, small_config):
    return ingest_dataset(dataset_dir, small_config)


@pytest.fixture
def experiment(small_dataset, small_config):
    return prepare_experiment(small_dataset, small_config)
