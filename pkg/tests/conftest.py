import pytest

from lakin.synth import make_dataset


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """9 patients x 2 legs covering every half-step score, labels included."""
    root = tmp_path_factory.mktemp("synthdata")
    manifest = make_dataset(root, patients=9, seed=101)
    return manifest
