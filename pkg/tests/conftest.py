import pytest

from mpnet.ingest import SynthConfig, generate_synthetic

from fixtures import planted_config, null_config


@pytest.fixture(scope="session")
def planted_net():
    return generate_synthetic(planted_config())


@pytest.fixture(scope="session")
def null_net():
    return generate_synthetic(null_config())


@pytest.fixture(scope="session")
def small_synth():
    return generate_synthetic(SynthConfig(n_accounts=400, seed=11))
