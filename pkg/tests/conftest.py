import numpy as np
import pytest

from uscf import build_aligned_stack, factorize, generate_world, make_frame_pool


def stack_from_world(world, k_neighbors=1):
    pools = [make_frame_pool(s, world.features[s]) for s in world.speaker_ids]
    return build_aligned_stack(pools[0], pools[1:], k_neighbors)


@pytest.fixture(scope="session")
def small_world():
    """Tiny strict noiseless world for fast unit tests."""
    return generate_world(
        true_rank=4,
        dim=64,
        speakers=3,
        extras=2,
        frames=80,
        clusters=6,
        beta=0.02,
        noise_sigma=0.0,
        seed=11,
    )


@pytest.fixture(scope="session")
def small_stack(small_world):
    return stack_from_world(small_world)


@pytest.fixture(scope="session")
def small_fact(small_stack):
    return factorize(small_stack, 4)


@pytest.fixture(scope="session")
def acceptance_world():
    """Strict noiseless world sized for the end-to-end checks."""
    return generate_world(
        true_rank=16,
        dim=256,
        speakers=5,
        extras=2,
        frames=2000,
        clusters=12,
        beta=0.005,
        noise_sigma=0.0,
        seed=42,
    )


@pytest.fixture(scope="session")
def acceptance_stack(acceptance_world):
    return stack_from_world(acceptance_world)


@pytest.fixture(scope="session")
def acceptance_fact(acceptance_stack):
    return factorize(acceptance_stack, 16)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
