import numpy as np
import pytest

import posmdp


@pytest.fixture(scope="session")
def bus_model():
    return posmdp.build_bus_problem()


@pytest.fixture(scope="session")
def maintenance_model():
    return posmdp.build_maintenance_problem(100)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def make_random_model(
    rng,
    n_states=3,
    n_actions=2,
    n_observations=3,
    beta=0.05,
    with_atoms=False,
):
    """Small fully-connected model with random parameters, for property tests."""
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    kernel = rng.dirichlet(np.ones(n_observations), size=(n_actions, n_states))
    sojourn = {}
    for s in range(n_states):
        for a in range(n_actions):
            for s2 in range(n_states):
                if with_atoms and rng.random() < 0.3:
                    sojourn[(s, a, s2)] = posmdp.DeterministicAtom(
                        float(rng.integers(1, 6))
                    )
                else:
                    mu = float(rng.uniform(2.0, 10.0))
                    sojourn[(s, a, s2)] = posmdp.InverseGaussian(mu, 10.0 * mu * mu)
    return posmdp.PosmdpModel(
        states=tuple(f"s{i}" for i in range(n_states)),
        actions=tuple(f"a{i}" for i in range(n_actions)),
        observations=tuple(f"o{i}" for i in range(n_observations)),
        transition=transition,
        sojourn=sojourn,
        observation_kernel=kernel,
        lump_reward=rng.normal(size=(n_states, n_actions)),
        rate_reward=rng.normal(size=(n_states, n_actions, n_states)),
        beta=beta,
        initial_belief=rng.dirichlet(np.ones(n_states)),
    )


@pytest.fixture()
def random_model_factory():
    return make_random_model
