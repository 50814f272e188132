import functools
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import settings

from rwlab.environment import QuenchedEnvironment
from rwlab.model import EnvAlphabet, EnvLaw, Kernel, Model
from rwlab.modelfile import zoo_model
from rwlab.simulate import run_ensemble

# statistical property tests must not flake: fixed example sequence
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

# committed before any acceptance run; never tuned
ENV_SEED = 20261018
CLT_ENV_SEEDS = (20261018, 20261019, 20261020)
MASTER_SEED = 1

# exact rational copies of the zoo, for brute-force oracles
EXACT = {
    "E1": dict(support=[(-1,), (0,), (1,)], p0=[F(1, 3)] * 3,
               c={"A": [F(1, 8), F(-1, 4), F(1, 8)], "B": [F(-1, 8), F(1, 4), F(-1, 8)]},
               pi={"A": F(1, 2), "B": F(1, 2)}),
    "E3": dict(support=[(-1, 0), (0, -1), (0, 1), (1, 0)], p0=[F(1, 4)] * 4,
               c={"A": [F(0)] * 4, "B": [F(0)] * 4}, pi={"A": F(1, 2), "B": F(1, 2)}),
    "E4": dict(support=[(-1,), (0,), (1,)], p0=[F(1, 6), F(1, 3), F(1, 2)],
               c={"A": [F(1, 8), F(-1, 4), F(1, 8)], "B": [F(-1, 8), F(1, 4), F(-1, 8)]},
               pi={"A": F(1, 2), "B": F(1, 2)}),
}


@pytest.fixture(scope="session")
def e1():
    return zoo_model("E1")


@pytest.fixture(scope="session")
def e3():
    return zoo_model("E3")


@pytest.fixture(scope="session")
def e4():
    return zoo_model("E4")


@pytest.fixture(scope="session")
def env1(e1):
    return QuenchedEnvironment.for_model(e1, ENV_SEED)


def point_mass_model(dim=1):
    sup = [[0] * dim, [1] + [0] * (dim - 1)]
    return Model(EnvAlphabet(("A", "B")), EnvLaw([0.5, 0.5]),
                 Kernel(sup, [1.0, 0.0], np.zeros((2, 2))), name="point")


def single_state_model():
    return Model(EnvAlphabet(("only",)), EnvLaw([1.0]),
                 Kernel([[-1], [0], [1]], [0.25, 0.5, 0.25], np.zeros((3, 1))), name="one")


@functools.lru_cache(maxsize=None)
def cached_ensemble(name, env_seed, T, M, master_seed=MASTER_SEED, mode="quenched"):
    """Large ensembles are shared between test modules."""
    model = zoo_model(name)
    env = QuenchedEnvironment.for_model(model, env_seed)
    return run_ensemble(model, env, np.zeros(model.dim, dtype=np.int64), T, M,
                        master_seed, mode=mode)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
