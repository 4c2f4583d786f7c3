import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "hygame",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("hygame")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ball():
    from hygame import builtin_scenario
    return builtin_scenario("bouncing_ball")


@pytest.fixture(scope="session")
def ball_pair(ball):
    from hygame import simulate
    return simulate(ball.system, [1.0, 1.0], ball.sim, law=ball.law)[0]


@pytest.fixture(scope="session")
def zeno_pair():
    from hygame import builtin_scenario, simulate
    sc = builtin_scenario("bouncing_ball_zeno")
    return simulate(sc.system, [1.0, 1.0], sc.sim, law=sc.law)[0]


@pytest.fixture(scope="session")
def robust():
    from hygame import builtin_scenario
    return builtin_scenario("robust_1d_nonunique")


@pytest.fixture(scope="session")
def robust_pairs(robust):
    from hygame import simulate
    return simulate(robust.system, [2.0], robust.sim, law=robust.law)


@pytest.fixture(scope="session")
def periodic():
    from hygame import builtin_scenario
    return builtin_scenario("lq_periodic_1d")


@pytest.fixture(scope="session")
def security():
    from hygame import builtin_scenario
    return builtin_scenario("security_jump")
