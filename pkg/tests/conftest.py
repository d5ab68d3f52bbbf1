import pytest

from walkforge.environment import Environment, zero_offsets
from walkforge.schedule import ParameterSchedule, default_desk_schedule


@pytest.fixture(scope="session")
def desk1():
    """Desk N=1 schedule with K pinned to a recognizable value."""
    return default_desk_schedule(1).with_K(1, 7.5)


@pytest.fixture(scope="session")
def desk1_env(desk1):
    return Environment(desk1, zero_offsets(desk1))


@pytest.fixture(scope="session")
def desk2():
    return default_desk_schedule(2).with_K(1, 7.5).with_K(2, 9.25)


@pytest.fixture(scope="session")
def desk2_env(desk2):
    return Environment(desk2, zero_offsets(desk2))


def toy_schedule(a1=4, levels=1):
    """Structurally sound but desk-invalid; for offset sampling only."""
    a = [1]
    b, beta, eta, K = [], [], [], []
    for n in range(1, levels + 1):
        a.append(a1 * 2 ** (n - 1))
        b.append(2)
        beta.append(2)
        eta.append(0.5)
        K.append(None)
    return ParameterSchedule(levels=levels, a=tuple(a), b=tuple(b),
                             beta=tuple(beta), eta=tuple(eta), K=tuple(K),
                             mode="desk", eta_auto=False)
