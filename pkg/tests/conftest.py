import numpy as np
import pytest

from cfobe.scenario import NetworkConfig, assign_pilots, build_statistics, make_drop

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")


def small_config(**kw):
    base = dict(M=3, N=2, K=4, tau_p=2, area_side=300.0, seed=3)
    base.update(kw)
    return NetworkConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def stats_phase():
    return make_drop(small_config())


@pytest.fixture(scope="session")
def stats_nophase():
    return make_drop(small_config(phase_shifts=False))


def synthetic_stats(M=1, N=1, K=1, tau_p=1, gbar=None, R=None, **kw):
    """Statistics with unit pathloss and directly supplied LoS/NLoS parts."""
    cfg = NetworkConfig(M=M, N=N, K=K, tau_p=tau_p, **kw)
    pilots = assign_pilots(K, tau_p, "round-robin")
    if gbar is None:
        gbar = np.zeros((M, K, N), dtype=complex)
    if R is None:
        R = np.broadcast_to(np.eye(N, dtype=complex), (M, K, N, N)).copy()
    return build_statistics(None, pilots, cfg, gbar=gbar, R=R)
