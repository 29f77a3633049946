import math

import numpy as np
import pytest

from swipt_ddqn.env import EnvConfig

# criterion number -> [(passed, detail), ...]; filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.setdefault(criterion, []).append((bool(ok), detail))
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        parts = ACCEPTANCE_RESULTS[k]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


class StubRng:
    """Generator stand-in returning fixed energy and mean-valued gains."""

    def __init__(self, energy_hat=0.5, gain=None):
        self.energy_hat = energy_hat
        self.gain = gain

    def gamma(self, shape, scale, size=None):
        return self.energy_hat

    def exponential(self, scale, size=None):
        return scale if self.gain is None else self.gain


@pytest.fixture
def config():
    return EnvConfig()


def reference_step(B, e, pu, g_ps, g_sp, g_ss, rho, P, c: EnvConfig):
    """Straight-line evaluation of the reward and battery recurrence."""
    used = P * (1 - rho) * c.tau
    ok = 0 <= used <= B
    if pu == 1:
        ok = ok and P * g_sp <= c.interference_threshold
    if not ok:
        r = -c.penalty
        B_next = min(B + rho * e * c.tau, c.battery_max)
    else:
        if pu == 0:
            R = math.log2(1 + P * g_ss / c.noise_variance)
        else:
            R = math.log2(1 + P * g_ss / (c.pu_power * g_ps + c.noise_variance))
        r = (1 - rho) * R
        B_next = min(B + rho * e * c.tau - used, c.battery_max)
    return r, max(B_next, 0.0), not ok


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
