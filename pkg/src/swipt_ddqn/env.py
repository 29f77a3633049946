"""SWIPT energy-harvesting cognitive-IoT transmitter environment.

One episode is ``num_slots`` time slots. In every slot the secondary (CIoT)
transmitter picks a time-switching factor ``rho`` (fraction of the slot spent
harvesting) and a transmit power ``P_s``. The primary user occupies
``pu_slots`` of the slots; while it is active the CIoT link sees its
interference and must keep ``P_s * g_sp`` under the interference threshold.

The pure functions (:func:`sample_gain`, :func:`rate`, :func:`step`, ...) take
their random generator explicitly; :class:`SwiptEnv` wraps them into the
usual ``reset`` / ``step`` object that owns its generator and PU schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .utils import ConfigurationError, UsageError, as_generator

N_FEATURES = 6


def _default_rho_grid() -> tuple[float, ...]:
    return tuple(i / 10 for i in range(11))


def _default_power_grid() -> tuple[float, ...]:
    return tuple(i / 100 for i in range(11))


@dataclass(frozen=True)
class EnvConfig:
    """Physical and protocol constants of the simulated link.

    Energies are in watt-seconds (joules), powers in watts, durations in
    seconds. Defaults reproduce the simulation setup of the reference
    scenario; ``battery_init`` is the swept initial charge.
    """

    tau: float = 1.0
    num_slots: int = 30
    pu_slots: int = 18
    pu_power: float = 0.2
    interference_threshold: float = 0.1
    noise_variance: float = 1e-3
    pathloss_alpha: float = 4.0
    d_ss: float = 1.5
    d_sp: float = 1.8
    d_ps: float = 1.8
    battery_max: float = 0.5
    battery_init: float = 0.0
    gamma_shape: float = 0.5
    gamma_scale: float = 1.0
    conversion_mu: float = 0.9
    penalty: float = 7.0
    rho_grid: tuple[float, ...] = field(default_factory=_default_rho_grid)
    power_grid: tuple[float, ...] = field(default_factory=_default_power_grid)

    def __post_init__(self):
        # config files hand us lists; keep the dataclass hashable
        object.__setattr__(self, "rho_grid", tuple(float(r) for r in self.rho_grid))
        object.__setattr__(self, "power_grid", tuple(float(p) for p in self.power_grid))
        self.validate()

    def validate(self) -> None:
        errors = []
        if self.tau <= 0:
            errors.append("tau must be > 0")
        if int(self.num_slots) != self.num_slots or self.num_slots < 1:
            errors.append("num_slots must be a positive integer")
        if int(self.pu_slots) != self.pu_slots or not 0 <= self.pu_slots <= self.num_slots:
            errors.append(f"pu_slots must satisfy 0 <= L <= T (L={self.pu_slots}, T={self.num_slots})")
        if min(self.d_ss, self.d_sp, self.d_ps) <= 0:
            errors.append("distances must be > 0")
        if self.pathloss_alpha <= 0:
            errors.append("pathloss_alpha must be > 0")
        if self.noise_variance <= 0:
            errors.append("noise_variance must be > 0")
        if self.pu_power < 0:
            errors.append("pu_power must be >= 0")
        if self.interference_threshold < 0:
            errors.append("interference_threshold must be >= 0")
        if not 0 <= self.conversion_mu <= 1:
            errors.append("conversion_mu must lie in [0, 1]")
        if self.battery_max <= 0:
            errors.append("battery_max must be > 0")
        if not 0 <= self.battery_init <= self.battery_max:
            errors.append("battery_init must lie in [0, battery_max]")
        if self.gamma_shape <= 0 or self.gamma_scale <= 0:
            errors.append("gamma_shape and gamma_scale must be > 0")
        if self.penalty < 0:
            errors.append("penalty must be >= 0")
        if not self.rho_grid or any(not 0 <= r <= 1 for r in self.rho_grid):
            errors.append("rho_grid must be nonempty with values in [0, 1]")
        if not self.power_grid or any(p < 0 for p in self.power_grid):
            errors.append("power_grid must be nonempty with values >= 0")
        if errors:
            raise ConfigurationError("; ".join(errors))

    @property
    def n_actions(self) -> int:
        return len(self.rho_grid) * len(self.power_grid)

    @property
    def mean_energy(self) -> float:
        """Expected harvested power per slot, mu * k * beta."""
        return self.conversion_mu * self.gamma_shape * self.gamma_scale

    @property
    def gain_ceiling(self) -> float:
        a = self.pathloss_alpha
        return 10.0 * max(self.d_ss**-a, self.d_sp**-a, self.d_ps**-a)


@dataclass(frozen=True)
class EnvState:
    battery: float
    prev_energy: float
    pu_active: int
    gain_ps: float
    gain_sp: float
    gain_ss: float
    slot_index: int


@dataclass(frozen=True)
class Action:
    rho: float
    power: float
    index: int


@dataclass(frozen=True)
class StepResult:
    reward: float
    next_state: EnvState
    terminal: bool
    violated: bool
    # (1 - rho) * tau * R, the per-slot throughput term of the sum-rate
    # objective; 0 on a penalised step
    throughput: float = 0.0
    energy: float = 0.0


class ActionSpace:
    """Row-major joint grid: ``index = i * len(power_grid) + j``."""

    def __init__(self, rho_grid, power_grid):
        self.rho_grid = tuple(float(r) for r in rho_grid)
        self.power_grid = tuple(float(p) for p in power_grid)

    @classmethod
    def from_config(cls, config: EnvConfig) -> "ActionSpace":
        return cls(config.rho_grid, config.power_grid)

    @property
    def n(self) -> int:
        return len(self.rho_grid) * len(self.power_grid)

    def __len__(self) -> int:
        return self.n

    def encode(self, rho_idx: int, power_idx: int) -> int:
        if not (0 <= rho_idx < len(self.rho_grid) and 0 <= power_idx < len(self.power_grid)):
            raise IndexError(f"grid position ({rho_idx}, {power_idx}) out of range")
        return rho_idx * len(self.power_grid) + power_idx

    def decode(self, index: int) -> Action:
        index = int(index)
        if not 0 <= index < self.n:
            raise IndexError(f"action index {index} out of range [0, {self.n})")
        i, j = divmod(index, len(self.power_grid))
        return Action(self.rho_grid[i], self.power_grid[j], index)

    def index_of(self, rho: float, power: float) -> int:
        try:
            i = self.rho_grid.index(float(rho))
            j = self.power_grid.index(float(power))
        except ValueError:
            raise ValueError(f"({rho}, {power}) is not on the action grid") from None
        return self.encode(i, j)


def sample_gain(rng: np.random.Generator, distance: float, alpha: float, size=None):
    """Rayleigh-fading channel power gain: exponential with mean ``distance**-alpha``."""
    if distance <= 0:
        raise ConfigurationError(f"distance must be > 0, got {distance}")
    if alpha <= 0:
        raise ConfigurationError(f"alpha must be > 0, got {alpha}")
    return rng.exponential(distance**-alpha, size=size)


def sample_energy(rng: np.random.Generator, config: EnvConfig, size=None):
    """Harvestable power ``mu * e_hat`` with ``e_hat ~ Gamma(k, beta)``."""
    return config.conversion_mu * rng.gamma(config.gamma_shape, config.gamma_scale, size=size)


def sample_pu_schedule(rng: np.random.Generator, num_slots: int, pu_slots: int) -> np.ndarray:
    """Occupancy vector of length T with exactly L ones at uniformly random slots."""
    if not 0 <= pu_slots <= num_slots:
        raise ConfigurationError(f"need 0 <= L <= T, got L={pu_slots}, T={num_slots}")
    schedule = np.zeros(num_slots, dtype=np.int64)
    schedule[rng.permutation(num_slots)[:pu_slots]] = 1
    return schedule


def rate(power, gain_ss, pu_active, pu_power, gain_ps, noise_variance):
    """Achievable spectral efficiency (bits/s/Hz) of the CIoT link."""
    interference = pu_power * gain_ps if pu_active else 0.0
    return np.log2(1.0 + power * gain_ss / (interference + noise_variance))


def _sample_gains(rng: np.random.Generator, config: EnvConfig) -> tuple[float, float, float]:
    a = config.pathloss_alpha
    g_ps = float(sample_gain(rng, config.d_ps, a))
    g_sp = float(sample_gain(rng, config.d_sp, a))
    g_ss = float(sample_gain(rng, config.d_ss, a))
    return g_ps, g_sp, g_ss


def reset(rng: np.random.Generator, config: EnvConfig) -> tuple[EnvState, np.ndarray]:
    """Start an episode: returns the slot-1 state and the episode's PU schedule."""
    schedule = sample_pu_schedule(rng, config.num_slots, config.pu_slots)
    g_ps, g_sp, g_ss = _sample_gains(rng, config)
    state = EnvState(
        battery=float(config.battery_init),
        prev_energy=0.0,
        pu_active=int(schedule[0]),
        gain_ps=g_ps,
        gain_sp=g_sp,
        gain_ss=g_ss,
        slot_index=1,
    )
    return state, schedule


def is_feasible(state: EnvState, action: Action, config: EnvConfig) -> bool:
    used = action.power * (1.0 - action.rho) * config.tau
    if used < 0 or used > state.battery:
        return False
    if state.pu_active and action.power * state.gain_sp > config.interference_threshold:
        return False
    return True


def step(state: EnvState, action: Action, rng: np.random.Generator, config: EnvConfig,
         schedule: np.ndarray) -> StepResult:
    """Advance one slot.

    The next state's ``slot_index`` is ``t + 1``; after the final slot it is
    ``T + 1``, which marks the episode as finished and cannot be stepped.
    """
    t = state.slot_index
    if not 1 <= t <= config.num_slots:
        raise UsageError(f"cannot step slot {t}: episode has {config.num_slots} slots")

    energy = float(sample_energy(rng, config))
    tx_time = 1.0 - action.rho
    used = action.power * tx_time * config.tau
    violated = not is_feasible(state, action, config)

    if violated:
        reward = -config.penalty
        throughput = 0.0
        drawn = 0.0
    else:
        r = rate(action.power, state.gain_ss, state.pu_active, config.pu_power,
                 state.gain_ps, config.noise_variance)
        reward = float(tx_time * r)
        throughput = float(tx_time * config.tau * r)
        drawn = used

    battery = state.battery + action.rho * energy * config.tau - drawn
    battery = min(max(battery, 0.0), config.battery_max)

    terminal = t == config.num_slots
    g_ps, g_sp, g_ss = _sample_gains(rng, config)
    next_state = EnvState(
        battery=float(battery),
        prev_energy=energy,
        pu_active=0 if terminal else int(schedule[t]),
        gain_ps=g_ps,
        gain_sp=g_sp,
        gain_ss=g_ss,
        slot_index=t + 1,
    )
    return StepResult(reward, next_state, terminal, violated, throughput, energy)


def normalize(state: EnvState, config: EnvConfig) -> np.ndarray:
    """Fixed analytic scaling of a state into the network's 6 input features."""
    g_max = config.gain_ceiling
    e_scale = config.mean_energy if config.mean_energy > 0 else 1.0
    return np.array([
        state.battery / config.battery_max,
        min(state.prev_energy / e_scale, 10.0),
        float(state.pu_active),
        min(state.gain_ps, g_max) / g_max,
        min(state.gain_sp, g_max) / g_max,
        min(state.gain_ss, g_max) / g_max,
    ])


class SwiptEnv:
    """Stateful episode driver around :func:`reset` / :func:`step`.

    Parameters
    ----------
    config : EnvConfig
    random_state : int, SeedSequence, Generator or None
        Seeds the generator used for schedules, gains and energy arrivals.
        None of these draws depend on the actions taken, so two agents run on
        identically seeded environments see the same exogenous process.
    """

    n_features = N_FEATURES

    def __init__(self, config: EnvConfig | None = None, random_state=None):
        self.config = config if config is not None else EnvConfig()
        self.action_space = ActionSpace.from_config(self.config)
        self.rng = as_generator(random_state)
        self.state: EnvState | None = None
        self.schedule: np.ndarray | None = None
        self.done = True

    @property
    def n_actions(self) -> int:
        return self.action_space.n

    def reset(self) -> EnvState:
        self.state, self.schedule = reset(self.rng, self.config)
        self.done = False
        return self.state

    def step(self, action) -> StepResult:
        if self.state is None or self.done:
            raise UsageError("call reset() before stepping a finished episode")
        if not isinstance(action, Action):
            action = self.action_space.decode(action)
        result = step(self.state, action, self.rng, self.config, self.schedule)
        self.state = result.next_state
        self.done = result.terminal
        return result

    def features(self, state: EnvState | None = None) -> np.ndarray:
        return normalize(self.state if state is None else state, self.config)
