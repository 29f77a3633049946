"""Value-based agents for the SWIPT cognitive-IoT environment.

:class:`QAgent` covers DDQN, DQN and dueling DDQN (D3QN) learners with either
UCB-adjusted or epsilon-greedy action selection, over the joint
(rho, power) grid or over power only with rho pinned. :class:`RandomAgent`
is the uniform baseline. Both follow the scikit-learn estimator protocol:
constructor arguments are hyperparameters, ``fit(env)`` trains,
``predict(X)`` maps normalized state features to action indices.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .env import N_FEATURES, EnvConfig, SwiptEnv
from .neural import (
    Adam,
    DuelingQNetwork,
    QNetwork,
    StepDecay,
    copy_parameters,
    mse_loss_and_grad,
    scheduler_step,
)
from .utils import ConfigurationError, as_generator, check_features, config_hash

VARIANTS = ("ddqn", "dqn", "d3qn")
EXPLORATIONS = ("ucb", "egreedy")
ACTION_MODES = ("joint", "power")


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    indices: np.ndarray | None = None


class ReplayBuffer:
    """Ring buffer of transitions with a learning-start threshold.

    Sampling is uniform, without replacement inside one minibatch, and is
    refused until ``len(buffer) >= learn_start``.
    """

    def __init__(self, capacity: int, n_features: int, learn_start: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if not 0 <= learn_start <= capacity:
            raise ValueError("learn_start must lie in [0, capacity]")
        self.capacity = int(capacity)
        self.learn_start = int(learn_start)
        self.states = np.zeros((capacity, n_features))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, n_features))
        self.terminals = np.zeros(capacity, dtype=bool)
        self._pos = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def ready(self) -> bool:
        return self._size >= self.learn_start

    def add(self, state, action, reward, next_state, terminal) -> None:
        i = self._pos
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminals[i] = terminal
        self._pos = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def push(self, transition: Transition) -> None:
        self.add(transition.state, transition.action, transition.reward,
                 transition.next_state, transition.terminal)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if not self.ready or self._size == 0:
            raise RuntimeError(f"buffer holds {self._size} < {self.learn_start} transitions")
        if batch_size > self._size:
            raise ValueError(f"batch of {batch_size} from {self._size} transitions")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.terminals[idx], idx)


class UcbStats:
    """Per-action selection counts and running mean rewards.

    ``step`` is the global slot clock ``(episode - 1) * T + t``; it starts at
    0 and :meth:`tick` advances it before each selection.
    """

    def __init__(self, n_actions: int, c: float = 2.5):
        self.c = float(c)
        self.counts = np.zeros(n_actions, dtype=np.int64)
        self.means = np.zeros(n_actions)
        self.step = 0

    def tick(self) -> int:
        self.step += 1
        return self.step

    def update(self, action: int, reward: float) -> None:
        self.counts[action] += 1
        self.means[action] += (reward - self.means[action]) / self.counts[action]

    def bonus(self) -> np.ndarray:
        """``sqrt(c ln t / C_a)``, +inf where an action was never tried."""
        if self.step < 1:
            raise ValueError("UCB clock must be >= 1")
        out = np.full(self.counts.shape, np.inf)
        tried = self.counts > 0
        out[tried] = np.sqrt(self.c * math.log(self.step) / self.counts[tried])
        return out


def ucb_adjust(q_values, stats: UcbStats) -> np.ndarray:
    """Add ``r_hat_a + sqrt(c ln t / C_a)`` to each Q-value (+inf if untried)."""
    # untried actions have mean 0 and an infinite bonus
    return np.asarray(q_values, dtype=np.float64) + stats.means + stats.bonus()


def double_q_targets(batch: Batch, online, target, gamma: float) -> np.ndarray:
    """``r + gamma * Q_target(s', argmax_a Q_online(s', a))``; just ``r`` at terminals."""
    q_next_online, _ = online.forward_cache(batch.next_states)
    q_next_target, _ = target.forward_cache(batch.next_states)
    best = np.argmax(q_next_online, axis=1)
    boot = q_next_target[np.arange(len(best)), best]
    return batch.rewards + gamma * np.where(batch.terminals, 0.0, boot)


def vanilla_q_targets(batch: Batch, target, gamma: float) -> np.ndarray:
    q_next, _ = target.forward_cache(batch.next_states)
    return batch.rewards + gamma * np.where(batch.terminals, 0.0, q_next.max(axis=1))


@dataclass
class EpisodeMetrics:
    episode: int
    total_reward: float
    violations: int
    throughput: float
    actions: np.ndarray = field(repr=False)
    rewards: np.ndarray = field(repr=False)
    violated: np.ndarray = field(repr=False)
    batteries: np.ndarray = field(repr=False)
    n_updates: int = 0

    @property
    def sum_rate(self) -> float:
        """Episode sum-rate score: throughput with penalties subtracted."""
        return float(self.throughput + self.rewards[self.violated].sum())

    @property
    def steps(self) -> int:
        return len(self.actions)


class _EpisodeAgent(BaseEstimator):
    """Shared episode loop; subclasses supply selection and learning."""

    def _init_action_map(self, env: SwiptEnv):
        space = env.action_space
        if getattr(self, "action_mode", "joint") == "power":
            try:
                i = space.rho_grid.index(float(self.fixed_rho))
            except ValueError:
                raise ConfigurationError(f"fixed_rho={self.fixed_rho} is not on the rho grid") from None
            return np.array([space.encode(i, j) for j in range(len(space.power_grid))])
        return np.arange(space.n)

    def fit(self, env: SwiptEnv, episodes: int | None = None):
        """Train for ``episodes`` (default ``self.n_episodes``) on ``env``."""
        n = self.n_episodes if episodes is None else episodes
        if n < 1:
            raise ValueError("episodes must be >= 1")
        for _ in range(n):
            self.partial_fit(env)
        return self

    def partial_fit(self, env: SwiptEnv):
        if not hasattr(self, "history_"):
            self._initialize(env)
        elif env.config != self.env_config_:
            raise ConfigurationError("agent was initialised on a different environment config")
        self.n_episodes_ += 1
        self._begin_episode(self.n_episodes_)
        state = env.reset()
        x = env.features(state)
        T = env.config.num_slots
        actions = np.empty(T, dtype=np.int64)
        rewards = np.empty(T)
        violated = np.empty(T, dtype=bool)
        batteries = np.empty(T)
        throughput = 0.0
        updates_before = self.n_updates_
        for k in range(T):
            self.ucb_.tick()
            a = self._select(x)
            result = env.step(int(self.action_map_[a]))
            x_next = env.features(result.next_state)
            self.ucb_.update(a, result.reward)
            self._observe(x, a, result.reward, x_next, result.terminal)
            actions[k], rewards[k], violated[k] = a, result.reward, result.violated
            batteries[k] = state.battery
            throughput += result.throughput
            x, state = x_next, result.next_state
        self._end_episode()
        metrics = EpisodeMetrics(self.n_episodes_, float(rewards.sum()), int(violated.sum()),
                                 throughput, actions, rewards, violated, batteries,
                                 self.n_updates_ - updates_before)
        self.history_.append(metrics)
        return self

    def _initialize(self, env: SwiptEnv):
        self.rng_ = as_generator(self.random_state)
        self.env_config_ = env.config
        self.action_map_ = self._init_action_map(env)
        self.n_actions_ = len(self.action_map_)
        self.n_features_in_ = N_FEATURES
        self.ucb_ = UcbStats(self.n_actions_, getattr(self, "ucb_c", 2.5))
        self.history_: list[EpisodeMetrics] = []
        self.n_episodes_ = 0
        self.n_updates_ = 0

    def _begin_episode(self, episode: int):
        pass

    def _end_episode(self):
        pass

    def _observe(self, x, a, r, x_next, terminal):
        pass

    def env_actions(self, agent_actions) -> np.ndarray:
        """Map agent action indices onto the environment's joint grid."""
        check_is_fitted(self, "action_map_")
        return self.action_map_[np.asarray(agent_actions, dtype=np.int64)]


class RandomAgent(_EpisodeAgent):
    """Uniformly random action every slot, no learning."""

    def __init__(self, n_episodes=2500, random_state=None):
        self.n_episodes = n_episodes
        self.random_state = random_state

    def _select(self, x) -> int:
        return int(self.rng_.integers(self.n_actions_))

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "action_map_")
        X = check_features(X, N_FEATURES)
        return self.rng_.integers(self.n_actions_, size=len(X))


class QAgent(_EpisodeAgent):
    """Deep Q-learning agent with a target network and experience replay.

    Parameters
    ----------
    variant : {"ddqn", "dqn", "d3qn"}
        Double-Q target with a plain MLP, vanilla max target with a plain
        MLP, or double-Q target with a dueling network.
    exploration : {"ucb", "egreedy"}
    action_mode : {"joint", "power"}
        ``"power"`` learns only the transmit power, with rho fixed to
        ``fixed_rho``.
    hidden : tuple of int
        Two hidden widths. For D3QN they are the trunk and stream widths.
    learn_start : int
        Transitions collected (with uniform random actions) before the first
        gradient update.
    target_sync : int
        Gradient updates between hard target-network copies.
    eps_start, eps_decay, eps_min : float
        Epsilon-greedy schedule, decayed multiplicatively once per episode.
    """

    def __init__(self, variant="ddqn", exploration="ucb", action_mode="joint", fixed_rho=0.5,
                 hidden=(512, 128), gamma=0.99, learning_rate=2e-4, lr_decay=0.5,
                 lr_interval=500, buffer_capacity=10_000, learn_start=333, batch_size=80,
                 target_sync=200, ucb_c=2.5, eps_start=1.0, eps_decay=0.998, eps_min=0.01,
                 n_episodes=2500, random_state=None):
        self.variant = variant
        self.exploration = exploration
        self.action_mode = action_mode
        self.fixed_rho = fixed_rho
        self.hidden = hidden
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.lr_interval = lr_interval
        self.buffer_capacity = buffer_capacity
        self.learn_start = learn_start
        self.batch_size = batch_size
        self.target_sync = target_sync
        self.ucb_c = ucb_c
        self.eps_start = eps_start
        self.eps_decay = eps_decay
        self.eps_min = eps_min
        self.n_episodes = n_episodes
        self.random_state = random_state

    def _validate_params(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}")
        if self.exploration not in EXPLORATIONS:
            raise ConfigurationError(f"exploration must be one of {EXPLORATIONS}")
        if self.action_mode not in ACTION_MODES:
            raise ConfigurationError(f"action_mode must be one of {ACTION_MODES}")
        if not 0 < self.gamma < 1:
            raise ConfigurationError("gamma must lie in (0, 1)")
        if not 1 <= self.batch_size <= self.learn_start <= self.buffer_capacity:
            raise ConfigurationError("need 1 <= batch_size <= learn_start <= buffer_capacity")
        if self.target_sync < 1:
            raise ConfigurationError("target_sync must be >= 1")
        if len(self.hidden) != 2:
            raise ConfigurationError("hidden must hold two layer widths")

    def _initialize(self, env: SwiptEnv):
        self._validate_params()
        super()._initialize(env)
        net_seed = int(self.rng_.integers(2**63))
        h1, h2 = self.hidden
        if self.variant == "d3qn":
            self.online_ = DuelingQNetwork(N_FEATURES, self.n_actions_, h1, h2, random_state=net_seed)
        else:
            self.online_ = QNetwork((N_FEATURES, h1, h2, self.n_actions_), random_state=net_seed)
        self.target_ = copy_parameters(self.online_)
        self.schedule_ = StepDecay(self.learning_rate, self.lr_decay, self.lr_interval)
        self.optimizer_ = Adam(self.online_.params, lr=self.learning_rate)
        self.buffer_ = ReplayBuffer(self.buffer_capacity, N_FEATURES, self.learn_start)
        self.epsilon_ = float(self.eps_start)
        self.losses_: list[float] = []

    def _begin_episode(self, episode):
        scheduler_step(self.optimizer_, self.schedule_, episode)

    def _end_episode(self):
        self.epsilon_ = max(self.eps_min, self.epsilon_ * self.eps_decay)

    def _select(self, x) -> int:
        if not self.buffer_.ready:
            return int(self.rng_.integers(self.n_actions_))
        if self.exploration == "egreedy":
            if self.rng_.random() < self.epsilon_:
                return int(self.rng_.integers(self.n_actions_))
            return int(np.argmax(self.online_.forward_cache(x[None, :])[0][0]))
        q = self.online_.forward_cache(x[None, :])[0][0]
        return int(np.argmax(ucb_adjust(q, self.ucb_)))

    def _observe(self, x, a, r, x_next, terminal):
        self.buffer_.add(x, a, r, x_next, terminal)
        if self.buffer_.ready:
            self._learn()

    def compute_targets(self, batch: Batch) -> np.ndarray:
        if self.variant == "dqn":
            return vanilla_q_targets(batch, self.target_, self.gamma)
        return double_q_targets(batch, self.online_, self.target_, self.gamma)

    def _learn(self):
        batch = self.buffer_.sample(self.batch_size, self.rng_)
        targets = self.compute_targets(batch)
        try:
            loss, grads = mse_loss_and_grad(self.online_, batch.states, batch.actions, targets)
        except FloatingPointError as exc:
            raise FloatingPointError(
                f"{exc} at episode {self.n_episodes_}, update {self.n_updates_}; "
                f"targets in [{targets.min()}, {targets.max()}]") from exc
        self.optimizer_.step(self.online_.params, grads)
        self.n_updates_ += 1
        self.losses_.append(loss)
        if self.n_updates_ % self.target_sync == 0:
            copy_parameters(self.online_, self.target_)

    def decision_function(self, X) -> np.ndarray:
        """Online-network Q-values, shape ``(n_samples, n_actions)``."""
        check_is_fitted(self, "online_")
        X = check_features(X, N_FEATURES)
        return self.online_.forward_cache(X)[0]

    def predict(self, X) -> np.ndarray:
        """Greedy agent-action index per feature row (lowest index on ties)."""
        return np.argmax(self.decision_function(X), axis=1)

    # -- checkpoints ---------------------------------------------------

    def save(self, path) -> None:
        """Write networks, optimizer, UCB statistics and RNG state to ``.npz``.

        The replay buffer is not saved.
        """
        check_is_fitted(self, "online_")
        arrays = {}
        for name, net in (("online", self.online_), ("target", self.target_)):
            for i, p in enumerate(net.params):
                arrays[f"{name}_{i}"] = p
        for i, (m, v) in enumerate(zip(self.optimizer_.m, self.optimizer_.v)):
            arrays[f"adam_m_{i}"] = m
            arrays[f"adam_v_{i}"] = v
        arrays["ucb_counts"] = self.ucb_.counts
        arrays["ucb_means"] = self.ucb_.means
        params = self.get_params()
        params["hidden"] = list(params["hidden"])
        meta = {
            "format": "swipt-ddqn-checkpoint/1",
            "params": params,
            "env_config": asdict(self.env_config_),
            "config_hash": config_hash({"agent": params, "env": self.env_config_}),
            "layer_dims": list(self.online_.layer_dims),
            "n_params": len(self.online_.params),
            "adam": {"t": self.optimizer_.t, "lr": self.optimizer_.lr},
            "ucb_step": self.ucb_.step,
            "epsilon": self.epsilon_,
            "n_episodes": self.n_episodes_,
            "n_updates": self.n_updates_,
            "rng_state": self.rng_.bit_generator.state,
        }
        arrays["meta"] = np.array(json.dumps(meta))
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "QAgent":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("format") != "swipt-ddqn-checkpoint/1":
                raise ValueError(f"{path} is not a checkpoint of this format")
            params = meta["params"]
            params["hidden"] = tuple(params["hidden"])
            agent = cls(**params)
            env = SwiptEnv(EnvConfig(**meta["env_config"]))
            agent._initialize(env)
            n = meta["n_params"]
            for i in range(n):
                np.copyto(agent.online_.params[i], data[f"online_{i}"])
                np.copyto(agent.target_.params[i], data[f"target_{i}"])
                np.copyto(agent.optimizer_.m[i], data[f"adam_m_{i}"])
                np.copyto(agent.optimizer_.v[i], data[f"adam_v_{i}"])
            agent.ucb_.counts[:] = data["ucb_counts"]
            agent.ucb_.means[:] = data["ucb_means"]
        agent.optimizer_.t = meta["adam"]["t"]
        agent.optimizer_.lr = meta["adam"]["lr"]
        agent.ucb_.step = meta["ucb_step"]
        agent.epsilon_ = meta["epsilon"]
        agent.n_episodes_ = meta["n_episodes"]
        agent.n_updates_ = meta["n_updates"]
        agent.rng_.bit_generator.state = meta["rng_state"]
        return agent


def train_episode(agent: _EpisodeAgent, env: SwiptEnv) -> EpisodeMetrics:
    """Run one training episode and return its metrics."""
    agent.partial_fit(env)
    return agent.history_[-1]


@dataclass(frozen=True)
class AgentConfig:
    """Serializable hyperparameters of a :class:`QAgent` (seed excluded)."""

    gamma: float = 0.99
    learning_rate: float = 2e-4
    lr_decay: float = 0.5
    lr_interval: int = 500
    buffer_capacity: int = 10_000
    learn_start: int = 333
    batch_size: int = 80
    target_sync: int = 200
    hidden: tuple[int, int] = (512, 128)
    ucb_c: float = 2.5
    eps_start: float = 1.0
    eps_decay: float = 0.998
    eps_min: float = 0.01
    fixed_rho: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0 < self.gamma < 1:
            raise ConfigurationError("gamma must lie in (0, 1)")
        if not 1 <= self.batch_size <= self.learn_start <= self.buffer_capacity:
            raise ConfigurationError("need 1 <= batch_size <= learn_start <= buffer_capacity")
        if not 0 < self.learning_rate < 1:
            raise ConfigurationError("learning_rate must lie in (0, 1)")


# strategy name -> QAgent overrides; None is the random policy
STRATEGIES: dict[str, dict | None] = {
    "ddqn-ucb": {"variant": "ddqn", "exploration": "ucb"},
    "ddqn-egreedy": {"variant": "ddqn", "exploration": "egreedy"},
    "dqn-ucb": {"variant": "dqn", "exploration": "ucb"},
    "dqn-egreedy": {"variant": "dqn", "exploration": "egreedy"},
    "d3qn-ucb": {"variant": "d3qn", "exploration": "ucb"},
    "d3qn-egreedy": {"variant": "d3qn", "exploration": "egreedy"},
    "fixed-rho-ucb": {"variant": "ddqn", "exploration": "ucb", "action_mode": "power"},
    "fixed-rho-egreedy": {"variant": "ddqn", "exploration": "egreedy", "action_mode": "power"},
    "random": None,
}


def make_agent(strategy: str, config: AgentConfig | None = None, random_state=None,
               n_episodes: int = 2500) -> _EpisodeAgent:
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"unknown strategy {strategy!r}; choose from {sorted(STRATEGIES)}")
    overrides = STRATEGIES[strategy]
    if overrides is None:
        return RandomAgent(n_episodes=n_episodes, random_state=random_state)
    params = asdict(config if config is not None else AgentConfig())
    params.update(overrides)
    return QAgent(**params, n_episodes=n_episodes, random_state=random_state)


def run_baseline(strategy: str, env: SwiptEnv, episodes: int, config: AgentConfig | None = None,
                 random_state=None) -> list[EpisodeMetrics]:
    """Train one strategy for ``episodes`` and return its per-episode metrics."""
    agent = make_agent(strategy, config, random_state, n_episodes=episodes)
    agent.fit(env)
    return agent.history_
