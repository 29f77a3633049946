"""Joint time-switching and power control for a SWIPT energy-harvesting
cognitive-IoT transmitter, learned with a double DQN and UCB exploration."""

from .agents import AgentConfig, QAgent, RandomAgent, make_agent
from .env import ActionSpace, EnvConfig, EnvState, SwiptEnv

__all__ = [
    "ActionSpace",
    "AgentConfig",
    "EnvConfig",
    "EnvState",
    "QAgent",
    "RandomAgent",
    "SwiptEnv",
    "make_agent",
]

__version__ = "0.1.0"
