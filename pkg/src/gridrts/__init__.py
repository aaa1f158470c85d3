"""Grid RTS simulation, RL interface and masked-PPO learner."""

__version__ = "0.1.0"
