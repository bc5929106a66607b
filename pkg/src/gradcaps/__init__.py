"""Action-smoothness regularization (CAPS and Grad-CAPS) for actor-critic RL."""

__version__ = "0.1.0"
