"""Discrete mean-field-game modelling of population dynamics over topics.

Forward dynamics and metrics live in :mod:`mfgpop.core`, brute-force ground
truth in :mod:`mfgpop.oracle`, the Dirichlet policy and actor-critic solver in
:mod:`mfgpop.policy` and :mod:`mfgpop.actorcritic`, the reward network and
inverse RL loop in :mod:`mfgpop.rewardnet` and :mod:`mfgpop.irl`, and the
forecasting baselines in :mod:`mfgpop.baselines`.
"""

from .core import Trajectory, forward_step, jsd, load_dataset, save_dataset
from .policy import PolicyParams

__all__ = ["PolicyParams", "Trajectory", "forward_step", "jsd", "load_dataset", "save_dataset"]
__version__ = "0.1.0"
