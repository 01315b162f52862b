"""MAP inverse reinforcement learning for environments with unknown dynamics.

Two estimators are provided:

* ``lrp`` -- a linear reward-prior model. Demonstrations are turned into an
  on-policy LSTDQ map ``C`` from reward weights to value weights, and the
  reward weights are fitted by maximising the softmax likelihood of the
  demonstrated actions.
* ``lpo`` -- a linear policy-optimality model that fits the value weights
  directly, with no dynamic-programming step.

Benchmark domains (blackjack, gridworld, tic-tac-toe) and exact evaluation
helpers live in :mod:`mapirl.envs` and :mod:`mapirl.evaluate`.
"""

from mapirl.core import (
    DemonstrationSet,
    DomainError,
    FeatureMaps,
    ParameterError,
    PolicyTable,
    QParams,
    RewardParams,
    Trajectory,
    log_likelihood,
    reward_of,
    softmax_policy,
)

__version__ = "0.1.0"

__all__ = [
    "DemonstrationSet",
    "DomainError",
    "FeatureMaps",
    "ParameterError",
    "PolicyTable",
    "QParams",
    "RewardParams",
    "Trajectory",
    "log_likelihood",
    "reward_of",
    "softmax_policy",
]
