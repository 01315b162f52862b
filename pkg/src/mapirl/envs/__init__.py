from mapirl.envs.blackjack import build_blackjack
from mapirl.envs.gridworld import RegionSpec, build_gridworld
from mapirl.envs.mdp import MdpModel, build_model, sample_start, step
from mapirl.envs.tictactoe import GameModel, build_tictactoe, fold_game_to_mdp

__all__ = [
    "GameModel",
    "MdpModel",
    "RegionSpec",
    "build_blackjack",
    "build_gridworld",
    "build_model",
    "build_tictactoe",
    "fold_game_to_mdp",
    "sample_start",
    "step",
]
