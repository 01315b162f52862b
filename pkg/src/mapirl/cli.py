"""Command line interface: ``mapirl {gen-demos,fit,eval,sweep}``.

Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from mapirl import harness
from mapirl.core import DomainError, NumericalError
from mapirl.evaluate import play_match, minimax_policy
from mapirl.envs.tictactoe import game_policy_from_mdp
from mapirl.io import DemoFormatError, read_demos, read_params, write_demos, write_params
from mapirl.solver import SolverConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _episode_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _horizon(text: str):
    if text == "until-terminal":
        return None
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mapirl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, env=True):
        if env:
            sp.add_argument("--env", choices=harness.ENV_TAGS, required=True)
        sp.add_argument("--side", type=int, default=32, help="gridworld side length")
        sp.add_argument("--gamma", type=float, default=None)
        sp.add_argument("--beta", type=float, default=1.0)
        sp.add_argument("--ridge", type=float, default=None)
        sp.add_argument("--max-iterations", type=int, default=500)
        sp.add_argument("--tolerance", type=float, default=1e-6)
        sp.add_argument("--serial-reduce", action="store_true", help="accumulate LSTDQ trajectory by trajectory")

    g = sub.add_parser("gen-demos", help="sample expert demonstrations")
    g.add_argument("--env", choices=harness.ENV_TAGS, required=True)
    g.add_argument("--side", type=int, default=32)
    g.add_argument("--episodes", type=int, required=True)
    g.add_argument("--horizon", type=_horizon, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    f = sub.add_parser("fit", help="fit LRP or LPO to a demonstration file")
    f.add_argument("--demos", required=True)
    f.add_argument("--algo", choices=harness.ALGOS, required=True)
    f.add_argument("--out", required=True)
    common(f, env=False)
    f.add_argument("--env", choices=harness.ENV_TAGS, default=None, help="override the file's env tag")

    e = sub.add_parser("eval", help="loss of the policy induced by a parameter file")
    e.add_argument("--params", required=True)
    e.add_argument("--env", choices=harness.ENV_TAGS, default=None)
    e.add_argument("--side", type=int, default=32)
    e.add_argument("--games", type=int, default=0, help="tic-tac-toe: also play this many games")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--extraction", choices=harness.EXTRACTIONS, default="q-greedy", help="how LRP turns weights into a policy")

    s = sub.add_parser("sweep", help="run an (episodes x runs) experiment grid to CSV")
    common(s)
    s.add_argument("--algo", choices=harness.ALGOS, required=True)
    s.add_argument("--episodes", type=_episode_list, default=[10, 100, 1000, 10000])
    s.add_argument("--runs", type=int, default=20)
    s.add_argument("--horizon", type=_horizon, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--extraction", choices=harness.EXTRACTIONS, default="q-greedy", help="how LRP turns weights into a policy")
    s.add_argument("--out", required=True)
    return p


def _solver(args) -> SolverConfig:
    return SolverConfig(gradient_tolerance=args.tolerance, max_iterations=args.max_iterations)


def cmd_gen_demos(args) -> int:
    env = harness.make_env(args.env, args.side)
    horizon = args.horizon if args.horizon is not None else env.horizon
    D = harness.generate_demos(env.demo_model, harness.build_expert(env), args.episodes, horizon, args.seed, env.tag)
    write_demos(D, args.out)
    print(json.dumps({"trajectories": len(D), "decisions": D.n_decisions, "out": args.out}))
    return EXIT_OK


def cmd_fit(args) -> int:
    D = read_demos(args.demos)
    tag = args.env or D.env_tag
    if tag not in harness.ENV_TAGS:
        raise UsageError(f"unknown environment {tag!r}; pass --env")
    env = harness.make_env(tag, args.side)
    gamma = args.gamma if args.gamma is not None else harness.default_gamma(env)
    doc = harness.fit(env, D, args.algo, gamma, args.beta, args.ridge, _solver(args), args.serial_reduce)
    doc["side"] = args.side
    write_params(doc, args.out)
    print(json.dumps({k: doc[k] for k in ("model", "objective", "converged", "iterations", "message")}))
    return EXIT_OK


def cmd_eval(args) -> int:
    doc = read_params(args.params)
    tag = args.env or doc.get("env")
    if tag not in harness.ENV_TAGS:
        raise UsageError("parameter file has no env tag; pass --env")
    env = harness.make_env(tag, int(doc.get("side", args.side)))
    pi = harness.improved_policy(env, doc["model"], doc, args.extraction)
    out = {"env": tag, "model": doc["model"], "loss": harness.loss(env.eval_model, pi)}
    if args.games and env.game is not None:
        x = game_policy_from_mdp(pi, env.demo_model, env.game)
        o = minimax_policy(env.game) if tag == "tictactoe-optimal-opp" else env.game.uniform_policy()
        stats = play_match(x, o, env.game, args.games, args.seed)
        out.update(wins=stats.wins, draws=stats.draws, losses=stats.losses, mean_score=stats.mean_score)
    print(json.dumps(out))
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        config = harness.ExperimentConfig(
            env=args.env,
            algo=args.algo,
            episodes=tuple(args.episodes),
            runs=args.runs,
            horizon=args.horizon,
            gamma=args.gamma,
            beta=args.beta,
            ridge=args.ridge,
            solver=_solver(args),
            seed=args.seed,
            out=args.out,
            workers=args.workers,
            serial_reduce=args.serial_reduce,
            side=args.side,
            extraction=args.extraction,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    rows = harness.sweep(config)
    losses = np.array([r.loss for r in rows])
    print(json.dumps({"rows": len(rows), "out": args.out, "mean_loss": float(np.nanmean(losses))}))
    return EXIT_OK


COMMANDS = {"gen-demos": cmd_gen_demos, "fit": cmd_fit, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"mapirl: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as e:
        print(f"mapirl: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DemoFormatError, DomainError, OSError, ValueError, KeyError) as e:
        print(f"mapirl: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
