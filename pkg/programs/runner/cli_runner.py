"""
Command line front end.

    python programs/runner/cli_runner.py {solve,learn,simulate,compare}
        --config scenario.yaml --out results/ [--seed N] [--tol T]
        [--max-iters K] [--verbose]

Writes report.yaml plus CSV files into --out and exits with a code
telling which error class stopped the run (see EXIT_CODES).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from colorama import Fore

sys.path.append(os.path.abspath(os.path.join(
    os.path.dirname(__file__), '..', '..')))
from programs.analysis.model_based import (follower_best_response, incentive_matrix,
                                           solve_follower_value, solve_team_optimal)
from programs.game.errors import (EmptyGrid, GameError, IncentiveInfeasible,
                                  MaxIterationsExceeded, ModelError, NotConverged,
                                  ParseError, RankDeficient, SingularMatrix,
                                  TailRequiresLinearPolicy, TooFewSamples,
                                  UnknownField, UnstableClosedLoop, ValidationError)
from programs.game.game_model import GainPair, IncentivePolicy
from programs.game.utils import frobenius, relative_error, setup_logging
from programs.q_learning.adp_learner import (algorithm1_team_optimal, exploration_batch,
                                             incentive_from_H, incentive_rtol,
                                             learn_follower_q, value_from_H)
from programs.runner.config import MODES, load_config
from programs.runner.report import REPORT_NAME, RunReport, write_report
from programs.simulation.plant_sim import (LinearFollower, LinearLeader, PlantHandle,
                                           evaluate_cost, rollout, write_trajectory)

logger = logging.getLogger(__name__)

EXIT_CODES = {
    GameError: 1,
    ParseError: 2,
    UnknownField: 3,
    ValidationError: 4,
    NotConverged: 5,
    MaxIterationsExceeded: 6,
    SingularMatrix: 7,
    RankDeficient: 8,
    TooFewSamples: 8,
    IncentiveInfeasible: 9,
    UnstableClosedLoop: 10,
    TailRequiresLinearPolicy: 11,
    EmptyGrid: 11,
    ModelError: 12,
}
ALIGNMENT_TOL = 1e-8


def exit_code(err):
    """Code of the most specific class of err listed in EXIT_CODES."""
    for cls in type(err).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    return 1


@contextmanager
def stage(name):
    """
    Names the pipeline step in any GameError raised inside the block.
    We attach the note with add_note, main prints it under the error line.

    Parameters
    ----------
    name : str
        Shown as "while running stage '<name>'".
    """
    try:
        yield
    except GameError as err:
        note = f"while running stage '{name}'"
        if hasattr(err, "add_note"):
            err.add_note(note)
        else:  # Python < 3.11: same effect as BaseException.add_note (PEP 678)
            err.__notes__ = [*getattr(err, "__notes__", ()), note]
        raise


def _solve(config, report):
    """
    Model-based part of every mode.
    We solve the team problem with the leader's weights, then compute M
    against the follower game (the attacker's weights when the scenario
    gives some) and check that the follower's best response under M is the
    team K2.

    Returns
    -------
    tuple
        (TeamSolution, M, K2 best response).
    """
    game, follower_game = config.game, config.follower_game
    with stage("team solution"):
        team = solve_team_optimal(game, config.solver)
    with stage("incentive matrix"):
        Pv = solve_follower_value(follower_game, team.gains, config.solver)
        M = incentive_matrix(follower_game, team.gains, Pv)
    with stage("alignment check"):
        K2_star = follower_best_response(follower_game, IncentivePolicy(team.gains, M),
                                         config.solver)
    error = frobenius(K2_star - team.gains.K2)
    report.solved = {
        "P": team.P, "K1": team.gains.K1, "K2": team.gains.K2,
        "Pv": Pv.Pv, "M": M,
        "J1_team": team.cost(game.x0),
        "iterations": team.iterations,
        "are_residual": team.residual,
        "lyapunov_residual": Pv.residual,
    }
    report.alignment = {
        "K2_best_response": K2_star,
        "error": error,
        "aligned": bool(error <= ALIGNMENT_TOL * (1 + frobenius(team.gains.K2))),
    }
    return team, M, K2_star


def _learn(config, report, out, team, M):
    """
    Learns the team gains and the incentive from one shared exploration
    batch, writes both convergence logs and fills report.learned.
    Returns the learned (GainPair, M).
    """
    game, follower_game = config.game, config.follower_game
    env = PlantHandle.from_game(game, config.learner.seed)
    with stage("data collection"):
        batch = exploration_batch(env, config.learner)
    with stage("team gains learning"):
        learned = algorithm1_team_optimal(env, game.weights(1), game.gamma, config.learner,
                                          reference=team.gains, batch=batch)
    learned.log.to_csv(out / "convergence.csv")
    with stage("incentive learning"):
        follower = learn_follower_q(env, follower_game.weights(2), game.gamma, learned.gains,
                                    config.learner, batch=batch)
        M_learned = incentive_from_H(follower.H, learned.gains, follower_game.weights(2),
                                     incentive_rtol(config.learner))
    follower.log.to_csv(out / "convergence_incentive.csv")
    report.files.update(convergence="convergence.csv",
                        convergence_incentive="convergence_incentive.csv")
    report.learned = {
        "H": learned.H.H, "K1": learned.gains.K1, "K2": learned.gains.K2,
        "Hv": follower.H.H, "M": M_learned,
        "iterations": len(learned.log),
        "incentive_iterations": len(follower.log),
        "samples": len(batch),
        "deltas": {
            "K1": relative_error(learned.gains.K1, team.gains.K1),
            "K2": relative_error(learned.gains.K2, team.gains.K2),
            "P": relative_error(value_from_H(learned.H), team.P),
            "M": frobenius(M_learned - M) / (1 + frobenius(M)),
        },
    }
    return learned.gains, M_learned


def _play(env, config, name, leader, follower, out):
    game = config.game
    with stage(f"rollout '{name}'"):
        traj = rollout(env, leader, follower, game.x0, config.scenario.horizon)
        costs = {
            "J1": evaluate_cost(traj, game.weights(1), game.gamma, "lyapunov_tail"),
            "J2": evaluate_cost(traj, config.follower_game.weights(2), game.gamma, "lyapunov_tail"),
            "J1_truncated": evaluate_cost(traj, game.weights(1), game.gamma),
        }
    path = f"trajectory_{name}.csv"
    write_trajectory(out / path, traj, game.weights(1), config.follower_game.weights(2))
    return costs, path


def _simulate(config, report, out, team, M, K2_star, learned=None):
    """Rolls out the team, attacked and incentive plays (and the learned one when given)."""
    env = PlantHandle.from_game(config.game, config.learner.seed)
    gains = team.gains
    with stage("selfish follower response"):
        K2_selfish = follower_best_response(config.follower_game, IncentivePolicy(gains),
                                            config.solver)
    plays = {
        "team": (LinearLeader(gains.K1), LinearFollower(gains.K2)),
        "attacked": (LinearLeader(gains.K1), LinearFollower(K2_selfish)),
        "incentive": (IncentivePolicy(gains, M), LinearFollower(K2_star)),
    }
    if learned is not None:
        learned_gains, M_learned = learned
        policy = IncentivePolicy(learned_gains, M_learned)
        with stage("follower response to learned incentive"):
            K2_learned = follower_best_response(config.follower_game, policy, config.solver)
        plays["learned_incentive"] = (policy, LinearFollower(K2_learned))

    for name, (leader, follower) in plays.items():
        costs, path = _play(env, config, name, leader, follower, out)
        report.files[f"trajectory_{name}"] = path
        for key, value in costs.items():
            report.costs[f"{key}_{name}"] = value
    report.costs["J1_optimal"] = team.cost(config.game.x0)
    logger.info(f"leader cost: team {report.costs['J1_team']:.6g}, "
                f"attacked {report.costs['J1_attacked']:.6g}, "
                f"incentive {report.costs['J1_incentive']:.6g}")


def run(config, out_dir):
    """
    Runs the scenario's mode and writes its outputs.

    solve     team solution, incentive matrix, alignment check
    learn     solve, then both model-free learners with deltas
    simulate  solve, then team / attacked / incentive rollouts
    compare   learn and simulate, plus a rollout of the learned incentive

    Parameters
    ----------
    config : ScenarioConfig
        Validated scenario.
    out_dir : str or pathlib.Path
        Created when missing.

    Returns
    -------
    RunReport
    """
    start = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mode = config.scenario.mode
    report = RunReport(mode=mode, seed=config.learner.seed, config=config.raw)

    team, M, K2_star = _solve(config, report)
    learned = None
    if mode in ("learn", "compare"):
        learned = _learn(config, report, out, team, M)
    if mode in ("simulate", "compare"):
        _simulate(config, report, out, team, M, K2_star,
                  learned if mode == "compare" else None)

    report.wall_clock = time.perf_counter() - start
    write_report(report, out / REPORT_NAME)
    logger.info(f"{mode} finished in {report.wall_clock:.2f}s, report in {out / REPORT_NAME}")
    return report


def parse_args(argv=None):
    parser = argparse.ArgumentParser(
        description="Incentive Stackelberg games: model-based solution, "
                    "model-free learning and attack simulation")
    commands = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        command = commands.add_parser(mode)
        command.add_argument("--config", required=True, help="YAML scenario file")
        command.add_argument("--out", required=True, help="output directory")
        command.add_argument("--seed", type=int, help="overrides learner.seed")
        command.add_argument("--tol", type=float, help="overrides solver.tol")
        command.add_argument("--max-iters", type=int, help="overrides solver.max_iters")
        command.add_argument("--verbose", action="store_true", help="debug logging")
    return parser.parse_args(argv)


def main(argv=None):
    """
    Parses the command line, runs the scenario and prints any GameError
    as a red [ERROR] line followed by its notes.

    Returns
    -------
    int
        0 on success, otherwise the code of the error in EXIT_CODES.
    """
    args = parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)
    np.set_printoptions(suppress=True)
    try:
        config = load_config(args.config).with_overrides(
            mode=args.mode, seed=args.seed, tol=args.tol, max_iters=args.max_iters)
        run(config, args.out)
    except GameError as err:
        print(Fore.RED + "[ERROR]" + Fore.RESET + f" {type(err).__name__}: {err}",
              file=sys.stderr)
        for note in getattr(err, "__notes__", ()):
            print(f"        {note}", file=sys.stderr)
        return exit_code(err)
    return 0


if __name__ == "__main__":
    sys.tracebacklimit = 0
    sys.exit(main())
