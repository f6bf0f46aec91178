"""
Scenario files.

A scenario is a YAML mapping with four sections:

    game:        A, B1, B2, Q1, Q2, R11, R12, R21, R22 (row-major nested
                 lists or scalars), gamma, optional x0
    learner:     LearnerConfig fields, all optional
    solver:      SolverConfig fields, all optional
    scenario:    mode (solve | learn | simulate | compare), horizon,
                 optional attacker_weights {Q2, R21, R22}

Unknown keys are rejected everywhere.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, fields

import numpy as np
import yaml

from programs.analysis.model_based import SolverConfig
from programs.game.errors import (ConfigError, GameError, ModelError, ParseError,
                                  UnknownField, ValidationError)
from programs.game.game_model import CostWeights, GameSpec, validate_game
from programs.q_learning.adp_learner import LearnerConfig

logger = logging.getLogger(__name__)

MODES = ("solve", "learn", "simulate", "compare")
MATRIX_FIELDS = ("A", "B1", "B2", "Q1", "Q2", "R11", "R12", "R21", "R22")
GAME_FIELDS = MATRIX_FIELDS + ("gamma", "x0")
ATTACKER_FIELDS = ("Q2", "R21", "R22")
SCENARIO_FIELDS = ("mode", "horizon", "attacker_weights")
INTEGER_FIELDS = {"max_iters", "max_policy_iters", "N", "seed"}
SECTIONS = {
    "game": GAME_FIELDS,
    "learner": tuple(f.name for f in fields(LearnerConfig)),
    "solver": tuple(f.name for f in fields(SolverConfig)),
    "scenario": SCENARIO_FIELDS,
}


@dataclass(frozen=True, eq=False)
class ScenarioSettings:
    mode: str = "solve"
    horizon: int = 200
    attacker_weights: CostWeights | None = None


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """
    A validated scenario.

    Attributes
    ----------
    game : ValidatedGame
        The game, with the legitimate follower.
    learner : LearnerConfig
        Model-free learner parameters.
    solver : SolverConfig
        Stopping rule of the model-based solvers.
    scenario : ScenarioSettings
        Mode, rollout horizon and attacker weights.
    raw : dict
        The mapping this config was parsed from, embedded in reports.
    """

    game: object
    learner: LearnerConfig
    solver: SolverConfig
    scenario: ScenarioSettings
    raw: dict

    @property
    def follower_game(self):
        """The game as the (possibly compromised) follower plays it."""
        weights = self.scenario.attacker_weights
        return self.game if weights is None else self.game.with_follower_weights(weights)

    def with_overrides(self, mode=None, seed=None, tol=None, max_iters=None):
        """
        Returns a config re-parsed with command line overrides applied.
        """
        raw = copy.deepcopy(self.raw)
        for section, key, value in (("scenario", "mode", mode), ("learner", "seed", seed),
                                    ("solver", "tol", tol), ("solver", "max_iters", max_iters)):
            if value is not None:
                raw.setdefault(section, {})[key] = value
        return parse_config(raw)


def _invalid(message):
    return ValidationError(ModelError(message))


def _number(value, name):
    """
    Checks a scalar scenario value and returns it as an int or float.
    Booleans, non-numeric strings and non-finite values are rejected.
    """
    if isinstance(value, bool):
        raise _invalid(f"{name} must be a number, got {value!r}")
    if isinstance(value, str):
        # YAML 1.1 reads exponent literals such as 1e-8 as strings
        try:
            value = float(value)
        except ValueError:
            raise _invalid(f"{name} must be a number, got {value!r}") from None
    if not isinstance(value, (int, float)):
        raise _invalid(f"{name} must be a number, got {type(value).__name__}")
    if not np.isfinite(value):
        raise _invalid(f"{name} must be finite, got {value!r}")
    return value


def _integer(value, name):
    value = _number(value, name)
    if int(value) != value:
        raise _invalid(f"{name} must be an integer, got {value!r}")
    return int(value)


def _matrix(value, name):
    if isinstance(value, list):
        rows = [_matrix(row, f"{name}[{i}]") for i, row in enumerate(value)]
        try:
            return np.array(rows, dtype=float)
        except ValueError:
            raise _invalid(f"{name} has rows of different lengths") from None
    return np.array(_number(value, name), dtype=float)


def _section(data, name, allowed):
    section = data.get(name, {})
    if section is None:
        section = {}
    if not isinstance(section, dict):
        raise ParseError(f"section '{name}' must be a mapping")
    for key in section:
        if key not in allowed:
            raise UnknownField(key, name)
    return section


def _parse_game(section):
    missing = [key for key in MATRIX_FIELDS + ("gamma",) if key not in section]
    if missing:
        raise _invalid(f"game is missing {', '.join(missing)}")
    matrices = {key: _matrix(section[key], f"game.{key}") for key in MATRIX_FIELDS}
    x0 = section.get("x0")
    spec = GameSpec(**matrices, gamma=_number(section["gamma"], "game.gamma"),
                    x0=None if x0 is None else _matrix(x0, "game.x0"))
    return validate_game(spec)


def _parse_options(section, cls, name):
    values = {}
    for key, value in section.items():
        if value is None:
            continue
        convert = _integer if key in INTEGER_FIELDS else _number
        values[key] = convert(value, f"{name}.{key}")
    return cls(**values)


def _parse_scenario(section, game):
    mode = section.get("mode", "solve")
    if mode not in MODES:
        raise _invalid(f"scenario.mode must be one of {', '.join(MODES)}, got {mode!r}")
    horizon = _integer(section.get("horizon", 200), "scenario.horizon")
    if horizon < 0:
        raise _invalid(f"scenario.horizon must be >= 0, got {horizon}")
    attacker = section.get("attacker_weights")
    if attacker is not None:
        if not isinstance(attacker, dict):
            raise ParseError("scenario.attacker_weights must be a mapping")
        for key in attacker:
            if key not in ATTACKER_FIELDS:
                raise UnknownField(key, "scenario.attacker_weights")
        attacker = CostWeights(*(
            _matrix(attacker[key], f"attacker_weights.{key}") if key in attacker
            else game.weights(2)[i] for i, key in enumerate(ATTACKER_FIELDS)))
        game.with_follower_weights(attacker)
    return ScenarioSettings(mode=mode, horizon=horizon, attacker_weights=attacker)


def parse_config(data):
    """
    Builds a ScenarioConfig from an already loaded mapping.

    Raises
    ------
    ParseError
        The document is not a mapping of mappings.
    UnknownField
        A key is not part of the schema.
    ValidationError
        A value is missing, not numeric, or violates the game's data model.
    """
    if not isinstance(data, dict):
        raise ParseError("a scenario must be a mapping with a 'game' section")
    for key in data:
        if key not in SECTIONS:
            raise UnknownField(key)
    sections = {name: _section(data, name, allowed) for name, allowed in SECTIONS.items()}
    try:
        game = _parse_game(sections["game"])
        learner = _parse_options(sections["learner"], LearnerConfig, "learner")
        solver = _parse_options(sections["solver"], SolverConfig, "solver")
        scenario = _parse_scenario(sections["scenario"], game)
    except ConfigError:
        raise
    except (GameError, ValueError, TypeError) as err:
        raise ValidationError(err) from err
    return ScenarioConfig(game=game, learner=learner, solver=solver,
                          scenario=scenario, raw=copy.deepcopy(data))


def load_config(path):
    """
    Reads and validates a scenario file.

    Parameters
    ----------
    path : str or pathlib.Path
        YAML scenario.

    Returns
    -------
    ScenarioConfig

    Raises
    ------
    ParseError
        Malformed YAML, with the line and column of the problem.
    UnknownField, ValidationError
        See parse_config.
    """
    try:
        with open(path) as file:
            data = yaml.safe_load(file)
    except yaml.MarkedYAMLError as err:
        mark = err.problem_mark or err.context_mark
        line, column = (mark.line + 1, mark.column + 1) if mark else (0, 0)
        raise ParseError(err.problem or str(err), line, column) from err
    except yaml.YAMLError as err:
        raise ParseError(str(err)) from err
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from err
    logger.debug(f"loaded scenario {path}")
    return parse_config(data)
