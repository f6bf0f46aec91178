"""
Data model of the two-player incentive Stackelberg game

    x_{k+1} = A x_k + B1 u_k + B2 v_k

where player 1 (the leader) applies u and player 2 (the follower) applies v.
Each player i pays, discounted by gamma,

    c_i(x, u, v) = x' Q_i x + u' R_i1 u + v' R_i2 v.

Gains follow one convention everywhere: u = -K1 x, v = -K2 x.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from programs.game.errors import (DimensionMismatch, DiscountOutOfRange,
                                  NotPositiveDefinite, NotSymmetric)
from programs.game.utils import as_matrix, as_vector, min_eigenvalue, read_only, symmetrize

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10


class CostWeights(NamedTuple):
    """Quadratic weights (Q over x, R_u over u, R_v over v) of one player."""

    Q: np.ndarray
    R_u: np.ndarray
    R_v: np.ndarray


@dataclass(frozen=True, eq=False)
class GameSpec:
    """
    Raw game description, as typed in a scenario file.

    Matrices may be any array_like; validate_game turns them into
    read-only float arrays. x0 defaults to the all-ones state.
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    R11: np.ndarray
    R12: np.ndarray
    R21: np.ndarray
    R22: np.ndarray
    gamma: float
    x0: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class ValidatedGame:
    """
    A GameSpec whose invariants have been checked.

    Attributes
    ----------
    spec : GameSpec
        Symmetrized, read-only copy of the input.
    n, m1, m2 : int
        State, leader input and follower input dimensions.
    """

    spec: GameSpec
    n: int
    m1: int
    m2: int

    @property
    def l(self):
        return self.n + self.m1 + self.m2

    @property
    def A(self):
        return self.spec.A

    @property
    def B1(self):
        return self.spec.B1

    @property
    def B2(self):
        return self.spec.B2

    @property
    def gamma(self):
        return self.spec.gamma

    @property
    def x0(self):
        return self.spec.x0

    def weights(self, player):
        """
        Returns the CostWeights of player 1 (leader) or 2 (follower).
        """
        if player == 1:
            return CostWeights(self.spec.Q1, self.spec.R11, self.spec.R12)
        if player == 2:
            return CostWeights(self.spec.Q2, self.spec.R21, self.spec.R22)
        raise ValueError(f"player must be 1 or 2, got {player}")

    def with_follower_weights(self, weights):
        """
        Returns a validated copy where the follower's cost is replaced,
        which is how a compromised follower is modelled.

        Parameters
        ----------
        weights : CostWeights or tuple
            (Q2, R21, R22) of the new follower.
        """
        Q2, R21, R22 = weights
        return validate_game(replace(self.spec, Q2=Q2, R21=R21, R22=R22))


@dataclass(frozen=True, eq=False)
class GainPair:
    """State feedback gains, u = -K1 x and v = -K2 x."""

    K1: np.ndarray
    K2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K1", read_only(as_matrix(self.K1, "K1")))
        object.__setattr__(self, "K2", read_only(as_matrix(self.K2, "K2")))
        if self.K1.shape[1] != self.K2.shape[1]:
            raise DimensionMismatch(
                f"K1 {self.K1.shape} and K2 {self.K2.shape} act on "
                "different state dimensions")

    def check(self, game):
        """
        Checks that K1 is (m1, n) and K2 is (m2, n) for game, a
        ValidatedGame or a PlantHandle. Returns the gains for chaining.
        """
        if self.K1.shape != (game.m1, game.n) or self.K2.shape != (game.m2, game.n):
            raise DimensionMismatch(
                f"gains K1 {self.K1.shape}, K2 {self.K2.shape} do not match "
                f"n={game.n}, m1={game.m1}, m2={game.m2}")
        return self

    def leader_action(self, x):
        return -self.K1 @ x

    def follower_action(self, x):
        return -self.K2 @ x

    def closed_loop(self, game):
        return game.A - game.B1 @ self.K1 - game.B2 @ self.K2

    @classmethod
    def zeros(cls, game):
        return cls(np.zeros((game.m1, game.n)), np.zeros((game.m2, game.n)))


@dataclass(frozen=True, eq=False)
class IncentivePolicy:
    """
    Leader strategy u = u^t + M (v - v^t) built on team gains.

    Calling the policy with the state and the follower's concurrent action
    returns the leader's action u = -K1 x + M (v + K2 x).
    """

    gains: GainPair
    M: np.ndarray = field(default=None)

    def __post_init__(self):
        M = self.M
        if M is None:
            M = np.zeros((self.gains.K1.shape[0], self.gains.K2.shape[0]))
        M = as_matrix(M, "M", (self.gains.K1.shape[0], self.gains.K2.shape[0]))
        object.__setattr__(self, "M", read_only(M))

    def __call__(self, x, v):
        x = np.asarray(x, dtype=float)
        return -self.gains.K1 @ x + self.M @ (np.asarray(v, dtype=float) + self.gains.K2 @ x)

    def effective_leader_gain(self, K2_played):
        """
        Leader gain actually realized when the follower plays v = -K2_played x.
        """
        return self.gains.K1 - self.M @ (self.gains.K2 - K2_played)


def _check_symmetric(name, matrix):
    scale = max(1.0, float(np.max(np.abs(matrix)))) if matrix.size else 1.0
    if matrix.size and float(np.max(np.abs(matrix - matrix.T))) > SYMMETRY_TOL * scale:
        raise NotSymmetric(name)
    return symmetrize(matrix)


def validate_game(spec):
    """
    Checks dimensions, symmetry, definiteness and the discount of a game.

    Parameters
    ----------
    spec : GameSpec or ValidatedGame
        Game to validate; a ValidatedGame is re-validated from its spec.

    Returns
    -------
    ValidatedGame
        Wrapper exposing n, m1, m2 and l.

    Raises
    ------
    DimensionMismatch, NotSymmetric, NotPositiveDefinite, DiscountOutOfRange
    """
    if isinstance(spec, ValidatedGame):
        spec = spec.spec
    A = as_matrix(spec.A, "A")
    n = A.shape[0]
    A = as_matrix(A, "A", (n, n))
    B1 = as_matrix(spec.B1, "B1", (n, None))
    B2 = as_matrix(spec.B2, "B2", (n, None))
    m1, m2 = B1.shape[1], B2.shape[1]

    weights = {}
    for name, size in (("Q1", n), ("Q2", n)):
        matrix = _check_symmetric(name, as_matrix(getattr(spec, name), name, (size, size)))
        if min_eigenvalue(matrix) < -PSD_TOL:
            raise NotPositiveDefinite(name, semi=True)
        weights[name] = matrix
    for name, size in (("R11", m1), ("R12", m2), ("R21", m1), ("R22", m2)):
        matrix = _check_symmetric(name, as_matrix(getattr(spec, name), name, (size, size)))
        if min_eigenvalue(matrix) <= PSD_TOL:
            raise NotPositiveDefinite(name)
        weights[name] = matrix

    gamma = spec.gamma
    if isinstance(gamma, bool) or not np.isfinite(float(gamma)) or not 0 < float(gamma) < 1:
        raise DiscountOutOfRange(gamma)

    x0 = np.ones(n) if spec.x0 is None else as_vector(spec.x0, "x0", n)

    frozen = GameSpec(A=read_only(A), B1=read_only(B1), B2=read_only(B2),
                      gamma=float(gamma), x0=read_only(x0),
                      **{name: read_only(m) for name, m in weights.items()})
    return ValidatedGame(spec=frozen, n=n, m1=m1, m2=m2)


def one_step_cost(game, player, x, u, v):
    """
    Stage cost c_i(x, u, v) = x'Q_i x + u'R_i1 u + v'R_i2 v of a player.

    Parameters
    ----------
    game : ValidatedGame
        The game.
    player : int
        1 for the leader, 2 for the follower.
    x, u, v : array_like
        State, leader input and follower input.

    Returns
    -------
    float
        Nonnegative stage cost.
    """
    x = as_vector(x, "x", game.n)
    u = as_vector(u, "u", game.m1)
    v = as_vector(v, "v", game.m2)
    return quadratic_cost(game.weights(player), x, u, v)


def quadratic_cost(weights, x, u, v):
    """Stage cost x'Qx + u'R_u u + v'R_v v under one player's weights."""
    Q, R_u, R_v = weights
    return float(x @ Q @ x + u @ R_u @ u + v @ R_v @ v)
