"""
Black-box plant x+ = A x + B1 u + B2 v.

Learners only get a PlantHandle: its dimensions, its seed and step().
Rollouts, cost evaluation and data collection live here too.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.linalg

from programs.game.errors import TailRequiresLinearPolicy, UnstableClosedLoop
from programs.game.game_model import GainPair, IncentivePolicy
from programs.game.utils import (as_matrix, as_vector, read_only, spectral_radius,
                                 symmetrize)

logger = logging.getLogger(__name__)

TAILS = ("truncate", "lyapunov_tail")


class PlantHandle:
    """
    Exact, noiseless linear plant with hidden dynamics.

    Parameters
    ----------
    A, B1, B2 : array_like
        Dynamics, kept private.
    seed : int
        Seed used by data collection when none is given.
    """

    def __init__(self, A, B1, B2, seed=0):
        A = as_matrix(A, "A")
        n = A.shape[0]
        self._A = as_matrix(A, "A", (n, n))
        self._B1 = as_matrix(B1, "B1", (n, None))
        self._B2 = as_matrix(B2, "B2", (n, None))
        for matrix in (self._A, self._B1, self._B2):
            matrix.setflags(write=False)
        self._seed = int(seed)

    @classmethod
    def from_game(cls, game, seed=0):
        return cls(game.A, game.B1, game.B2, seed)

    @property
    def n(self):
        return self._A.shape[0]

    @property
    def m1(self):
        return self._B1.shape[1]

    @property
    def m2(self):
        return self._B2.shape[1]

    @property
    def dims(self):
        return self.n, self.m1, self.m2

    @property
    def seed(self):
        return self._seed

    def step(self, x, u, v):
        x = as_vector(x, "x", self.n)
        u = as_vector(u, "u", self.m1)
        v = as_vector(v, "v", self.m2)
        return self._A @ x + self._B1 @ u + self._B2 @ v

    def _closed_loop(self, gains):
        return self._A - self._B1 @ gains.K1 - self._B2 @ gains.K2

    def __repr__(self):
        return f"PlantHandle(n={self.n}, m1={self.m1}, m2={self.m2}, seed={self.seed})"


def step(h, x, u, v):
    """
    One exact step of the plant.

    Raises
    ------
    DimensionMismatch
        x, u or v has the wrong length.
    """
    return h.step(x, u, v)


@dataclass(frozen=True, eq=False)
class LinearLeader:
    """u = -K1 x; the follower's action is ignored."""

    K1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K1", read_only(as_matrix(self.K1, "K1")))

    def __call__(self, x, v=None):
        return -self.K1 @ x


@dataclass(frozen=True, eq=False)
class LinearFollower:
    """v = -K2 x."""

    K2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K2", read_only(as_matrix(self.K2, "K2")))

    def __call__(self, x):
        return -self.K2 @ x


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    States x_0..x_T and inputs u_0..u_{T-1}, v_0..v_{T-1}, one row per step.

    gains holds the realized linear feedback (u = -K1 x, v = -K2 x) when both
    policies are linear or the leader is an incentive policy over a linear
    follower, and closed_loop the matching A - B1 K1 - B2 K2. Both are None
    otherwise.
    """

    states: np.ndarray
    u_inputs: np.ndarray
    v_inputs: np.ndarray
    gains: GainPair | None = None
    closed_loop: np.ndarray | None = None

    @property
    def T(self):
        return self.u_inputs.shape[0]


def _linear_gains(leader_policy, follower_policy):
    """Gains the two policies realize together, None unless both are linear."""
    if not isinstance(follower_policy, LinearFollower):
        return None
    K2 = follower_policy.K2
    if isinstance(leader_policy, LinearLeader):
        return GainPair(leader_policy.K1, K2)
    if isinstance(leader_policy, IncentivePolicy):
        return GainPair(leader_policy.effective_leader_gain(K2), K2)
    return None


def rollout(h, leader_policy, follower_policy, x0, T):
    """
    Runs the plant for T steps.

    At every step the follower acts first, v_k = follower_policy(x_k), and
    the leader sees it, u_k = leader_policy(x_k, v_k), which is how an
    incentive policy u = u^t + M (v - v^t) is realized.

    Parameters
    ----------
    h : PlantHandle
        The plant.
    leader_policy : callable
        (x, v) -> u.
    follower_policy : callable
        x -> v.
    x0 : array_like
        Initial state.
    T : int
        Number of steps, >= 0.

    Returns
    -------
    Trajectory
    """
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    x = as_vector(x0, "x0", h.n)
    states = np.empty((T + 1, h.n))
    u_inputs = np.empty((T, h.m1))
    v_inputs = np.empty((T, h.m2))
    states[0] = x
    for k in range(T):
        v = as_vector(follower_policy(x), "v", h.m2)
        u = as_vector(leader_policy(x, v), "u", h.m1)
        x = h.step(x, u, v)
        u_inputs[k], v_inputs[k] = u, v
        states[k + 1] = x

    gains = _linear_gains(leader_policy, follower_policy)
    closed_loop = None
    if gains is not None:
        gains.check(h)
        closed_loop = h._closed_loop(gains)
    return Trajectory(states, u_inputs, v_inputs, gains, closed_loop)


def stage_costs(traj, weights):
    """Per-step costs x'Qx + u'R_u u + v'R_v v, length T."""
    Q, R_u, R_v = weights
    x = traj.states[:-1]
    return (np.einsum("ki,ij,kj->k", x, Q, x)
            + np.einsum("ki,ij,kj->k", traj.u_inputs, R_u, traj.u_inputs)
            + np.einsum("ki,ij,kj->k", traj.v_inputs, R_v, traj.v_inputs))


def tail_value(traj, weights, gamma):
    """
    Value matrix P of the trajectory's realized linear feedback,
    P = W + gamma A_cl' P A_cl, from scipy's discrete Lyapunov solver.
    The cost after the last recorded state x_T is x_T' P x_T.

    Parameters
    ----------
    traj : Trajectory
        Rollout of linear (or incentive over linear) policies.
    weights : CostWeights
        (Q, R_u, R_v) of the player being scored.
    gamma : float
        Discount.

    Returns
    -------
    P(n, n) : numpy.ndarray

    Raises
    ------
    TailRequiresLinearPolicy
        The rollout has no fixed linear feedback.
    UnstableClosedLoop
        sqrt(gamma) A_cl is not stable, the tail is infinite.
    """
    if traj.gains is None:
        raise TailRequiresLinearPolicy(
            "a Lyapunov tail needs linear (or incentive over linear) policies")
    radius = np.sqrt(gamma) * spectral_radius(traj.closed_loop)
    if radius >= 1:
        raise UnstableClosedLoop(radius)
    Q, R_u, R_v = weights
    K1, K2 = traj.gains.K1, traj.gains.K2
    W = Q + K1.T @ R_u @ K1 + K2.T @ R_v @ K2
    P = scipy.linalg.solve_discrete_lyapunov(np.sqrt(gamma) * traj.closed_loop.T, W)
    return symmetrize(P)


def evaluate_cost(traj, weights, gamma, tail="truncate"):
    """
    Discounted cost of a trajectory.

    Parameters
    ----------
    traj : Trajectory
        The rollout.
    weights : CostWeights
        (Q, R_u, R_v) of the paying player.
    gamma : float
        Discount.
    tail : str
        "truncate" sums gamma^k c_k for k < T. "lyapunov_tail" adds
        gamma^T x_T' P x_T, P the exact value of the realized linear policy.

    Returns
    -------
    float

    Raises
    ------
    TailRequiresLinearPolicy
        "lyapunov_tail" on a rollout without linear feedback.
    """
    if tail not in TAILS:
        raise ValueError(f"tail must be one of {TAILS}, got {tail!r}")
    discounts = gamma ** np.arange(traj.T)
    cost = float(discounts @ stage_costs(traj, weights))
    if tail == "lyapunov_tail":
        x_T = traj.states[-1]
        cost += float(gamma ** traj.T * x_T @ tail_value(traj, weights, gamma) @ x_T)
    return cost


def trajectory_frame(traj, leader_weights, follower_weights):
    """
    One row per step k < T with the state, both inputs and both players'
    stage costs.
    """
    columns = {"k": np.arange(traj.T)}
    for name, values in (("x", traj.states[:-1]), ("u", traj.u_inputs), ("v", traj.v_inputs)):
        for i in range(values.shape[1]):
            columns[f"{name}_{i}"] = values[:, i]
    columns["stage_cost_leader"] = stage_costs(traj, leader_weights)
    columns["stage_cost_follower"] = stage_costs(traj, follower_weights)
    return pd.DataFrame(columns)


def write_trajectory(path, traj, leader_weights, follower_weights):
    """
    We use pandas to write the trajectory table as CSV, 17 significant
    digits per float.

    Parameters
    ----------
    path : str or pathlib.Path
        Output file.
    traj : Trajectory
        The rollout.
    leader_weights, follower_weights : CostWeights
        Weights of the two stage cost columns.
    """
    trajectory_frame(traj, leader_weights, follower_weights).to_csv(
        path, index=False, float_format="%.17g")
    logger.debug(f"trajectory written to {path}")


@dataclass(frozen=True, eq=False)
class DataBatch:
    """
    Transitions (x_k, u_hat_k, v_hat_k, x_next_k), one row per tuple.
    """

    X: np.ndarray
    U: np.ndarray
    V: np.ndarray
    X_next: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        for name in ("X", "U", "V", "X_next"):
            object.__setattr__(self, name, read_only(getattr(self, name)))

    def __len__(self):
        return self.X.shape[0]

    @property
    def tuples(self):
        return list(zip(self.X, self.U, self.V, self.X_next))


def sample_ball(rng, n, radius):
    """Uniform sample from the n-dimensional ball of the given radius."""
    direction = rng.standard_normal(n)
    norm = np.linalg.norm(direction)
    if norm == 0:
        return np.zeros(n)
    return radius * rng.uniform() ** (1 / n) * direction / norm


def collect_batch(h, gains, sigma1, sigma2, N, radius=1.0, seed=None):
    """
    N independent one-step transitions under exploration noise.

    Tuple i draws from numpy.random.default_rng([seed, i]): x uniform in the
    ball, u_hat = -K1 x + e1, v_hat = -K2 x + e2 with e ~ Normal(0, sigma^2 I),
    x_next = step(x, u_hat, v_hat).

    Parameters
    ----------
    h : PlantHandle
        The plant.
    gains : GainPair
        Behavior gains.
    sigma1, sigma2 : float
        Noise standard deviations of u and v.
    N : int
        Number of tuples, >= 1.
    radius : float
        Radius of the state ball.
    seed : int, optional
        Defaults to the plant's seed.

    Returns
    -------
    DataBatch
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if sigma1 < 0 or sigma2 < 0:
        raise ValueError("noise standard deviations must be >= 0")
    gains.check(h)
    seed = h.seed if seed is None else int(seed)
    X = np.empty((N, h.n))
    U = np.empty((N, h.m1))
    V = np.empty((N, h.m2))
    for i in range(N):
        rng = np.random.default_rng([seed, i])
        X[i] = sample_ball(rng, h.n, radius)
        U[i] = gains.leader_action(X[i]) + sigma1 * rng.standard_normal(h.m1)
        V[i] = gains.follower_action(X[i]) + sigma2 * rng.standard_normal(h.m2)
    X_next = np.array([h.step(x, u, v) for x, u, v in zip(X, U, V)]).reshape(N, h.n)
    logger.debug(f"collected {N} tuples (seed {seed})")
    return DataBatch(X, U, V, X_next, seed)


def excitation_batch(h, states, u, v):
    """
    Transitions for caller-chosen (x, u, v) rows, without noise.
    """
    X = as_matrix(states, "states", (None, h.n))
    U = as_matrix(u, "u", (X.shape[0], h.m1))
    V = as_matrix(v, "v", (X.shape[0], h.m2))
    X_next = np.array([h.step(*row) for row in zip(X, U, V)]).reshape(X.shape[0], h.n)
    return DataBatch(X, U, V, X_next)
