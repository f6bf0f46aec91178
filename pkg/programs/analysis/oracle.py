"""
Brute-force references for the solvers.

finite_horizon_dp eliminates the follower's input and then the leader's
input one after the other (two nested minimizations) instead of inverting
the joint 2x2 block, so its agreement with model_based is not circular.
scalar_gain_search scans gains of one-dimensional games and scores each
with the exact discounted geometric-series cost.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from programs.game.errors import DimensionMismatch, EmptyGrid
from programs.game.game_model import GainPair, IncentivePolicy
from programs.game.utils import solve, symmetrize


@dataclass(frozen=True, eq=False)
class DPTrace:
    """
    Backward iterates of the joint problem.

    Attributes
    ----------
    horizon : int
        Number of backups performed.
    P_sequence : list of numpy.ndarray
        P_0 = 0, P_1, ..., P_horizon.
    final_gains : GainPair
        Minimizing gains of one more backup of P_horizon.
    """

    horizon: int
    P_sequence: list
    final_gains: GainPair

    @property
    def P(self):
        return self.P_sequence[-1]


def _backup(P, game, weights):
    """
    One backward step of the joint problem.
    We build W = blockdiag(Q, R_u, R_v) + g [A B1 B2]' P [A B1 B2],
    minimize over v for fixed (x, u), then over u on the reduced form,
    and read the follower gain back from the v minimizer.

    Parameters
    ----------
    P(n, n) : numpy.ndarray
        Value matrix of the remaining horizon.
    game : ValidatedGame
        The game.
    weights : CostWeights
        (Q, R_u, R_v).

    Returns
    -------
    tuple
        (P_next, GainPair) for a horizon one step longer.
    """
    n, m1 = game.n, game.m1
    ABB = np.hstack([game.A, game.B1, game.B2])
    W = scipy.linalg.block_diag(*weights) + game.gamma * ABB.T @ P @ ABB

    x, u = slice(0, n), slice(n, n + m1)
    xu, v = slice(0, n + m1), slice(n + m1, None)
    # v first: v = -W_vv^-1 (W_vx x + W_vu u)
    W_xu = W[xu, xu] - W[xu, v] @ solve(W[v, v], W[v, xu], "W_vv")
    # then u on the reduced form
    K1 = solve(W_xu[u, u], W_xu[u, x], "reduced W_uu")
    P_next = W_xu[x, x] - W_xu[x, u] @ K1
    K2 = solve(W[v, v], W[v, x] - W[v, u] @ K1, "W_vv")
    return symmetrize(P_next), GainPair(K1, K2)


def finite_horizon_dp(game, weights, horizon):
    """
    Discounted backward recursion of the joint minimization over (u, v),
    started from P_0 = 0.

    Parameters
    ----------
    game : ValidatedGame
        The game.
    weights : CostWeights
        (Q, R_u, R_v) minimized jointly.
    horizon : int
        Number of backups, >= 0.

    Returns
    -------
    DPTrace
    """
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    P = np.zeros((game.n, game.n))
    sequence = [P]
    for _ in range(horizon):
        P, _ = _backup(P, game, weights)
        sequence.append(P)
    _, gains = _backup(P, game, weights)
    return DPTrace(horizon=horizon, P_sequence=sequence, final_gains=gains)


def _scalar(matrix):
    return float(np.asarray(matrix, dtype=float).reshape(-1)[0])


def scalar_gain_search(game, objective, fixed_policy, grid):
    """
    Grid search of one player's scalar gain against a fixed opponent.

    Parameters
    ----------
    game : ValidatedGame
        A game with n = m1 = m2 = 1.
    objective : str
        "leader" searches u = -k x against v = -k2 x (fixed_policy = k2),
        scored with the leader's weights. "follower" searches v = -k x
        against either a plain leader u = -k1 x (fixed_policy = k1) or an
        IncentivePolicy, scored with the follower's weights.
    fixed_policy : float or IncentivePolicy
        The opponent.
    grid : tuple
        (lo, hi, step), both ends included.

    Returns
    -------
    tuple
        (k*, J*) where J* = p x0^2 is the best cost; unstable gains
        score +inf.
    """
    if (game.n, game.m1, game.m2) != (1, 1, 1):
        raise DimensionMismatch("scalar_gain_search needs n = m1 = m2 = 1")
    lo, hi, step = grid
    if not step > 0 or hi < lo:
        raise EmptyGrid(f"grid ({lo}, {hi}, {step}) has no points")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    ks = lo + step * np.arange(count)

    a, b1, b2 = _scalar(game.A), _scalar(game.B1), _scalar(game.B2)
    if objective == "leader":
        q, r_u, r_v = (_scalar(w) for w in game.weights(1))
        k_other = _scalar(fixed_policy)
        k1, k2 = ks, np.full_like(ks, k_other)
    elif objective == "follower":
        q, r_u, r_v = (_scalar(w) for w in game.weights(2))
        k2 = ks
        if isinstance(fixed_policy, IncentivePolicy):
            K1t = _scalar(fixed_policy.gains.K1)
            K2t = _scalar(fixed_policy.gains.K2)
            k1 = K1t - _scalar(fixed_policy.M) * (K2t - ks)
        else:
            k1 = np.full_like(ks, _scalar(fixed_policy))
    else:
        raise ValueError(f"objective must be 'leader' or 'follower', got {objective!r}")

    a_cl = a - b1 * k1 - b2 * k2
    stage = q + r_u * k1 ** 2 + r_v * k2 ** 2
    decay = game.gamma * a_cl ** 2
    x0 = _scalar(game.x0)
    with np.errstate(divide="ignore"):
        costs = np.where(decay < 1, stage * x0 ** 2 / np.where(decay < 1, 1 - decay, 1), np.inf)
    best = int(np.argmin(costs))
    return float(ks[best]), float(costs[best])
