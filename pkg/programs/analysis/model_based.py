"""
Ground-truth solvers for a game whose dynamics (A, B1, B2) are known.

- solve_team_optimal: joint minimization of the leader's cost over both
  inputs, by value iteration from P = 0.
- solve_follower_value / policy_value: discounted Lyapunov evaluation of
  linear policies.
- incentive_matrix: the M making the team gain K2 the follower's best
  response to u = u^t + M (v - v^t).
- follower_best_response: the follower's LQR problem under an incentive
  policy, used to verify alignment.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from programs.game.errors import (IncentiveInfeasible, MaxIterationsExceeded,
                                  UnstableClosedLoop)
from programs.game.game_model import GainPair, IncentivePolicy
from programs.game.utils import frobenius, solve, spectral_radius, symmetrize

logger = logging.getLogger(__name__)

INCENTIVE_RTOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    """
    Stopping rule shared by every iterative solver: stop once the
    Frobenius norm of the last update is <= tol, fail after max_iters.
    """

    tol: float = 1e-10
    max_iters: int = 10000

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be an integer >= 1, got {self.max_iters}")


@dataclass(frozen=True, eq=False)
class TeamSolution:
    """
    Team-optimal solution of the joint problem.

    Attributes
    ----------
    P : numpy.ndarray
        Leader's team value matrix, J1^t = x0' P x0.
    gains : GainPair
        Team gains (K1, K2).
    iterations : int
        Value iterations until convergence.
    residual : float
        Frobenius norm of the team ARE defect at (P, gains).
    """

    P: np.ndarray
    gains: GainPair
    iterations: int
    residual: float

    def cost(self, x0):
        return float(x0 @ self.P @ x0)


@dataclass(frozen=True, eq=False)
class FollowerValue:
    Pv: np.ndarray
    residual: float


def _stacked_inputs(game, weights):
    B = np.hstack([game.B1, game.B2])
    R = scipy.linalg.block_diag(weights[1], weights[2])
    return B, R


def riccati_step(P, game, weights):
    """
    One step of the joint value iteration

        P+ = Q + g A'PA - g^2 A'PB (R + g B'PB)^-1 B'PA

    with B = [B1 B2] and R = blockdiag(R_u, R_v).

    Parameters
    ----------
    P : numpy.ndarray
        Current value matrix.
    game : ValidatedGame
        The game (dynamics and discount).
    weights : CostWeights
        (Q, R_u, R_v) of the minimizing team.

    Returns
    -------
    numpy.ndarray
        Next value matrix.
    """
    g = game.gamma
    A = game.A
    B, R = _stacked_inputs(game, weights)
    BtP = B.T @ P
    stacked_gain = solve(R + g * BtP @ B, g * BtP @ A, "R + g B'PB")
    return symmetrize(weights[0] + g * A.T @ P @ A - g * A.T @ P @ B @ stacked_gain)


def iterate_value(game, weights):
    """
    Yields the value iterates P_1, P_2, ... of the joint problem started
    from P_0 = 0 (P_0 itself is not yielded).
    """
    P = np.zeros((game.n, game.n))
    while True:
        P = riccati_step(P, game, weights)
        yield P


def gains_from_value(P, game, weights):
    """
    Team gains implied by a value matrix.

    Each gain eliminates the other player's stationarity condition first:

        F_i = B_i' P [I - g B_j (R_j + g B_j' P B_j)^-1 B_j' P]
        K_i = g (R_i + g F_i B_i)^-1 F_i A

    Parameters
    ----------
    P : numpy.ndarray
        Symmetric value matrix (n x n).
    game : ValidatedGame
        The game.
    weights : tuple
        (R_a, R_b), input weights over u and over v.

    Returns
    -------
    GainPair
        Gains with u = -K1 x, v = -K2 x.
    """
    R_a, R_b = weights
    g = game.gamma
    A, B1, B2 = game.A, game.B1, game.B2
    identity = np.eye(game.n)

    def eliminate(B_i, B_j, R_j):
        inner = solve(R_j + g * B_j.T @ P @ B_j, B_j.T @ P, "R_j + g B_j'PB_j")
        return B_i.T @ P @ (identity - g * B_j @ inner)

    F1 = eliminate(B1, B2, R_b)
    F2 = eliminate(B2, B1, R_a)
    K1 = g * solve(R_a + g * F1 @ B1, F1 @ A, "R_a + g F1 B1")
    K2 = g * solve(R_b + g * F2 @ B2, F2 @ A, "R_b + g F2 B2")
    return GainPair(K1, K2)


def best_single_gain(P, game, R, player, other_gain):
    """
    Person-by-person gain of one player when the other plays other_gain:
    K1 = g (R + g B1'PB1)^-1 B1'P (A - B2 K2), and symmetrically for K2.
    """
    g = game.gamma
    B_own, B_other = (game.B1, game.B2) if player == 1 else (game.B2, game.B1)
    A_other = game.A - B_other @ other_gain
    return g * solve(R + g * B_own.T @ P @ B_own, B_own.T @ P @ A_other,
                     "R + g B'PB")


def lyapunov_residual(P, gains, game, weights):
    """
    Frobenius norm of P - (Q + g A_cl'PA_cl + K1'R_u K1 + K2'R_v K2).
    """
    Q, R_u, R_v = weights
    A_cl = gains.closed_loop(game)
    K1, K2 = gains.K1, gains.K2
    rhs = Q + game.gamma * A_cl.T @ P @ A_cl + K1.T @ R_u @ K1 + K2.T @ R_v @ K2
    return frobenius(P - rhs)


def solve_team_optimal(game, cfg=SolverConfig(), weights=None):
    """
    Solves the joint optimization of the leader's cost over both inputs.

    Value iteration from P_0 = 0 until ||P_{i+1} - P_i||_F <= cfg.tol, then
    gains from gains_from_value.

    Parameters
    ----------
    game : ValidatedGame
        The game.
    cfg : SolverConfig
        Stopping rule.
    weights : CostWeights, optional
        Team cost, defaults to the leader's (Q1, R11, R12).

    Returns
    -------
    TeamSolution

    Raises
    ------
    MaxIterationsExceeded
        The iteration did not settle (not stabilizable, or gamma too large).
    UnstableClosedLoop
        The team gains do not stabilize the discounted closed loop.
    """
    weights = game.weights(1) if weights is None else weights
    P = np.zeros((game.n, game.n))
    delta = np.inf
    for iteration, P_next in enumerate(iterate_value(game, weights), start=1):
        delta = frobenius(P_next - P)
        P = P_next
        if not np.all(np.isfinite(P)):
            raise MaxIterationsExceeded(iteration, delta)
        if delta <= cfg.tol:
            break
        if iteration >= cfg.max_iters:
            raise MaxIterationsExceeded(iteration, delta)

    gains = gains_from_value(P, game, weights[1:])
    radius = np.sqrt(game.gamma) * spectral_radius(gains.closed_loop(game))
    if radius >= 1:
        raise UnstableClosedLoop(radius)
    residual = lyapunov_residual(P, gains, game, weights)
    logger.info(f"team solution after {iteration} iterations, ARE residual {residual:.2e}")
    return TeamSolution(P=P, gains=gains, iterations=iteration, residual=residual)


def policy_value(game, gains, weights, cfg=SolverConfig()):
    """
    Discounted value matrix of the linear policy pair (u = -K1 x, v = -K2 x)
    under the cost weights (Q, R_u, R_v):

        P = Q + K1'R_u K1 + K2'R_v K2 + g A_cl' P A_cl.

    Fixed-point iteration from zero; when it does not settle within
    cfg.max_iters the vectorized n^2 x n^2 linear system is solved instead.

    Returns
    -------
    tuple
        (P, residual).

    Raises
    ------
    UnstableClosedLoop
        sqrt(g) * rho(A_cl) >= 1, the cost is infinite.
    """
    g = game.gamma
    Q, R_u, R_v = weights
    A_cl = gains.closed_loop(game)
    radius = np.sqrt(g) * spectral_radius(A_cl)
    if radius >= 1:
        raise UnstableClosedLoop(radius)
    W = Q + gains.K1.T @ R_u @ gains.K1 + gains.K2.T @ R_v @ gains.K2

    P = np.zeros((game.n, game.n))
    for _ in range(cfg.max_iters):
        P_next = W + g * A_cl.T @ P @ A_cl
        delta = frobenius(P_next - P)
        P = P_next
        if delta <= cfg.tol:
            break
    else:
        logger.debug("policy evaluation did not settle, solving the vectorized equation")
        n = game.n
        lhs = np.eye(n * n) - g * np.kron(A_cl.T, A_cl.T)
        P = solve(lhs, W.reshape(-1), "I - g kron(A_cl', A_cl')").reshape(n, n)
    P = symmetrize(P)
    return P, frobenius(P - (W + g * A_cl.T @ P @ A_cl))


def solve_follower_value(game, gains, cfg=SolverConfig()):
    """
    Follower's value P_v of the team policy pair, with the follower's weights.
    """
    gains.check(game)
    Pv, residual = policy_value(game, gains, game.weights(2), cfg)
    return FollowerValue(Pv=Pv, residual=residual)


def incentive_matrix(game, gains, Pv, rtol=INCENTIVE_RTOL):
    """
    Incentive matrix M aligning the follower with the team gain K2.

    M solves M'G = C with

        G = R21 K1 - g B1' Pv A_cl     (m1 x n)
        C = g B2' Pv A_cl - R22 K2     (m2 x n)

    exactly when G is square and well conditioned (n = m1), otherwise by
    truncated minimum-norm least squares followed by a residual check.
    Singular values of G below rtol (1 + ||R21 K1||_F + ||R22 K2||_F) count
    as zero. When both players share the same costs G and C vanish together
    (each team gain already is a best response to the other) and M = 0.

    Parameters
    ----------
    game : ValidatedGame
        The game with the (possibly compromised) follower's weights.
    gains : GainPair
        Team gains.
    Pv : FollowerValue or numpy.ndarray
        Follower's value of the team policy pair.
    rtol : float
        Relative cutoff on the singular values of G.

    Returns
    -------
    numpy.ndarray
        M of shape (m1, m2).

    Raises
    ------
    IncentiveInfeasible
        No M satisfies the relation to 1e-8 (1 + ||C||_F).
    """
    Pv = Pv.Pv if isinstance(Pv, FollowerValue) else np.asarray(Pv)
    _, R21, R22 = game.weights(2)
    A_cl = gains.closed_loop(game)
    G = R21 @ gains.K1 - game.gamma * game.B1.T @ Pv @ A_cl
    C = game.gamma * game.B2.T @ Pv @ A_cl - R22 @ gains.K2
    return solve_incentive_relation(G, C, relation_scale(gains, R21, R22), rtol)


def relation_scale(gains, R21, R22):
    """Magnitude 1 + ||R21 K1||_F + ||R22 K2||_F the terms of G and C cancel from."""
    return 1 + frobenius(R21 @ gains.K1) + frobenius(R22 @ gains.K2)


def solve_incentive_relation(G, C, scale=1.0, rtol=INCENTIVE_RTOL):
    """
    Solves M'G = C for M, see incentive_matrix.

    Parameters
    ----------
    G : numpy.ndarray
        (m1, n) leader side of the relation.
    C : numpy.ndarray
        (m2, n) follower side of the relation.
    scale : float
        Size of the terms G and C were computed from.
    rtol : float
        Singular values of G below rtol * scale are dropped.

    Returns
    -------
    numpy.ndarray
        M of shape (m1, m2), zero on the directions where G vanishes.
    """
    cutoff = rtol * scale
    U, s, Vt = scipy.linalg.svd(G.T, full_matrices=False)
    kept = s > cutoff
    if G.shape[0] == G.shape[1] and np.all(kept):
        M = np.linalg.solve(G.T, C.T)
    else:
        if not np.all(kept):
            logger.debug(f"incentive relation: {np.count_nonzero(~kept)} of {s.size} "
                         f"singular values of G below {cutoff:.1e}")
        M = Vt[kept].T @ ((U[:, kept].T @ C.T) / s[kept, None])
    residual = frobenius(M.T @ G - C)
    bound = 1e-8 * (1 + frobenius(C))
    if residual > bound:
        raise IncentiveInfeasible(residual, bound)
    return M


def follower_best_response(game, policy, cfg=SolverConfig()):
    """
    Follower's optimal gain against a leader playing an incentive policy.

    Substituting u = -(K1 - M K2) x + M v into the follower's cost gives an
    LQR problem with a cross term,

        stage  x'Q_M x + 2 x'S v + v'R_M v
        Q_M = Q2 + L'R21 L,  S = -L'R21 M,  R_M = R22 + M'R21 M,  L = K1 - M K2
        x+ = A_M x + B_M v,  A_M = A - B1 L,  B_M = B1 M + B2

    solved by value iteration from zero.

    Parameters
    ----------
    game : ValidatedGame
        Game carrying the follower's weights.
    policy : IncentivePolicy
        Leader's announced strategy (M = 0 for a plain linear leader).
    cfg : SolverConfig
        Stopping rule.

    Returns
    -------
    numpy.ndarray
        K2* (m2 x n) with v = -K2* x.
    """
    if not isinstance(policy, IncentivePolicy):
        policy = IncentivePolicy(policy)
    policy.gains.check(game)
    g = game.gamma
    Q2, R21, R22 = game.weights(2)
    K1, K2, M = policy.gains.K1, policy.gains.K2, policy.M
    L = K1 - M @ K2
    Q_M = Q2 + L.T @ R21 @ L
    S = -L.T @ R21 @ M
    R_M = R22 + M.T @ R21 @ M
    A_M = game.A - game.B1 @ L
    B_M = game.B1 @ M + game.B2

    def greedy(P):
        return solve(R_M + g * B_M.T @ P @ B_M, S.T + g * B_M.T @ P @ A_M,
                     "R_M + g B_M'P B_M")

    P = np.zeros((game.n, game.n))
    for iteration in range(1, cfg.max_iters + 1):
        P_next = symmetrize(Q_M + g * A_M.T @ P @ A_M - (S + g * A_M.T @ P @ B_M) @ greedy(P))
        delta = frobenius(P_next - P)
        P = P_next
        if not np.all(np.isfinite(P)):
            break
        if delta <= cfg.tol:
            logger.debug(f"follower best response after {iteration} iterations")
            return greedy(P)
    raise MaxIterationsExceeded(iteration, delta)


def q_matrix_from_value(P, game, weights):
    """
    Q-function matrix of the joint problem built from a value matrix:

        H = blockdiag(Q, R_u, R_v) + g [A B1 B2]' P [A B1 B2].
    """
    ABB = np.hstack([game.A, game.B1, game.B2])
    return symmetrize(scipy.linalg.block_diag(*weights) + game.gamma * ABB.T @ P @ ABB)


def h_iteration_step(H, gains, game, weights):
    """
    Model-based image of one policy-iteration step on the Q-function matrix,

        H+ = blockdiag(Q, R_u, R_v) + g Psi' H Psi,  Psi = [I; -K1; -K2] [A B1 B2]

    where (K1, K2) are the gains extracted from H (zero for H = 0).
    """
    stack = np.vstack([np.eye(game.n), -gains.K1, -gains.K2])
    psi = stack @ np.hstack([game.A, game.B1, game.B2])
    return symmetrize(scipy.linalg.block_diag(*weights) + game.gamma * psi.T @ H @ psi)
