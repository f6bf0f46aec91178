"""
Model-free policy iteration on the Q-function matrix H of the game.

The learner only sees a PlantHandle. One batch of exploratory transitions
is collected, then every iteration

    1. evaluates the current gains by least squares on the quadratic basis,
       target = one-step cost + gamma * z_next' H_i z_next,
    2. improves the gains from the Schur complements of the new H.

algorithm1_team_optimal learns the team gains with the leader's weights.
algorithm2_incentive evaluates the team gains with the follower's weights
and rebuilds the incentive matrix from the blocks of the learned H.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd
import scipy.linalg

from programs.analysis.model_based import (INCENTIVE_RTOL, relation_scale,
                                           solve_incentive_relation)
from programs.game.errors import NotConverged, RankDeficient, TooFewSamples
from programs.game.game_model import GainPair
from programs.game.utils import relative_error, solve, symmetrize
from programs.q_learning.quadratic_basis import (QMatrix, basis_vector,
                                                 theta_size, theta_unpack)
from programs.simulation.plant_sim import collect_batch

logger = logging.getLogger(__name__)

RANK_TOL = 1e-8


@dataclass(frozen=True)
class LearnerConfig:
    """
    Parameters of the model-free learners.

    Attributes
    ----------
    epsilon : float
        Stop once ||theta_{i+1} - theta_i|| <= epsilon.
    max_policy_iters : int
        Iterations before NotConverged.
    N : int, optional
        Number of transitions, 4 l(l+1)/2 when None.
    sigma1, sigma2 : float
        Exploration noise standard deviations on u and v.
    seed : int
        Seed of the data collection.
    state_sample_radius : float
        Radius of the ball the states are drawn from.
    ridge : float
        Tikhonov term added to the normal equations.
    """

    epsilon: float = 1e-8
    max_policy_iters: int = 100
    N: int | None = None
    sigma1: float = 0.05
    sigma2: float = 0.05
    seed: int = 0
    state_sample_radius: float = 1.0
    ridge: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if int(self.max_policy_iters) != self.max_policy_iters or self.max_policy_iters < 1:
            raise ValueError(f"max_policy_iters must be an integer >= 1, got {self.max_policy_iters}")
        if self.N is not None and (int(self.N) != self.N or self.N < 1):
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("sigma1 and sigma2 must be >= 0")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")
        if not self.state_sample_radius > 0:
            raise ValueError(f"state_sample_radius must be > 0, got {self.state_sample_radius}")
        if self.ridge < 0:
            raise ValueError(f"ridge must be >= 0, got {self.ridge}")

    def samples(self, l):
        return 4 * theta_size(l) if self.N is None else int(self.N)


class LogEntry(NamedTuple):
    iter: int
    h_delta: float
    k1_err: float | None = None
    k2_err: float | None = None


@dataclass(eq=False)
class ConvergenceLog:
    """One LogEntry per policy iteration; errors are None without a reference."""

    entries: list = field(default_factory=list)

    def append(self, entry):
        self.entries.append(entry)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def last(self):
        return self.entries[-1] if self.entries else None

    def to_frame(self):
        return pd.DataFrame(self.entries, columns=list(LogEntry._fields))

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g", na_rep="")


class LearnedPolicy(NamedTuple):
    H: QMatrix
    gains: GainPair
    log: ConvergenceLog


class LearnedFollowerQ(NamedTuple):
    H: QMatrix
    log: ConvergenceLog


def gains_from_H(H):
    """
    Gains minimizing z'Hz jointly over u and v:

        K1 = (H_uu - H_uv H_vv^-1 H_vu)^-1 (H_ux - H_uv H_vv^-1 H_vx)
        K2 = (H_vv - H_vu H_uu^-1 H_uv)^-1 (H_vx - H_vu H_uu^-1 H_ux)

    Parameters
    ----------
    H : QMatrix
        Q-function matrix.

    Returns
    -------
    GainPair
        u = -K1 x, v = -K2 x.

    Raises
    ------
    SingularMatrix
        A diagonal block or a Schur complement is singular, usually because
        the data upstream did not excite every input.
    """
    complement, coupling = H.schur("u", "v")
    K1 = solve(complement, coupling, "leader Schur complement of H")
    complement, coupling = H.schur("v", "u")
    K2 = solve(complement, coupling, "follower Schur complement of H")
    return GainPair(K1, K2)


def value_from_H(H, gains=None):
    """
    P = S'HS with S = [I; -K1; -K2]; gains default to gains_from_H(H).
    """
    gains = gains_from_H(H) if gains is None else gains
    S = np.vstack([np.eye(H.dims[0]), -gains.K1, -gains.K2])
    return symmetrize(S.T @ H.H @ S)


def _regression(batch, dims):
    if batch.X.shape[1] != dims[0]:
        raise ValueError(f"batch states have {batch.X.shape[1]} entries, {dims[0]} expected")
    return basis_vector(np.hstack([batch.X, batch.U, batch.V]))


def regression_rank(Phi):
    """Numerical rank of the regressor rows, threshold 1e-8 times the largest singular value."""
    singular = np.linalg.svd(Phi, compute_uv=False)
    if singular.size == 0 or singular[0] == 0:
        return 0
    return int(np.sum(singular > RANK_TOL * singular[0]))


def ls_policy_eval(batch, H_i, gains_i, weights, gamma, cfg):
    """
    Least-squares evaluation of the gains gains_i.

    For every transition the regressor is basis_vector((x, u_hat, v_hat))
    and the target

        x'Qx + u_hat'R_u u_hat + v_hat'R_v v_hat + gamma z_next' H_i z_next,
        z_next = (x_next, -K1 x_next, -K2 x_next).

    Parameters
    ----------
    batch : DataBatch
        Stored transitions.
    H_i : QMatrix
        Current Q-function matrix.
    gains_i : GainPair
        Current gains.
    weights : CostWeights
        (Q, R_u, R_v) of the learning player.
    gamma : float
        Discount.
    cfg : LearnerConfig
        ridge is used here.

    Returns
    -------
    QMatrix
        H_{i+1}.

    Raises
    ------
    TooFewSamples
        Fewer than l(l+1)/2 + 1 transitions.
    RankDeficient
        The regressors do not span the basis and no ridge is set.
    """
    dims = H_i.dims
    size = theta_size(H_i.l)
    if len(batch) < size + 1:
        raise TooFewSamples(len(batch), size + 1)
    Phi = _regression(batch, dims)
    rank = regression_rank(Phi)
    if rank < size and cfg.ridge == 0:
        raise RankDeficient(rank, size)

    Q, R_u, R_v = weights
    stage = (np.einsum("ki,ij,kj->k", batch.X, Q, batch.X)
             + np.einsum("ki,ij,kj->k", batch.U, R_u, batch.U)
             + np.einsum("ki,ij,kj->k", batch.V, R_v, batch.V))
    Z_next = np.hstack([batch.X_next, -batch.X_next @ gains_i.K1.T, -batch.X_next @ gains_i.K2.T])
    target = stage + gamma * np.einsum("ki,ij,kj->k", Z_next, H_i.H, Z_next)

    if cfg.ridge == 0:
        theta = scipy.linalg.lstsq(Phi, target)[0]
    else:
        theta = solve(Phi.T @ Phi + cfg.ridge * np.eye(size), Phi.T @ target, "regularized Gram matrix")
    return theta_unpack(theta, dims)


def exploration_batch(env, cfg):
    """
    Data shared by both learners: zero gains plus exploration noise, drawn
    with cfg.seed.
    """
    zero = GainPair(np.zeros((env.m1, env.n)), np.zeros((env.m2, env.n)))
    return collect_batch(env, zero, cfg.sigma1, cfg.sigma2, cfg.samples(sum(env.dims)),
                         cfg.state_sample_radius, cfg.seed)


def _errors(gains, reference):
    if reference is None:
        return None, None
    return relative_error(gains.K1, reference.K1), relative_error(gains.K2, reference.K2)


def algorithm1_team_optimal(env, weights, gamma, cfg=LearnerConfig(), reference=None, batch=None):
    """
    Learns the team-optimal gains without the dynamics.

    Starts from H_0 = 0, K1 = K2 = 0, collects one batch and iterates
    ls_policy_eval / gains_from_H on it until ||dtheta|| <= cfg.epsilon.

    Parameters
    ----------
    env : PlantHandle
        Black-box plant.
    weights : CostWeights
        (Q1, R11, R12).
    gamma : float
        Discount.
    cfg : LearnerConfig
        Learner parameters.
    reference : GainPair, optional
        Gains the log compares against.
    batch : DataBatch, optional
        Transitions to use instead of a fresh collection.

    Returns
    -------
    LearnedPolicy
        (H, gains, log).

    Raises
    ------
    NotConverged
        cfg.max_policy_iters iterations without meeting epsilon.
    """
    batch = exploration_batch(env, cfg) if batch is None else batch
    H = QMatrix.zeros(env.dims)
    gains = GainPair(np.zeros((env.m1, env.n)), np.zeros((env.m2, env.n)))
    log = ConvergenceLog()
    for iteration in range(1, cfg.max_policy_iters + 1):
        H_next = ls_policy_eval(batch, H, gains, weights, gamma, cfg)
        h_delta = float(np.linalg.norm(H_next.theta - H.theta))
        gains = gains_from_H(H_next)
        H = H_next
        log.append(LogEntry(iteration, h_delta, *_errors(gains, reference)))
        logger.debug(f"iter {iteration}: |dh| = {h_delta:.3e}")
        if h_delta <= cfg.epsilon:
            logger.info(f"team gains learned in {iteration} iterations")
            return LearnedPolicy(H, gains, log)
    raise NotConverged(cfg.max_policy_iters, h_delta)


def learn_follower_q(env, follower_weights, gamma, team_gains, cfg=LearnerConfig(), batch=None):
    """
    The Algorithm-1 loop with the follower's weights and the policy held at
    team_gains, converging to the follower's H^v of the team policy pair.
    """
    team_gains.check(env)
    batch = exploration_batch(env, cfg) if batch is None else batch
    H = QMatrix.zeros(env.dims)
    log = ConvergenceLog()
    for iteration in range(1, cfg.max_policy_iters + 1):
        H_next = ls_policy_eval(batch, H, team_gains, follower_weights, gamma, cfg)
        h_delta = float(np.linalg.norm(H_next.theta - H.theta))
        H = H_next
        log.append(LogEntry(iteration, h_delta))
        logger.debug(f"iter {iteration}: |dh^v| = {h_delta:.3e}")
        if h_delta <= cfg.epsilon:
            logger.info(f"follower Q-function learned in {iteration} iterations")
            return LearnedFollowerQ(H, log)
    raise NotConverged(cfg.max_policy_iters, h_delta)


def incentive_rtol(cfg):
    """Cutoff on the singular values of a learned G, never below the model-based one."""
    return max(INCENTIVE_RTOL, cfg.epsilon)


def incentive_from_H(Hv, team_gains, follower_weights, rtol=INCENTIVE_RTOL):
    """
    Incentive matrix from the blocks of the follower's H^v, no dynamics:

        G = R21 K1 - (H_ux - (H_uu - R21) K1 - H_uv K2)
        C = (H_vx - H_vu K1 - (H_vv - R22) K2) - R22 K2

    then M'G = C as in model_based.incentive_matrix, with the same cutoff
    rtol on the singular values of G. A learned H^v is only accurate to
    about the learner's epsilon, see incentive_rtol.
    """
    _, R21, R22 = follower_weights
    K1, K2 = team_gains.K1, team_gains.K2
    leader_term = Hv.block("ux") - (Hv.block("uu") - R21) @ K1 - Hv.block("uv") @ K2
    follower_term = Hv.block("vx") - Hv.block("vu") @ K1 - (Hv.block("vv") - R22) @ K2
    G = R21 @ K1 - leader_term
    C = follower_term - R22 @ K2
    return solve_incentive_relation(G, C, relation_scale(team_gains, R21, R22), rtol)


def algorithm2_incentive(env, follower_weights, gamma, team_gains, cfg=LearnerConfig(), batch=None):
    """
    Learns the incentive matrix M (m1 x m2) without the dynamics.

    Raises
    ------
    NotConverged, RankDeficient, TooFewSamples
        From the learning loop.
    IncentiveInfeasible
        The learned relation has no exact solution.
    """
    Hv, _ = learn_follower_q(env, follower_weights, gamma, team_gains, cfg, batch)
    return incentive_from_H(Hv, team_gains, follower_weights, incentive_rtol(cfg))
