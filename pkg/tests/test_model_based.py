# tests/test_model_based.py

import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose

from conftest import scalar_spec
from programs.analysis.model_based import (SolverConfig, best_single_gain, follower_best_response,
                                           gains_from_value, h_iteration_step,
                                           incentive_matrix, lyapunov_residual,
                                           policy_value, q_matrix_from_value,
                                           riccati_step, solve_follower_value,
                                           solve_incentive_relation, solve_team_optimal)
from programs.game.errors import (IncentiveInfeasible, MaxIterationsExceeded,
                                  UnstableClosedLoop)
from programs.game.game_model import GainPair, GameSpec, IncentivePolicy, validate_game
from programs.simulation.plant_sim import LinearFollower, PlantHandle, evaluate_cost, rollout

GAMMAS = [0.5, 0.9, 0.99]
SHAPES = [(1, 1, 1), (2, 1, 1), (2, 2, 1), (3, 1, 2), (4, 2, 2)]


def scalar_team_value(gamma):
    # P = 1 + gamma P / (1 + 2 gamma P) for a = b1 = b2 = q = r = 1
    return ((3 * gamma - 1) + np.sqrt((3 * gamma - 1) ** 2 + 8 * gamma)) / (4 * gamma)


def dare_value(game, weights):
    Q, R_u, R_v = weights
    B = np.hstack([game.B1, game.B2])
    R = scipy.linalg.block_diag(R_u, R_v)
    root = np.sqrt(game.gamma)
    return scipy.linalg.solve_discrete_are(root * game.A, root * B, Q, R)


def closed_form_cost(game, gains):
    try:
        P, _ = policy_value(game, gains, game.weights(1))
    except UnstableClosedLoop:
        return np.inf
    return float(game.x0 @ P @ game.x0)


def test_scalar_team_solution(scalar_game):
    team = solve_team_optimal(scalar_game)
    P = scalar_team_value(0.9)
    assert_allclose(team.P, [[P]], rtol=1e-9)
    k = 0.9 * P / (1 + 1.8 * P)
    assert_allclose(team.gains.K1, [[k]], rtol=1e-9)
    assert_allclose(team.gains.K2, [[k]], rtol=1e-9)
    assert team.residual <= 1e-8
    assert team.cost(scalar_game.x0) == pytest.approx(P)


def test_zero_dynamics_team_solution():
    game = validate_game(scalar_spec(a=0.0, q1=3.0))
    team = solve_team_optimal(game)
    assert_allclose(team.P, [[3.0]])
    assert_allclose(team.gains.K1, 0.0, atol=1e-15)
    assert_allclose(team.gains.K2, 0.0, atol=1e-15)
    assert team.iterations == 2


def test_first_riccati_step_is_Q(two_state_game):
    P1 = riccati_step(np.zeros((2, 2)), two_state_game, two_state_game.weights(1))
    assert_allclose(P1, two_state_game.weights(1).Q)


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("shape", SHAPES)
@pytest.mark.parametrize("seed", range(3))
def test_random_instances_match_dare(make_random_game, seed, shape, gamma):
    game = make_random_game(seed, *shape, gamma)
    team = solve_team_optimal(game)
    assert team.residual <= 1e-8
    assert_allclose(team.P, dare_value(game, game.weights(1)), rtol=1e-7, atol=1e-8)
    assert np.sqrt(gamma) * max(abs(np.linalg.eigvals(team.gains.closed_loop(game)))) < 1


@pytest.mark.parametrize("seed", range(5))
def test_team_optimality_under_perturbation(make_random_game, seed):
    game = make_random_game(seed, 2, 1, 1, 0.9)
    team = solve_team_optimal(game)
    optimum = closed_form_cost(game, team.gains)
    assert optimum == pytest.approx(team.cost(game.x0), rel=1e-8)
    rng = np.random.default_rng(seed)
    for _ in range(100):
        d1 = rng.standard_normal(team.gains.K1.shape)
        d2 = rng.standard_normal(team.gains.K2.shape)
        scale = 1e-2 / np.sqrt(np.sum(d1 ** 2) + np.sum(d2 ** 2))
        perturbed = GainPair(team.gains.K1 + scale * d1, team.gains.K2 + scale * d2)
        assert closed_form_cost(game, perturbed) >= optimum - 1e-9


def test_gain_formula_is_a_joint_minimizer(two_state_game):
    team = solve_team_optimal(two_state_game)
    _, R_u, R_v = two_state_game.weights(1)
    K1 = best_single_gain(team.P, two_state_game, R_u, 1, team.gains.K2)
    K2 = best_single_gain(team.P, two_state_game, R_v, 2, team.gains.K1)
    assert_allclose(K1, team.gains.K1, atol=1e-9)
    assert_allclose(K2, team.gains.K2, atol=1e-9)


def test_gains_from_zero_value(two_state_game):
    gains = gains_from_value(np.zeros((2, 2)), two_state_game, two_state_game.weights(1)[1:])
    assert_allclose(gains.K1, 0.0)
    assert_allclose(gains.K2, 0.0)


def test_unstabilizable_game_does_not_converge():
    # x+ = 2x with no input authority and gamma * 4 > 1
    game = validate_game(scalar_spec(a=2.0, b1=0.0, b2=0.0, gamma=0.9))
    with pytest.raises(MaxIterationsExceeded):
        solve_team_optimal(game, SolverConfig(max_iters=200))


def test_unobservable_unstable_mode_is_rejected():
    game = validate_game(scalar_spec(a=2.0, q1=0.0))
    with pytest.raises(UnstableClosedLoop):
        solve_team_optimal(game)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)


def test_policy_value_of_zero_gains():
    game = validate_game(scalar_spec(a=0.5))
    P, residual = policy_value(game, GainPair(0.0, 0.0), game.weights(1))
    assert_allclose(P, [[1 / (1 - 0.9 * 0.25)]])
    assert residual <= 1e-10


def test_policy_value_unstable(scalar_game):
    with pytest.raises(UnstableClosedLoop):
        policy_value(scalar_game, GainPair(-1.0, 0.0), scalar_game.weights(1))


def test_policy_value_falls_back_to_linear_solve(scalar_game):
    gains = GainPair(0.2, 0.2)
    P_iterated, _ = policy_value(scalar_game, gains, scalar_game.weights(1))
    P_solved, residual = policy_value(scalar_game, gains, scalar_game.weights(1),
                                      SolverConfig(max_iters=1))
    assert_allclose(P_solved, P_iterated, rtol=1e-9)
    assert residual <= 1e-10


def test_follower_value_with_equal_weights(scalar_game):
    team = solve_team_optimal(scalar_game)
    value = solve_follower_value(scalar_game, team.gains)
    assert_allclose(value.Pv, team.P, rtol=1e-9)
    assert lyapunov_residual(value.Pv, team.gains, scalar_game, scalar_game.weights(2)) <= 1e-9


def test_scalar_incentive_matrix(attacked_scalar_game):
    game = attacked_scalar_game
    team = solve_team_optimal(game)
    value = solve_follower_value(game, team.gains)
    M = incentive_matrix(game, team.gains, value)
    k1, k2 = team.gains.K1[0, 0], team.gains.K2[0, 0]
    a_cl = 1 - k1 - k2
    pv = (2 + k1 ** 2 + k2 ** 2) / (1 - 0.9 * a_cl ** 2)
    assert value.Pv[0, 0] == pytest.approx(pv, rel=1e-9)
    expected = (0.9 * a_cl * pv - k2) / (k1 - 0.9 * a_cl * pv)
    assert M.shape == (1, 1)
    assert M[0, 0] == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("fixture", ["scalar_game", "two_state_game"])
def test_equal_weights_need_no_incentive(request, fixture):
    game = request.getfixturevalue(fixture)
    team = solve_team_optimal(game)
    value = solve_follower_value(game, team.gains)
    M = incentive_matrix(game, team.gains, value)
    assert M.shape == (game.m1, game.m2)
    assert_allclose(M, 0.0, atol=1e-12)
    K2_star = follower_best_response(game, IncentivePolicy(team.gains, M))
    assert_allclose(K2_star, team.gains.K2, atol=1e-8)


def test_identical_costs_best_response_is_team_gain(scalar_game, two_state_game):
    for game in (scalar_game, two_state_game):
        team = solve_team_optimal(game)
        K2_star = follower_best_response(game, IncentivePolicy(team.gains))
        assert_allclose(K2_star, team.gains.K2, atol=1e-8)

def test_incentive_aligns_follower(attacked_scalar_game):
    game = attacked_scalar_game
    team = solve_team_optimal(game)
    M = incentive_matrix(game, team.gains, solve_follower_value(game, team.gains))
    K2_star = follower_best_response(game, IncentivePolicy(team.gains, M))
    assert_allclose(K2_star, team.gains.K2, atol=1e-8)


def test_selfish_follower_deviates(attacked_scalar_game):
    team = solve_team_optimal(attacked_scalar_game)
    K2_selfish = follower_best_response(attacked_scalar_game, team.gains)
    assert abs(K2_selfish[0, 0] - team.gains.K2[0, 0]) > 1e-3


@pytest.mark.parametrize("shape", [(1, 1, 1), (1, 1, 2), (2, 2, 1), (2, 2, 2)])
@pytest.mark.parametrize("seed", range(4))
def test_random_incentive_alignment(make_random_game, seed, shape):
    game = make_random_game(seed, *shape, 0.9)
    team = solve_team_optimal(game)
    M = incentive_matrix(game, team.gains, solve_follower_value(game, team.gains))
    assert M.shape == (shape[1], shape[2])
    K2_star = follower_best_response(game, IncentivePolicy(team.gains, M))
    assert_allclose(K2_star, team.gains.K2, atol=1e-7)


def test_incentive_infeasible_when_underactuated():
    game = validate_game(GameSpec(
        A=[[1.0, 0.5], [0.0, 0.8]], B1=[[0.0], [1.0]], B2=[[1.0], [0.0]],
        Q1=np.eye(2), Q2=np.diag([3.0, 1.0]), R11=1.0, R12=1.0, R21=1.0, R22=2.0,
        gamma=0.9))
    team = solve_team_optimal(game)
    with pytest.raises(IncentiveInfeasible):
        incentive_matrix(game, team.gains, solve_follower_value(game, team.gains))


def test_incentive_relation_least_squares():
    G = np.array([[1.0, 2.0]])
    M = solve_incentive_relation(G, 3 * G)
    assert_allclose(M, [[3.0]])


def test_q_matrix_blocks(square_game):
    team = solve_team_optimal(square_game)
    H = q_matrix_from_value(team.P, square_game, square_game.weights(1))
    g = square_game.gamma
    assert H.shape == (5, 5)
    assert_allclose(H[2:4, 2:4], np.eye(2) + g * square_game.B1.T @ team.P @ square_game.B1)
    assert_allclose(H[0:2, 4:], g * square_game.A.T @ team.P @ square_game.B2)


def test_h_iteration_from_zero_is_diagonal(scalar_game):
    H1 = h_iteration_step(np.zeros((3, 3)), GainPair(0.0, 0.0), scalar_game,
                          scalar_game.weights(1))
    assert_allclose(H1, np.eye(3))


def test_h_iteration_fixed_point(two_state_game):
    team = solve_team_optimal(two_state_game)
    weights = two_state_game.weights(1)
    H = q_matrix_from_value(team.P, two_state_game, weights)
    assert_allclose(h_iteration_step(H, team.gains, two_state_game, weights), H, atol=1e-9)


def test_vanishing_relation_gives_zero_incentive():
    noise = 1e-13
    square = solve_incentive_relation(noise * np.array([[1.0, 2.0], [3.0, 1.0]]),
                                      noise * np.array([[2.0, -1.0]]))
    assert np.array_equal(square, np.zeros((2, 1)))
    wide = solve_incentive_relation(noise * np.array([[1.0, 2.0]]), noise * np.array([[0.5, 1.0]]))
    assert np.array_equal(wide, np.zeros((1, 1)))


def test_cutoff_scales_with_the_gains():
    G = np.array([[1e-7, 0.0], [0.0, 1.0]])
    C = np.array([[1e-7, 1.0]])
    assert_allclose(solve_incentive_relation(G, C), [[1.0], [1.0]])
    with pytest.raises(IncentiveInfeasible):
        solve_incentive_relation(G, C, scale=1e3)


def test_gains_without_follower_input():
    game = validate_game(scalar_spec(a=1.2, b2=0.0, q1=2.0, r11=0.5))
    team = solve_team_optimal(game)
    assert_allclose(team.gains.K2, 0.0, atol=1e-12)
    root = np.sqrt(game.gamma)
    P = scipy.linalg.solve_discrete_are(root * game.A, root * game.B1, game.spec.Q1, game.spec.R11)
    k = game.gamma * P[0, 0] * 1.2 / (0.5 + game.gamma * P[0, 0])
    assert_allclose(team.gains.K1, [[k]], rtol=1e-8)
    gains = gains_from_value(P, game, game.weights(1)[1:])
    assert_allclose(gains.K1, [[k]], rtol=1e-10)
    assert_allclose(gains.K2, 0.0, atol=1e-15)


def test_follower_value_is_the_simulated_follower_cost(attacked_scalar_game):
    game = attacked_scalar_game
    team = solve_team_optimal(game)
    value = solve_follower_value(game, team.gains)
    traj = rollout(PlantHandle.from_game(game), IncentivePolicy(team.gains),
                   LinearFollower(team.gains.K2), game.x0, 200)
    J2 = evaluate_cost(traj, game.weights(2), game.gamma)
    assert J2 == pytest.approx(value.Pv[0, 0] * game.x0[0] ** 2, abs=1e-9)


def incentive_follower_value(game, policy, K2):
    """Closed-form follower cost x0'P x0 of v = -K2 x under an incentive leader."""
    Q2, R21, R22 = game.weights(2)
    M = policy.M
    L = policy.gains.K1 - M @ policy.gains.K2
    Q_M = Q2 + L.T @ R21 @ L
    S = -L.T @ R21 @ M
    R_M = R22 + M.T @ R21 @ M
    A_cl = game.A - game.B1 @ L - (game.B1 @ M + game.B2) @ K2
    W = Q_M - S @ K2 - K2.T @ S.T + K2.T @ R_M @ K2
    P = scipy.linalg.solve_discrete_lyapunov(np.sqrt(game.gamma) * A_cl.T, W)
    return float(game.x0 @ P @ game.x0)


@pytest.mark.parametrize("fixture", ["attacked_scalar_game", "square_game"])
def test_modified_weights_match_simulated_follower_cost(request, rng, fixture):
    game = request.getfixturevalue(fixture)
    team = solve_team_optimal(game)
    policy = IncentivePolicy(team.gains, incentive_matrix(
        game, team.gains, solve_follower_value(game, team.gains)))
    plant = PlantHandle.from_game(game)
    K2_star = follower_best_response(game, policy)
    candidates = [K2_star] + [K2_star + 0.02 * rng.standard_normal(K2_star.shape)
                              for _ in range(5)]
    for K2 in candidates:
        traj = rollout(plant, policy, LinearFollower(K2), game.x0, 30)
        simulated = evaluate_cost(traj, game.weights(2), game.gamma, "lyapunov_tail")
        assert simulated == pytest.approx(incentive_follower_value(game, policy, K2), rel=1e-8)


def test_aligned_follower_gain_beats_perturbations(square_game, rng):
    team = solve_team_optimal(square_game)
    policy = IncentivePolicy(team.gains, incentive_matrix(
        square_game, team.gains, solve_follower_value(square_game, team.gains)))
    best = incentive_follower_value(square_game, policy, team.gains.K2)
    for _ in range(100):
        step = rng.standard_normal(team.gains.K2.shape)
        K2 = team.gains.K2 + 1e-2 * step / np.linalg.norm(step)
        assert incentive_follower_value(square_game, policy, K2) > best
