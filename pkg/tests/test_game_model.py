# tests/test_game_model.py

import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import scalar_spec
from programs.game.errors import (DimensionMismatch, DiscountOutOfRange, ModelError,
                                  NotPositiveDefinite, NotSymmetric)
from programs.game.game_model import (CostWeights, GainPair, GameSpec, IncentivePolicy,
                                      one_step_cost, validate_game)


def test_validate_scalar_game(scalar_game):
    assert (scalar_game.n, scalar_game.m1, scalar_game.m2) == (1, 1, 1)
    assert scalar_game.l == 3
    assert scalar_game.gamma == 0.9
    assert_allclose(scalar_game.x0, [1.0])


def test_validated_matrices_are_read_only(scalar_game):
    with pytest.raises(ValueError):
        scalar_game.A[0, 0] = 2.0


def test_x0_defaults_to_ones():
    game = validate_game(dataclasses.replace(scalar_spec(), x0=None))
    assert_allclose(game.x0, [1.0])


def test_validate_accepts_validated_game(scalar_game):
    again = validate_game(scalar_game)
    assert_allclose(again.A, scalar_game.A)


def test_dimension_mismatch():
    spec = GameSpec(A=np.eye(2), B1=[[1.0], [0.0]], B2=[[0.0], [1.0]],
                    Q1=np.eye(2), Q2=np.eye(3), R11=1.0, R12=1.0, R21=1.0, R22=1.0,
                    gamma=0.9)
    with pytest.raises(DimensionMismatch, match="Q2"):
        validate_game(spec)


def test_non_square_A():
    spec = dataclasses.replace(scalar_spec(), A=[[1.0, 2.0]])
    with pytest.raises(DimensionMismatch):
        validate_game(spec)


def test_not_symmetric():
    spec = GameSpec(A=np.eye(2), B1=[[1.0], [0.0]], B2=[[0.0], [1.0]],
                    Q1=[[1.0, 0.5], [0.0, 1.0]], Q2=np.eye(2), R11=1.0, R12=1.0,
                    R21=1.0, R22=1.0, gamma=0.9)
    with pytest.raises(NotSymmetric, match="Q1"):
        validate_game(spec)


@pytest.mark.parametrize("field, value, semi", [
    ("Q1", -1.0, True),
    ("R11", 0.0, False),
    ("R22", -2.0, False),
])
def test_definiteness(field, value, semi):
    with pytest.raises(NotPositiveDefinite, match=field) as info:
        validate_game(dataclasses.replace(scalar_spec(), **{field: value}))
    assert ("semidefinite" in str(info.value)) == semi


def test_zero_state_weight_is_allowed():
    game = validate_game(scalar_spec(q1=0.0))
    assert_allclose(game.weights(1).Q, [[0.0]])


@pytest.mark.parametrize("gamma", [0.0, 1.0, 1.5, -0.1, float("nan"), True])
def test_discount_out_of_range(gamma):
    with pytest.raises(DiscountOutOfRange):
        validate_game(scalar_spec(gamma=gamma))


def test_model_errors_are_value_errors():
    with pytest.raises(ValueError):
        validate_game(scalar_spec(gamma=2.0))
    assert issubclass(DiscountOutOfRange, ModelError)


def test_one_step_cost(scalar_game):
    assert one_step_cost(scalar_game, 1, [2.0], [1.0], [3.0]) == pytest.approx(14.0)
    assert one_step_cost(scalar_game, 2, [0.0], [0.0], [0.0]) == 0.0


def test_one_step_cost_players(attacked_scalar_game):
    assert one_step_cost(attacked_scalar_game, 1, [1.0], [0.0], [0.0]) == pytest.approx(1.0)
    assert one_step_cost(attacked_scalar_game, 2, [1.0], [0.0], [0.0]) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        one_step_cost(attacked_scalar_game, 3, [1.0], [0.0], [0.0])


def test_one_step_cost_dimensions(two_state_game):
    with pytest.raises(DimensionMismatch):
        one_step_cost(two_state_game, 1, [1.0], [0.0], [0.0])


def test_with_follower_weights_keeps_leader(scalar_game, attacker_weights):
    attacked = scalar_game.with_follower_weights(attacker_weights)
    assert_allclose(attacked.weights(2).Q, [[2.0]])
    assert_allclose(attacked.weights(1).Q, scalar_game.weights(1).Q)
    assert_allclose(scalar_game.weights(2).Q, [[1.0]])


def test_with_follower_weights_validates(scalar_game):
    with pytest.raises(NotPositiveDefinite):
        scalar_game.with_follower_weights(CostWeights(1.0, 1.0, -1.0))


def test_gain_pair_shapes(two_state_game):
    gains = GainPair([[1.0, 2.0]], [[0.5, 0.5]]).check(two_state_game)
    assert_allclose(gains.leader_action(np.array([1.0, 1.0])), [-3.0])
    assert_allclose(gains.follower_action(np.array([1.0, 1.0])), [-1.0])
    with pytest.raises(DimensionMismatch):
        GainPair([[1.0]], [[1.0]]).check(two_state_game)
    with pytest.raises(DimensionMismatch):
        GainPair([[1.0, 2.0]], [[1.0]])


def test_incentive_policy_on_path(scalar_game):
    policy = IncentivePolicy(GainPair(0.3, 0.4), M=2.0)
    x = np.array([1.5])
    # follower on its team action: the incentive term vanishes
    assert_allclose(policy(x, -0.4 * x), -0.3 * x)
    # off path: u = -K1 x + M (v + K2 x)
    assert_allclose(policy(x, np.array([0.0])), -0.3 * 1.5 + 2.0 * 0.4 * 1.5)


def test_incentive_policy_defaults_to_zero_M():
    policy = IncentivePolicy(GainPair(np.ones((2, 3)), np.ones((1, 3))))
    assert policy.M.shape == (2, 1)
    assert_allclose(policy.M, 0.0)


def test_effective_leader_gain():
    policy = IncentivePolicy(GainPair(0.3, 0.4), M=2.0)
    assert_allclose(policy.effective_leader_gain(np.array([[0.4]])), [[0.3]])
    assert_allclose(policy.effective_leader_gain(np.array([[0.0]])), [[0.3 - 0.8]])


def test_gains_and_incentive_are_read_only():
    K1 = np.array([[0.3]])
    policy = IncentivePolicy(GainPair(K1, 0.4), M=2.0)
    with pytest.raises(ValueError):
        policy.gains.K1[0, 0] = 1.0
    with pytest.raises(ValueError):
        policy.gains.K2[0, 0] = 1.0
    with pytest.raises(ValueError):
        policy.M[0, 0] = 1.0
    # the caller's array is copied, not frozen
    K1[0, 0] = 0.5
    assert_allclose(policy.gains.K1, [[0.3]])
