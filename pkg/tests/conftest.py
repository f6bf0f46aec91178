# tests/conftest.py

import numpy as np
import pytest

from programs.game.game_model import CostWeights, GameSpec, validate_game
from programs.game.utils import spectral_radius
from programs.simulation.plant_sim import PlantHandle

SEED = 42


def scalar_spec(a=1.0, b1=1.0, b2=1.0, q1=1.0, q2=1.0, r11=1.0, r12=1.0,
                r21=1.0, r22=1.0, gamma=0.9, x0=1.0):
    return GameSpec(A=a, B1=b1, B2=b2, Q1=q1, Q2=q2, R11=r11, R12=r12,
                    R21=r21, R22=r22, gamma=gamma, x0=x0)


def random_game(seed, n, m1, m2, gamma):
    """
    Random game with a slightly unstable A, generic (controllable) inputs
    and positive definite weights.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A *= 1.1 / max(spectral_radius(A), 1e-3)

    def pd(size, floor):
        root = rng.standard_normal((size, size))
        return root @ root.T / size + floor * np.eye(size)

    return validate_game(GameSpec(
        A=A, B1=rng.standard_normal((n, m1)), B2=rng.standard_normal((n, m2)),
        Q1=pd(n, 0.5), Q2=pd(n, 0.5), R11=pd(m1, 1.0), R12=pd(m2, 1.0),
        R21=pd(m1, 1.0), R22=pd(m2, 1.0), gamma=gamma))


@pytest.fixture
def scalar_game():
    """a = b1 = b2 = 1, all weights 1, gamma = 0.9, x0 = 1."""
    return validate_game(scalar_spec())


@pytest.fixture
def attacker_weights():
    return CostWeights(np.array([[2.0]]), np.array([[1.0]]), np.array([[1.0]]))


@pytest.fixture
def attacked_scalar_game(scalar_game, attacker_weights):
    return scalar_game.with_follower_weights(attacker_weights)


@pytest.fixture
def two_state_game():
    """n = 2, m1 = m2 = 1, stable open loop."""
    return validate_game(GameSpec(
        A=[[0.9, 0.2], [0.0, 0.8]], B1=[[0.0], [1.0]], B2=[[0.5], [0.2]],
        Q1=np.eye(2), Q2=np.eye(2), R11=1.0, R12=1.0, R21=1.0, R22=1.0,
        gamma=0.9, x0=[1.0, -1.0]))


@pytest.fixture
def square_game():
    """n = m1 = 2, m2 = 1: the incentive relation has a unique solution."""
    return validate_game(GameSpec(
        A=[[1.0, 0.2], [0.0, 0.9]], B1=np.eye(2), B2=[[0.5], [1.0]],
        Q1=np.eye(2), Q2=np.diag([2.0, 1.0]), R11=np.eye(2), R12=1.0,
        R21=np.eye(2), R22=2.0, gamma=0.9, x0=[1.0, 1.0]))


@pytest.fixture
def make_random_game():
    return random_game


@pytest.fixture
def plant(scalar_game):
    return PlantHandle.from_game(scalar_game, seed=SEED)


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)
