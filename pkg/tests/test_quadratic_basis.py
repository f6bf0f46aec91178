# tests/test_quadratic_basis.py

import numpy as np
import pytest
from numpy.testing import assert_allclose

from programs.game.errors import DimensionMismatch, LengthMismatch, NotSymmetric
from programs.q_learning.quadratic_basis import (QMatrix, basis_vector, theta_pack,
                                                 theta_size, theta_unpack)


def random_symmetric(rng, l):
    root = rng.standard_normal((l, l))
    return root + root.T


def test_basis_of_zero():
    assert_allclose(basis_vector(np.zeros(4)), np.zeros(10))


def test_basis_small():
    assert_allclose(basis_vector([1.0, 2.0]), [1.0, 2.0, 4.0])
    assert_allclose(basis_vector([1.0, 1.0, 1.0]), np.ones(6))


def test_basis_order():
    # z1^2, z1 z2, z1 z3, z2^2, z2 z3, z3^2
    assert_allclose(basis_vector([2.0, 3.0, 5.0]), [4.0, 6.0, 10.0, 9.0, 15.0, 25.0])


def test_basis_of_rows():
    rows = np.array([[1.0, 2.0], [3.0, 0.0]])
    assert_allclose(basis_vector(rows), [[1.0, 2.0, 4.0], [9.0, 0.0, 0.0]])


def test_pack_identity():
    assert_allclose(theta_pack(np.eye(2)), [1.0, 0.0, 1.0])


def test_pack_off_diagonal():
    H = np.array([[0.0, 1.0], [1.0, 0.0]])
    theta = theta_pack(H)
    assert_allclose(theta, [0.0, 2.0, 0.0])
    assert_allclose(theta_unpack(theta, (1, 1, 0)).H, H)


def test_round_trip(rng):
    H = random_symmetric(rng, 6)
    restored = theta_unpack(theta_pack(H), (2, 2, 2))
    assert_allclose(restored.H, H, atol=1e-14)


def test_quadratic_form_identity(rng):
    for _ in range(100):
        H = random_symmetric(rng, 6)
        z = rng.standard_normal(6)
        assert z @ H @ z == pytest.approx(basis_vector(z) @ theta_pack(H), abs=1e-12)


def test_unpack_wrong_length():
    with pytest.raises(LengthMismatch):
        theta_unpack(np.zeros(5), (1, 1, 1))


def test_theta_size():
    assert [theta_size(l) for l in (1, 3, 6)] == [1, 6, 21]


def test_qmatrix_blocks():
    H = QMatrix(np.arange(16.0).reshape(4, 4) + np.arange(16.0).reshape(4, 4).T, (2, 1, 1))
    assert H.l == 4
    assert H.block("xx").shape == (2, 2)
    assert H.block("uv").shape == (1, 1)
    assert_allclose(H.block("ux"), H.block("xu").T)
    assert_allclose(H.block("vx"), H.H[3:, :2])


def test_qmatrix_rejects_asymmetry():
    with pytest.raises(NotSymmetric):
        QMatrix([[1.0, 2.0], [0.0, 1.0]], (1, 1, 0))


def test_qmatrix_dims():
    with pytest.raises(DimensionMismatch):
        QMatrix(np.eye(3), (1, 1))
    with pytest.raises(DimensionMismatch):
        QMatrix(np.eye(3), (2, 1, 1))


def test_theta_property(rng):
    H = random_symmetric(rng, 3)
    assert_allclose(QMatrix(H, (1, 1, 1)).theta, theta_pack(H))


def test_schur_complement_decoupled():
    H = QMatrix(np.diag([1.0, 2.0, 4.0]), (1, 1, 1))
    complement, coupling = H.schur("u", "v")
    assert_allclose(complement, [[2.0]])
    assert_allclose(coupling, [[0.0]])
