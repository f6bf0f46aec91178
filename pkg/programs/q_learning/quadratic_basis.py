"""
Quadratic basis of the joint vector z = (x, u, v) and the matching
half-vectorization Theta(H) of a symmetric Q-function matrix, so that

    z' H z = basis_vector(z) . theta_pack(H).

Entries follow the row-major order of the upper triangle (numpy.triu_indices).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from programs.game.errors import DimensionMismatch, LengthMismatch, NotSymmetric
from programs.game.utils import as_matrix, solve, symmetrize

SYMMETRY_TOL = 1e-10


def theta_size(l):
    """Number of distinct quadratic monomials of an l-vector, l(l+1)/2."""
    return l * (l + 1) // 2


def basis_vector(z):
    """
    Quadratic monomials (z1^2, z1 z2, ..., z1 zl, z2^2, ..., zl^2).

    Parameters
    ----------
    z : array_like
        Joint vector of length l; a 2-d array is read as one vector per row.

    Returns
    -------
    numpy.ndarray
        Length l(l+1)/2, or one row per input row.
    """
    z = np.asarray(z, dtype=float)
    rows, cols = np.triu_indices(z.shape[-1])
    return z[..., rows] * z[..., cols]


def theta_pack(H):
    """
    Diagonal entries of H in the diagonal slots, H[j,k] + H[k,j] elsewhere.
    """
    H = H.H if isinstance(H, QMatrix) else np.asarray(H, dtype=float)
    rows, cols = np.triu_indices(H.shape[0])
    return np.where(rows == cols, H[rows, cols], H[rows, cols] + H[cols, rows])


def theta_unpack(theta, dims):
    """
    Symmetric QMatrix from its packed form, off-diagonal sums are halved.

    Parameters
    ----------
    theta : array_like
        Packed vector of length l(l+1)/2.
    dims : tuple
        (n, m1, m2).

    Returns
    -------
    QMatrix

    Raises
    ------
    LengthMismatch
        theta does not have l(l+1)/2 entries.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    l = sum(dims)
    if theta.shape[0] != theta_size(l):
        raise LengthMismatch(
            f"theta has {theta.shape[0]} entries, {theta_size(l)} expected for l={l}")
    rows, cols = np.triu_indices(l)
    upper = np.zeros((l, l))
    upper[rows, cols] = np.where(rows == cols, theta, theta / 2)
    return QMatrix(upper + np.triu(upper, 1).T, dims)


@dataclass(frozen=True, eq=False)
class QMatrix:
    """
    Symmetric Q-function matrix over z = (x, u, v).

    Attributes
    ----------
    H : numpy.ndarray
        l x l matrix, l = n + m1 + m2.
    dims : tuple
        (n, m1, m2), the block partition.
    """

    H: np.ndarray
    dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3:
            raise DimensionMismatch(f"dims must be (n, m1, m2), got {dims}")
        l = sum(dims)
        H = as_matrix(self.H, "H", (l, l))
        if H.size and float(np.max(np.abs(H - H.T))) > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(H)))):
            raise NotSymmetric("H")
        object.__setattr__(self, "H", symmetrize(H))
        object.__setattr__(self, "dims", dims)

    @classmethod
    def zeros(cls, dims):
        l = sum(dims)
        return cls(np.zeros((l, l)), dims)

    @property
    def l(self):
        return self.H.shape[0]

    @property
    def theta(self):
        return theta_pack(self.H)

    def _slice(self, name):
        n, m1, _ = self.dims
        return {"x": slice(0, n), "u": slice(n, n + m1), "v": slice(n + m1, None)}[name]

    def block(self, name):
        """
        Block of H by a two-letter name, e.g. "uu", "vx", "xv".
        """
        return self.H[self._slice(name[0]), self._slice(name[1])]

    def schur(self, own, other):
        """
        H_oo - H_ot H_tt^-1 H_to and H_ox - H_ot H_tt^-1 H_tx, with o = own
        and t = other player.
        """
        elimination = solve(self.block(other + other),
                            np.hstack([self.block(other + own), self.block(other + "x")]),
                            f"H_{other}{other}")
        coupling = self.block(own + other) @ elimination
        width = self.block(own + own).shape[1]
        return (self.block(own + own) - coupling[:, :width],
                self.block(own + "x") - coupling[:, width:])
