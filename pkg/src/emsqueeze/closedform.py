"""Exact Heisenberg-picture solution of the three-mode sideband Hamiltonian.

For ``H = -t1 (a1^dag b^dag + a1 b) - t2 (a2^dag b + a2 b^dag)`` with
``t2 > t1`` the operators rotate periodically with frequency
``Theta = sqrt(t2^2 - t1^2)``. At the half period ``pi / Theta`` the resonator
returns to ``-b`` and the cavities have undergone a two-mode squeeze.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RegimeError, SpaceError
from .gaussian import GaussianState

# ladder-vector ordering used by BogoliubovMap
LADDER_ORDER = ("a1", "a2", "b", "a1+", "a2+", "b+")
_METRIC = np.diag([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])


def _theta(theta1: float, theta2: float) -> float:
    if not abs(theta2) > abs(theta1):
        raise RegimeError(
            f"closed form needs |theta2| > |theta1| (periodic regime), got ({theta1}, {theta2})"
        )
    return float(np.sqrt(theta2**2 - theta1**2))


@dataclass(frozen=True, eq=False)
class BogoliubovMap:
    """``(a1, a2, b, a1^dag, a2^dag, b^dag)(t) = matrix @ (same)(0)``."""

    matrix: np.ndarray
    time: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (6, 6):
            raise SpaceError("a three-mode Bogoliubov map is 6x6")
        object.__setattr__(self, "matrix", m)

    def symplectic_error(self) -> float:
        """max |M K M^dag - K| for the commutator metric K = diag(1,1,1,-1,-1,-1)."""
        m = self.matrix
        return float(np.max(np.abs(m @ _METRIC @ m.conj().T - _METRIC)))

    def reality_error(self) -> float:
        """Deviation of the dagger rows from the conjugated, column-swapped ladder rows."""
        m = self.matrix
        swap = np.block([[np.zeros((3, 3)), np.eye(3)], [np.eye(3), np.zeros((3, 3))]])
        return float(np.max(np.abs(m[3:] - (m[:3].conj() @ swap))))

    def quadrature_matrix(self) -> np.ndarray:
        """Real S with R(t) = S R(0), R = (X1, P1, X2, P2, Xm, Pm)."""
        W = np.zeros((6, 6), dtype=complex)
        for k in range(3):
            W[k, 2 * k] = W[3 + k, 2 * k] = 1 / np.sqrt(2)
            W[k, 2 * k + 1] = 1j / np.sqrt(2)
            W[3 + k, 2 * k + 1] = -1j / np.sqrt(2)
        S = np.linalg.solve(W, self.matrix @ W)
        return S.real

    def row(self, name: str) -> np.ndarray:
        return self.matrix[LADDER_ORDER.index(name)]


def propagator(theta1: float, theta2: float, t: float) -> BogoliubovMap:
    th = _theta(theta1, theta2)
    s, c = np.sin(th * t), np.cos(th * t)
    t1, t2 = theta1, theta2
    th2 = th**2
    lower = np.zeros((3, 6), dtype=complex)
    # a1(t)
    lower[0, 0] = (t2**2 - t1**2 * c) / th2
    lower[0, 4] = t1 * t2 * (1 - c) / th2
    lower[0, 5] = 1j * t1 * s / th
    # a2(t)
    lower[1, 1] = -(t1**2 - t2**2 * c) / th2
    lower[1, 3] = -t1 * t2 * (1 - c) / th2
    lower[1, 2] = 1j * t2 * s / th
    # b(t)
    lower[2, 2] = c
    lower[2, 1] = 1j * t2 * s / th
    lower[2, 3] = 1j * t1 * s / th
    upper = np.roll(lower.conj(), 3, axis=1)
    return BogoliubovMap(np.vstack([lower, upper]), float(t))


def half_period(theta1: float, theta2: float) -> float:
    return float(np.pi / _theta(theta1, theta2))


def squeeze_parameter(theta1: float, theta2: float, scheme: str = "A") -> float:
    """Squeeze parameter reached by scheme A at the half period, or the scheme-B steady state."""
    scheme = scheme.upper()
    if scheme == "A":
        if theta1 == 0:
            if theta2 == 0:
                raise RegimeError("both strengths vanish")
            return 0.0
        r = abs(theta2 / theta1)
        if not r > 1:
            raise RegimeError(f"scheme A needs r = |theta2/theta1| > 1, got {r}")
        return float(np.arctanh(2 * r / (1 + r**2)))
    if scheme == "B":
        if not theta2 > theta1 >= 0:
            raise RegimeError(f"scheme B needs theta2 > theta1 >= 0, got ({theta1}, {theta2})")
        return float(np.arctanh(theta1 / theta2))
    raise ValueError(f"unknown scheme {scheme!r}")


def half_period_variance(r: float) -> float:
    """Total variance 2((r-1)/(r+1))^2 of the cavity pair at the half period."""
    if not r > 1:
        raise RegimeError(f"need r > 1, got {r}")
    return 2.0 * ((r - 1) / (r + 1)) ** 2


def apply_to_gaussian(bmap: BogoliubovMap, g: GaussianState) -> GaussianState:
    """Push a three-mode Gaussian state (ordered c1, c2, m) through the map."""
    if g.n_modes != 3:
        raise SpaceError(f"the map acts on three modes, state has {g.n_modes}")
    S = bmap.quadrature_matrix()
    cov = S @ g.cov @ S.T
    return GaussianState(S @ g.mean, 0.5 * (cov + cov.T), g.labels)
