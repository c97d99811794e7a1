"""Entanglement and state-quality figures of merit for Fock or Gaussian states."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SpaceError
from .fock import QuantumState, make_space, tmsv_state
from .gaussian import GaussianState, gaussian_from_fock, tmsv_cov

MEAN_TOL = 1e-6

State = GaussianState | QuantumState


@dataclass(frozen=True)
class DuanResult:
    v_minus: float  # u = X1 - X2, v = P1 + P2
    v_plus: float  # u = X1 + X2, v = P1 - P2

    @property
    def v_min(self) -> float:
        return min(self.v_minus, self.v_plus)

    @property
    def entangled(self) -> bool:
        return self.v_min < 2.0


def _labels(state: State) -> tuple[str, ...]:
    return state.labels if isinstance(state, GaussianState) else state.space.labels


def _pair(state: State, pair: Sequence[str] | None) -> tuple[str, str]:
    labels = _labels(state)
    if pair is None:
        if len(labels) < 2:
            raise SpaceError("the Duan variance needs two modes")
        pair = labels[:2]
    if len(pair) != 2 or pair[0] == pair[1]:
        raise SpaceError(f"need two distinct modes, got {tuple(pair)}")
    return pair[0], pair[1]


def _gaussian(state: State, labels: Sequence[str]) -> GaussianState:
    if isinstance(state, GaussianState):
        return state.marginal(labels)
    return gaussian_from_fock(state, labels)


def duan_variance(state: State, pair: Sequence[str] | None = None) -> DuanResult:
    """Total EPR variance for both sign conventions of the quadrature pair."""
    i, j = _pair(state, pair)
    s = _gaussian(state, (i, j)).cov
    x1, p1, x2, p2 = 0, 1, 2, 3
    base = s[x1, x1] + s[x2, x2] + s[p1, p1] + s[p2, p2]
    cross = 2 * (s[x1, x2] - s[p1, p2])
    return DuanResult(float(base - cross), float(base + cross))


def fidelity_with_tmsv(state: State, zeta: float, sign: int = 1, pair: Sequence[str] | None = None) -> float:
    """Overlap <tmsv| rho |tmsv> with the ideal two-mode squeezed vacuum on ``pair``."""
    i, j = _pair(state, pair)
    if isinstance(state, GaussianState):
        g = state.marginal((i, j))
        if np.max(np.abs(g.mean), initial=0.0) > MEAN_TOL:
            raise ValueError("Gaussian fidelity formula here requires a zero-mean state")
        return gaussian_fidelity_pure(g.cov, tmsv_cov(zeta, sign))
    labels = state.space.labels
    rho = state if labels == (i, j) else state.ptrace((i, j))
    target = tmsv_state(make_space(rho.space.dims, (i, j)), zeta, sign, tail_tol=1.0)
    psi = target.data
    if rho.is_pure_vector:
        return float(abs(np.vdot(psi, rho.data)) ** 2)
    return float(np.real(np.vdot(psi, rho.data @ psi)))


def gaussian_fidelity_pure(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    """Fidelity of two zero-mean Gaussian states, one of which is pure (vacuum = I/2)."""
    return float(1.0 / np.sqrt(np.linalg.det(cov_a + cov_b)))


def occupations(state: State) -> dict[str, float]:
    """Mean excitation number of every mode."""
    if isinstance(state, GaussianState):
        out = {}
        for k, lb in enumerate(state.labels):
            x, p = 2 * k, 2 * k + 1
            second = state.cov[x, x] + state.cov[p, p] + state.mean[x] ** 2 + state.mean[p] ** 2
            out[lb] = float((second - 1.0) / 2.0)
        return out
    space = state.space
    if state.is_pure_vector:
        probs = np.abs(state.data) ** 2
    else:
        probs = np.real(np.diag(state.data))
    occ = space.occupations()
    return {lb: float(probs @ occ[:, k]) for k, lb in enumerate(space.labels)}


def purity(state: State) -> float:
    if isinstance(state, GaussianState):
        return float(1.0 / (2**state.n_modes * np.sqrt(np.linalg.det(state.cov))))
    if state.is_pure_vector:
        return float(np.vdot(state.data, state.data).real ** 2)
    rho = state.data
    return float(np.real(np.vdot(rho, rho)))


def trace_distance(a: QuantumState, b: QuantumState) -> float:
    """Half the trace norm of the difference of two states on the same space."""
    if a.space != b.space:
        raise SpaceError("states live on different spaces")
    diff = a.density() - b.density()
    ev = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return float(0.5 * np.sum(np.abs(ev)))
