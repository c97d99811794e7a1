"""Truncated multimode Fock space: mode operators, canonical states, expectations.

Basis ordering is row-major over the listed modes: the last mode varies
fastest, so ``index = ((n_0 * d_1) + n_1) * d_2 + n_2`` for three modes. This
matches ``np.kron(A_0, np.kron(A_1, A_2))`` and is fixed so serialized states
stay portable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import reduce
from math import prod
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InvalidStateError, SpaceError, TruncationError

DEFAULT_TAIL_TOL = 1e-6
STATE_TOL = 1e-9
EIG_TOL = 1e-8
# Eigenvalue checks on density matrices above this size are skipped.
MAX_EIGCHECK_DIM = 2048


@dataclass(frozen=True)
class FockSpace:
    dims: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        labels = tuple(str(lb) for lb in self.labels)
        if not dims:
            raise SpaceError("a Fock space needs at least one mode")
        if any(d < 2 for d in dims):
            raise SpaceError(f"every truncation dimension must be >= 2, got {dims}")
        if len(labels) != len(dims):
            raise SpaceError(f"{len(labels)} labels for {len(dims)} modes")
        if len(set(labels)) != len(labels):
            raise SpaceError(f"duplicate mode labels in {labels}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @property
    def total_dim(self) -> int:
        return prod(self.dims)

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SpaceError(f"unknown mode label {label!r}; space has {self.labels}") from None

    def subspace(self, labels: Sequence[str]) -> "FockSpace":
        idx = [self.index(lb) for lb in labels]
        return FockSpace(tuple(self.dims[i] for i in idx), tuple(labels))

    def occupations(self) -> np.ndarray:
        """Integer array of shape (total_dim, n_modes) with the Fock label of each basis index."""
        grids = np.unravel_index(np.arange(self.total_dim), self.dims)
        return np.stack(grids, axis=1)

    def basis_index(self, occupation: Sequence[int]) -> int:
        if len(occupation) != self.n_modes:
            raise SpaceError(f"occupation {tuple(occupation)} does not match {self.n_modes} modes")
        for n, d, lb in zip(occupation, self.dims, self.labels):
            if not 0 <= n < d:
                raise SpaceError(f"occupation {n} outside truncation {d} of mode {lb!r}")
        return int(np.ravel_multi_index(tuple(occupation), self.dims))


def make_space(dims: Sequence[int], labels: Sequence[str]) -> FockSpace:
    return FockSpace(tuple(dims), tuple(labels))


@dataclass(frozen=True, eq=False)
class Operator:
    """Operator on a Fock space.

    ``matrix`` is a dense complex array unless the operator was built with
    ``sparse=True``; very large spaces (pure-state propagation, superoperator
    assembly) use the CSR form.
    """

    space: FockSpace
    matrix: np.ndarray | sp.csr_matrix

    def __post_init__(self):
        m = self.matrix
        n = self.space.total_dim
        if m.shape != (n, n):
            raise SpaceError(f"operator of shape {m.shape} on a space of dimension {n}")

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def sparse(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.matrix)

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T.tocsr() if self.is_sparse else self.matrix.conj().T)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        diff = self.matrix - self.matrix.conj().T
        if sp.issparse(diff):
            return diff.nnz == 0 or abs(diff).max() <= tol
        return bool(np.max(np.abs(diff), initial=0.0) <= tol)

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise SpaceError("operators live on different spaces")

    def __add__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, _combine(self.matrix, other.matrix, 1.0))
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, _combine(self.matrix, other.matrix, -1.0))
        return NotImplemented

    def __neg__(self):
        return Operator(self.space, -self.matrix)

    def __mul__(self, scalar):
        if isinstance(scalar, Operator):
            return NotImplemented
        return Operator(self.space, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            out = self.matrix @ other.matrix
            if sp.issparse(out):
                out = out.tocsr()
            return Operator(self.space, out)
        return NotImplemented


def _combine(a, b, sign):
    if sp.issparse(a) and sp.issparse(b):
        return (a + sign * b).tocsr()
    if sp.issparse(a):
        a = a.toarray()
    if sp.issparse(b):
        b = b.toarray()
    return a + sign * b


def _single_mode_lowering(d: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, d, dtype=float)), 1, shape=(d, d), format="csr", dtype=complex)


def _embed(space: FockSpace, k: int, local: sp.spmatrix) -> sp.csr_matrix:
    factors = [local if i == k else sp.identity(d, dtype=complex, format="csr") for i, d in enumerate(space.dims)]
    return reduce(lambda x, y: sp.kron(x, y, format="csr"), factors)


def annihilation(space: FockSpace, label: str, sparse: bool = False) -> Operator:
    """Lowering operator of mode ``label`` with sqrt(n) on the superdiagonal."""
    k = space.index(label)
    m = _embed(space, k, _single_mode_lowering(space.dims[k]))
    return Operator(space, m if sparse else m.toarray())


def creation(space: FockSpace, label: str, sparse: bool = False) -> Operator:
    return annihilation(space, label, sparse).dag()


def number(space: FockSpace, label: str, sparse: bool = False) -> Operator:
    k = space.index(label)
    local = sp.diags(np.arange(space.dims[k], dtype=complex), 0, format="csr")
    m = _embed(space, k, local)
    return Operator(space, m if sparse else m.toarray())


def identity(space: FockSpace, sparse: bool = False) -> Operator:
    m = sp.identity(space.total_dim, dtype=complex, format="csr")
    return Operator(space, m if sparse else m.toarray())


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure vector (1-D) or density matrix (2-D) on a Fock space."""

    space: FockSpace
    data: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        object.__setattr__(self, "data", data)
        n = self.space.total_dim
        if data.ndim == 1:
            if data.shape != (n,):
                raise SpaceError(f"state vector of length {data.shape[0]} on a space of dimension {n}")
            if self.validate:
                norm = np.linalg.norm(data)
                if abs(norm - 1.0) > STATE_TOL:
                    raise InvalidStateError(f"state vector norm {norm:.12g} differs from 1")
        elif data.ndim == 2:
            if data.shape != (n, n):
                raise SpaceError(f"density matrix of shape {data.shape} on a space of dimension {n}")
            if self.validate:
                _validate_density(data)
        else:
            raise SpaceError("state data must be a vector or a square matrix")

    @property
    def is_pure_vector(self) -> bool:
        return self.data.ndim == 1

    def density(self) -> np.ndarray:
        if self.is_pure_vector:
            return np.outer(self.data, self.data.conj())
        return self.data

    def as_density(self) -> "QuantumState":
        if not self.is_pure_vector:
            return self
        return QuantumState(self.space, self.density(), validate=False)

    def trace(self) -> float:
        if self.is_pure_vector:
            return float(np.vdot(self.data, self.data).real)
        return float(np.trace(self.data).real)

    def ptrace(self, keep: Sequence[str]) -> "QuantumState":
        """Reduced density matrix on the modes ``keep`` (in the order given)."""
        keep_idx = [self.space.index(lb) for lb in keep]
        sub = self.space.subspace(keep)
        dims = self.space.dims
        nm = len(dims)
        if self.is_pure_vector:
            psi = self.data.reshape(dims)
            traced = [i for i in range(nm) if i not in keep_idx]
            psi = np.moveaxis(psi, keep_idx + traced, list(range(nm)))
            psi = psi.reshape(sub.total_dim, -1)
            rho = psi @ psi.conj().T
        else:
            rho = self.data.reshape(dims + dims)
            letters = "abcdefghijklmnopqrstuvwxyz"
            row = list(letters[:nm])
            col = list(letters[nm : 2 * nm])
            for i in range(nm):
                if i not in keep_idx:
                    col[i] = row[i]
            out = "".join(row[i] for i in keep_idx) + "".join(col[i] for i in keep_idx)
            rho = np.einsum("".join(row) + "".join(col) + "->" + out, rho)
            rho = rho.reshape(sub.total_dim, sub.total_dim)
        return QuantumState(sub, rho, validate=False)

    def to_dict(self) -> dict:
        kind = "pure" if self.is_pure_vector else "density"
        return {
            "kind": kind,
            "dims": list(self.space.dims),
            "labels": list(self.space.labels),
            "data": _pack(self.data),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _validate_density(rho: np.ndarray) -> None:
    herm = np.max(np.abs(rho - rho.conj().T), initial=0.0)
    if herm > STATE_TOL:
        raise InvalidStateError(f"density matrix not Hermitian (deviation {herm:.3g})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > STATE_TOL:
        raise InvalidStateError(f"density matrix trace {tr:.12g} differs from 1")
    if rho.shape[0] <= MAX_EIGCHECK_DIM:
        lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
        if lo < -EIG_TOL:
            raise InvalidStateError(f"density matrix has negative eigenvalue {lo:.3g}")


def _pack(arr: np.ndarray) -> list:
    flat = np.asarray(arr, dtype=complex).ravel()
    return [[float(z.real), float(z.imag)] for z in flat]


def _unpack(pairs, shape) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(shape)


def operator_to_dict(op: Operator) -> dict:
    return {
        "kind": "operator",
        "dims": list(op.space.dims),
        "labels": list(op.space.labels),
        "data": _pack(op.dense()),
    }


def from_dict(obj: Mapping) -> QuantumState | Operator:
    """Inverse of ``QuantumState.to_dict`` / ``operator_to_dict``."""
    space = make_space(obj["dims"], obj["labels"])
    n = space.total_dim
    kind = obj["kind"]
    if kind == "pure":
        return QuantumState(space, _unpack(obj["data"], (n,)))
    if kind == "density":
        return QuantumState(space, _unpack(obj["data"], (n, n)))
    if kind == "operator":
        return Operator(space, _unpack(obj["data"], (n, n)))
    raise SpaceError(f"unknown serialized kind {kind!r}")


def from_json(text: str) -> QuantumState | Operator:
    return from_dict(json.loads(text))


def _per_mode(space: FockSpace, values, name: str) -> list[float]:
    if isinstance(values, Mapping):
        unknown = set(values) - set(space.labels)
        if unknown:
            raise SpaceError(f"unknown mode labels in {name}: {sorted(unknown)}")
        return [float(values.get(lb, 0.0)) for lb in space.labels]
    vals = [float(v) for v in values]
    if len(vals) != space.n_modes:
        raise SpaceError(f"{name} has {len(vals)} entries for {space.n_modes} modes")
    return vals


def vacuum(space: FockSpace) -> QuantumState:
    psi = np.zeros(space.total_dim, dtype=complex)
    psi[0] = 1.0
    return QuantumState(space, psi)


def fock_state(space: FockSpace, occupation) -> QuantumState:
    occ = [int(round(v)) for v in _per_mode(space, occupation, "occupation")]
    psi = np.zeros(space.total_dim, dtype=complex)
    psi[space.basis_index(occ)] = 1.0
    return QuantumState(space, psi)


def thermal_distribution(nbar: float, dim: int) -> np.ndarray:
    """Geometric populations n̄^n / (1 + n̄)^(n+1) for n < dim (not renormalized)."""
    if nbar == 0:
        p = np.zeros(dim)
        p[0] = 1.0
        return p
    n = np.arange(dim)
    return np.exp(n * np.log(nbar) - (n + 1) * np.log1p(nbar))


def thermal_state(space: FockSpace, occupations, tail_tol: float = DEFAULT_TAIL_TOL) -> QuantumState:
    """Product of per-mode thermal states, renormalized after truncation."""
    nbars = _per_mode(space, occupations, "occupations")
    diag = np.ones(1)
    for nbar, d, lb in zip(nbars, space.dims, space.labels):
        if nbar < 0:
            raise SpaceError(f"negative mean occupation {nbar} for mode {lb!r}")
        tail = (nbar / (1.0 + nbar)) ** d if nbar > 0 else 0.0
        if tail > tail_tol:
            raise TruncationError(
                f"thermal tail mass {tail:.3g} beyond truncation {d} of mode {lb!r} exceeds {tail_tol:g}",
                mode=lb,
                tail=tail,
            )
        p = thermal_distribution(nbar, d)
        diag = np.kron(diag, p / p.sum())
    return QuantumState(space, np.diag(diag.astype(complex)))


def tmsv_state(space: FockSpace, zeta: float, sign: int = 1, tail_tol: float = DEFAULT_TAIL_TOL) -> QuantumState:
    """Two-mode squeezed vacuum sum_n (sign tanh zeta)^n / cosh zeta |n, n>."""
    if space.n_modes != 2:
        raise SpaceError("tmsv_state needs a two-mode space")
    if zeta < 0:
        raise SpaceError("squeeze parameter must be non-negative")
    if sign not in (1, -1):
        raise SpaceError("sign must be +1 or -1")
    lam = np.tanh(zeta)
    nmax = min(space.dims)
    tail = lam ** (2 * nmax)
    if tail > tail_tol:
        raise TruncationError(
            f"two-mode squeezed tail mass {tail:.3g} beyond truncation {nmax} exceeds {tail_tol:g}",
            mode=space.labels[int(np.argmin(space.dims))],
            tail=tail,
        )
    psi = np.zeros(space.total_dim, dtype=complex)
    for n in range(nmax):
        psi[space.basis_index((n, n))] = (sign * lam) ** n / np.cosh(zeta)
    psi /= np.linalg.norm(psi)
    return QuantumState(space, psi)


def coherent_state(space: FockSpace, amplitudes, tail_tol: float = DEFAULT_TAIL_TOL) -> QuantumState:
    """Product of single-mode coherent states, renormalized after truncation."""
    if isinstance(amplitudes, Mapping):
        alphas = [complex(amplitudes.get(lb, 0.0)) for lb in space.labels]
    else:
        alphas = [complex(a) for a in amplitudes]
    psi = np.ones(1, dtype=complex)
    for alpha, d, lb in zip(alphas, space.dims, space.labels):
        n = np.arange(d)
        logfact = np.cumsum(np.log(np.maximum(n, 1)))
        amp = np.exp(-abs(alpha) ** 2 / 2 - 0.5 * logfact) * np.power(alpha, n)
        tail = 1.0 - float(np.sum(np.abs(amp) ** 2))
        if tail > tail_tol:
            raise TruncationError(f"coherent tail mass {tail:.3g} beyond truncation of mode {lb!r}", mode=lb, tail=tail)
        psi = np.kron(psi, amp / np.linalg.norm(amp))
    return QuantumState(space, psi)


def expectation(op: Operator, state: QuantumState) -> complex:
    if op.space != state.space:
        raise SpaceError("operator and state live on different spaces")
    m = op.matrix
    if state.is_pure_vector:
        psi = state.data
        return complex(np.vdot(psi, m @ psi))
    rho = state.data
    if sp.issparse(m):
        return complex(m.multiply(rho.T).sum())
    return complex(np.einsum("ij,ji->", m, rho))


def top_level_population(state: QuantumState) -> dict[str, float]:
    """Population of the highest retained Fock level, per mode (truncation audit)."""
    space = state.space
    if state.is_pure_vector:
        probs = np.abs(state.data) ** 2
    else:
        probs = np.real(np.diag(state.data))
    occ = space.occupations()
    return {lb: float(probs[occ[:, k] == space.dims[k] - 1].sum()) for k, lb in enumerate(space.labels)}
