"""Fock-space master-equation integration.

The generator is

    d rho/dt = -i [H, rho] + sum_k (r_k / 2)(2 L_k rho L_k^dag - L_k^dag L_k rho - rho L_k^dag L_k)

with hbar = 1. Three integrators are available:

``rk4``
    fixed-step RK4 on the dense density matrix (no superoperator);
``expm``
    exact action of the exponentiated sparse Liouvillian on the vectorized state;
``bdf``
    implicit adaptive BDF on the sparse Liouvillian, for stiff problems such as
    a strongly damped resonator.

The sparse paths restrict the vectorized state to a conserved charge sector
when one exists: if ``H`` conserves ``Q = sum q_k n_k`` and every jump operator
shifts ``Q`` by a fixed amount, the coherence order ``Q(i) - Q(j)`` of each
matrix element is conserved and only the sector occupied by ``rho0`` evolves.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from .errors import ConvergenceError, RegimeError, SpaceError, SpecError, StepSizeError
from .metrics import trace_distance
from .fock import MAX_EIGCHECK_DIM, FockSpace, Operator, QuantumState, make_space, vacuum
from .model import (
    CouplingKind,
    LocalChannel,
    Mode,
    QuadraticCoupling,
    Role,
    SystemSpec,
    bogoliubov_channels,
    compile,
    cooling_rate,
)

METHODS = ("rk4", "expm", "bdf")


@dataclass(frozen=True)
class SolverOptions:
    method: str = "rk4"
    step: float | None = None  # rk4 step; None picks 0.02 / omega_max
    stride: int = 32  # rk4 steps between steady-state checks
    trace_tol: float = 1e-7
    rtol: float = 1e-8  # bdf
    atol: float = 1e-11  # bdf
    reduce_sectors: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass(frozen=True)
class StepDiagnostics:
    trace_drift: float
    min_eigenvalue: float  # nan when not sampled
    step: float


@dataclass
class EvolutionResult:
    times: np.ndarray
    states: list[QuantumState]
    diagnostics: list[StepDiagnostics]
    warnings: list[str] = field(default_factory=list)

    def observables(self, fns: Mapping[str, Callable[[QuantumState], float]]) -> dict[str, np.ndarray]:
        return {name: np.array([fn(s) for s in self.states]) for name, fn in fns.items()}

    def to_csv(self, fns: Mapping[str, Callable[[QuantumState], float]]) -> str:
        cols = self.observables(fns)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *cols])
        for k, t in enumerate(self.times):
            w.writerow([f"{t:.12g}", *(f"{cols[c][k]:.12g}" for c in cols)])
        return buf.getvalue()

    def to_json(self, include_states: bool = False) -> str:
        obj = {
            "times": [float(t) for t in self.times],
            "diagnostics": [
                {"trace_drift": d.trace_drift, "min_eigenvalue": d.min_eigenvalue, "step": d.step}
                for d in self.diagnostics
            ],
            "warnings": list(self.warnings),
        }
        if include_states:
            obj["states"] = [s.to_dict() for s in self.states]
        return json.dumps(obj, allow_nan=True)

    @property
    def final(self) -> QuantumState:
        return self.states[-1]


# -- generator assembly ----------------------------------------------------------


def _sparse(op: Operator) -> sp.csr_matrix:
    return op.sparse().astype(complex)


def liouvillian(H: sp.spmatrix, jumps: Sequence[tuple[sp.spmatrix, float]]) -> sp.csr_matrix:
    """Row-major vectorized generator: vec(A rho B) = (A kron B^T) vec(rho)."""
    d = H.shape[0]
    eye = sp.identity(d, dtype=complex, format="csr")
    out = -1j * (sp.kron(H, eye) - sp.kron(eye, H.T))
    for L, r in jumps:
        LdL = (L.conj().T @ L).tocsr()
        out = out + r * (sp.kron(L, L.conj()) - 0.5 * sp.kron(LdL, eye) - 0.5 * sp.kron(eye, LdL.T))
    return out.tocsr()


def find_charge(space: FockSpace, H: sp.spmatrix, jumps: Sequence[sp.spmatrix]) -> np.ndarray | None:
    """Integer weights q in {-1, 0, 1}^N of a charge conserved by H and shifted rigidly by each jump.

    Among valid choices the one splitting the space into the smallest sectors
    is returned; ``None`` if only the trivial charge works.
    """
    occ = space.occupations()
    hr, hc = H.nonzero()
    jumps_nz = [J.nonzero() for J in jumps]
    best, best_size = None, None
    for q in itertools.product((-1, 0, 1), repeat=space.n_modes):
        if not any(q):
            continue
        Q = occ @ np.asarray(q)
        if np.any(Q[hr] != Q[hc]):
            continue
        ok = True
        for r, c in jumps_nz:
            if len(r) and np.ptp(Q[r] - Q[c]) != 0:
                ok = False
                break
        if not ok:
            continue
        _, counts = np.unique(Q, return_counts=True)
        size = int(np.sum(counts**2))
        if best_size is None or size < best_size:
            best, best_size = np.asarray(q), size
    return best


class _Generator:
    """Compiled dynamics on a Fock space, shared by the integrators."""

    def __init__(self, H: Operator, channels: Sequence[tuple[Operator, float]], opts: SolverOptions):
        if not H.is_hermitian(1e-10):
            raise SpecError("Hamiltonian is not Hermitian")
        for L, r in channels:
            if L.space != H.space:
                raise SpaceError("jump operator and Hamiltonian live on different spaces")
            if not (np.isfinite(r) and r >= 0):
                raise SpecError(f"invalid channel rate {r}")
        self.space = H.space
        self.opts = opts
        self.H = H
        self.channels = [(L, float(r)) for L, r in channels if r > 0]
        self._dense = None
        self._liouv: dict[tuple, sp.csr_matrix] = {}

    @property
    def dim(self) -> int:
        return self.space.total_dim

    # dense pieces for rk4
    def dense_parts(self):
        if self._dense is None:
            H = self.H.dense()
            K = -1j * H
            jumps = []
            for L, r in self.channels:
                Ld = L.dense()
                K = K - 0.5 * r * (Ld.conj().T @ Ld)
                jumps.append((Ld, r))
            self._dense = (K, jumps)
        return self._dense

    def omega_max(self) -> float:
        """Generator scale: Hamiltonian spectral radius and dissipator strength."""
        H = self.H.dense()
        vals = [float(np.max(np.abs(np.linalg.eigvalsh(H)), initial=0.0))]
        for L, r in self.channels:
            Ld = L.dense()
            vals.append(r)
            vals.append(0.5 * r * float(np.linalg.eigvalsh(Ld.conj().T @ Ld)[-1]))
        return max(vals)

    def rk4_step(self) -> float:
        if self.opts.step is not None:
            return self.opts.step
        w = self.omega_max()
        return 0.02 / w if w > 0 else np.inf

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        K, jumps = self.dense_parts()
        out = K @ rho + rho @ K.conj().T
        for L, r in jumps:
            out = out + r * (L @ rho @ L.conj().T)
        return out

    def rk4_advance(self, rho: np.ndarray, dt: float, h: float) -> tuple[np.ndarray, float]:
        n = max(1, int(np.ceil(dt / h - 1e-9))) if np.isfinite(h) else 1
        hh = dt / n
        for _ in range(n):
            k1 = self.rhs(rho)
            k2 = self.rhs(rho + 0.5 * hh * k1)
            k3 = self.rhs(rho + 0.5 * hh * k2)
            k4 = self.rhs(rho + hh * k3)
            rho = rho + hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return rho, hh

    # sparse pieces for expm / bdf
    def sector(self, rho0: np.ndarray) -> np.ndarray | None:
        """Flat vec indices of the conserved sector containing rho0, or None for the full space."""
        if not self.opts.reduce_sectors:
            return None
        q = find_charge(self.space, self.H.sparse(), [L.sparse() for L, _ in self.channels])
        if q is None:
            return None
        Q = self.space.occupations() @ q
        order = Q[:, None] - Q[None, :]
        support = np.abs(rho0) > 0
        orders = np.unique(order[support])
        if len(orders) != 1:
            return None
        return np.flatnonzero(order.ravel() == orders[0])

    def liouvillian(self, idx: np.ndarray | None) -> sp.csr_matrix:
        key = ("full",) if idx is None else (len(idx), int(idx[0]), int(idx[-1]))
        if key not in self._liouv:
            Lv = liouvillian(_sparse(self.H), [(_sparse(L), r) for L, r in self.channels])
            if idx is not None:
                Lv = Lv[idx][:, idx]
            self._liouv[key] = Lv.tocsr()
        return self._liouv[key]


def _restore(vec: np.ndarray, idx: np.ndarray | None, d: int) -> np.ndarray:
    if idx is None:
        return vec.reshape(d, d)
    full = np.zeros(d * d, dtype=complex)
    full[idx] = vec
    return full.reshape(d, d)


def _diagnose(rho: np.ndarray, step: float, opts: SolverOptions, t: float) -> StepDiagnostics:
    if not np.all(np.isfinite(rho)):
        raise StepSizeError(f"state diverged at t={t:.6g}; reduce the step")
    size = float(np.max(np.abs(rho)))
    if size > 1.0 + opts.trace_tol:
        raise StepSizeError(f"matrix element {size:.3g} > 1 at t={t:.6g}; the integrator is unstable, reduce the step")
    drift = abs(float(np.trace(rho).real) - 1.0)
    if drift > opts.trace_tol:
        raise StepSizeError(f"trace drift {drift:.3g} at t={t:.6g} exceeds {opts.trace_tol:g}; reduce the step")
    lo = float("nan")
    if rho.shape[0] <= MAX_EIGCHECK_DIM // 4:
        lo = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    return StepDiagnostics(drift, lo, float(step))


def _as_density(rho0: QuantumState) -> np.ndarray:
    return np.array(rho0.density(), dtype=complex)


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) == 0 or t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must start at 0 and increase strictly")
    return t


def _trusted(space: FockSpace, rho: np.ndarray) -> QuantumState:
    return QuantumState(space, 0.5 * (rho + rho.conj().T), validate=False)


def evolve(
    H: Operator,
    channels: Sequence[tuple[Operator, float]],
    rho0: QuantumState,
    t_grid: Sequence[float],
    opts: SolverOptions | None = None,
) -> EvolutionResult:
    """Density matrices at every time of ``t_grid`` (starting at 0)."""
    opts = opts or SolverOptions()
    if rho0.space != H.space:
        raise SpaceError("initial state and Hamiltonian live on different spaces")
    gen = _Generator(H, channels, opts)
    t = _check_grid(t_grid)
    rho = _as_density(rho0)
    d = gen.dim
    states = [_trusted(gen.space, rho)]
    diags = [_diagnose(rho, 0.0, opts, 0.0)]

    if opts.method == "rk4":
        h = gen.rk4_step()
        for k in range(1, len(t)):
            rho, used = gen.rk4_advance(rho, t[k] - t[k - 1], h)
            diags.append(_diagnose(rho, used, opts, t[k]))
            states.append(_trusted(gen.space, rho))
    else:
        idx = gen.sector(rho)
        Lv = gen.liouvillian(idx)
        y = rho.ravel() if idx is None else rho.ravel()[idx]
        if opts.method == "expm":
            for k in range(1, len(t)):
                dt = t[k] - t[k - 1]
                y = expm_multiply(Lv * dt, y)
                rho = _restore(y, idx, d)
                diags.append(_diagnose(rho, dt, opts, t[k]))
                states.append(_trusted(gen.space, rho))
        else:
            sol = _bdf(Lv, y, t, opts)
            for k in range(1, len(t)):
                rho = _restore(sol[:, k], idx, d)
                diags.append(_diagnose(rho, t[k] - t[k - 1], opts, t[k]))
                states.append(_trusted(gen.space, rho))
    return EvolutionResult(t, states, diags)


def _bdf(Lv: sp.csr_matrix, y0: np.ndarray, t: np.ndarray, opts: SolverOptions) -> np.ndarray:
    Lc = Lv.tocsc()
    sol = solve_ivp(
        lambda _t, y: Lc @ y,
        (float(t[0]), float(t[-1])),
        y0.astype(complex),
        method="BDF",
        jac=Lc,
        t_eval=t,
        rtol=opts.rtol,
        atol=opts.atol,
    )
    if sol.status != 0:
        raise StepSizeError(f"BDF integration failed: {sol.message}")
    return sol.y


def propagate_pure(H: Operator, psi0: QuantumState, t_grid: Sequence[float]) -> list[QuantumState]:
    """Schrodinger evolution exp(-iHt)|psi0> with the sparse Hamiltonian."""
    if not psi0.is_pure_vector:
        raise SpaceError("propagate_pure needs a state vector")
    if psi0.space != H.space:
        raise SpaceError("state and Hamiltonian live on different spaces")
    t = _check_grid(t_grid)
    G = (-1j * H.sparse()).tocsr()
    psi = np.array(psi0.data)
    out = [psi0]
    for k in range(1, len(t)):
        psi = expm_multiply(G * (t[k] - t[k - 1]), psi)
        out.append(QuantumState(H.space, psi, validate=False))
    return out


def _trace_norm(x: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (x + x.conj().T)))))


def steady_state(
    H: Operator,
    channels: Sequence[tuple[Operator, float]],
    rho0: QuantumState,
    opts: SolverOptions | None = None,
    tol: float = 1e-8,
    rate: float | None = None,
    horizon: float | None = None,
) -> QuantumState:
    """Integrate until the trace-norm change per unit ``rate`` time drops below ``tol``.

    ``rate`` is the slow relaxation rate used to express time (default: the
    smallest positive channel rate); ``horizon`` defaults to ``50 / rate``.
    Systems without a unique attractor still converge here, to the fixed point
    selected by ``rho0``; :class:`ConvergenceError` means no fixed point was
    approached within the horizon.
    """
    opts = opts or SolverOptions()
    gen = _Generator(H, channels, opts)
    if not gen.channels:
        raise SpecError("steady_state needs at least one channel with a positive rate")
    if rate is None:
        rate = min(r for _, r in gen.channels)
    horizon = 50.0 / rate if horizon is None else horizon
    rho = _as_density(rho0)
    d = gen.dim

    if opts.method == "rk4":
        h = gen.rk4_step()
        chunk = opts.stride * h

        def advance(r):
            return gen.rk4_advance(r, chunk, h)[0]

    else:
        idx = gen.sector(rho)
        Lv = gen.liouvillian(idx)
        chunk = min(0.25 / rate, horizon)

        def advance(r):
            y = r.ravel() if idx is None else r.ravel()[idx]
            if opts.method == "expm":
                y = expm_multiply(Lv * chunk, y)
            else:
                y = _bdf(Lv, y, np.array([0.0, chunk]), opts)[:, -1]
            return _restore(y, idx, d)

    t = 0.0
    while t < horizon:
        new = advance(rho)
        t += chunk
        _diagnose(new, chunk, opts, t)
        change = _trace_norm(new - rho) / (rate * chunk)
        rho = new
        if change < tol:
            return _trusted(gen.space, rho)
    raise ConvergenceError(
        f"no steady state within horizon {horizon:.4g} (last change {change:.3g} per unit rate time)"
    )


def stroboscopic_evolve(
    H_A: Operator,
    H_B: Operator,
    channels: Sequence[tuple[Operator, float]],
    delta_t: float,
    n_cycles: int,
    rho0: QuantumState,
    opts: SolverOptions | None = None,
    gamma_c: float | None = None,
) -> EvolutionResult:
    """Alternate H_A and H_B for ``delta_t`` each; sample after every full cycle."""
    opts = opts or SolverOptions()
    if not delta_t > 0 or n_cycles < 1:
        raise ValueError("need delta_t > 0 and n_cycles >= 1")
    notes = []
    if gamma_c is not None and delta_t * gamma_c > 0.1:
        msg = f"delta_t * Gamma_c = {delta_t * gamma_c:.3g} > 0.1; the alternation is not fast"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    gens = [_Generator(H_A, channels, opts), _Generator(H_B, channels, opts)]
    rho = _as_density(rho0)
    d = gens[0].dim
    states = [_trusted(gens[0].space, rho)]
    diags = [_diagnose(rho, 0.0, opts, 0.0)]
    if opts.method == "rk4":
        hs = [g.rk4_step() for g in gens]

        def half(k, r):
            return gens[k].rk4_advance(r, delta_t, hs[k])[0]

    else:
        # the two halves generally conserve different charges, so use the full space
        Lvs = [g.liouvillian(None) for g in gens]

        def half(k, r):
            if opts.method == "expm":
                y = expm_multiply(Lvs[k] * delta_t, r.ravel())
            else:
                y = _bdf(Lvs[k], r.ravel(), np.array([0.0, delta_t]), opts)[:, -1]
            return y.reshape(d, d)

    for c in range(n_cycles):
        rho = half(1, half(0, rho))
        t = 2 * delta_t * (c + 1)
        diags.append(_diagnose(rho, delta_t, opts, t))
        states.append(_trusted(gens[0].space, rho))
    times = 2 * delta_t * np.arange(n_cycles + 1)
    return EvolutionResult(times, states, diags, notes)


@dataclass(frozen=True)
class AdiabaticReport:
    theta1: float
    theta2: float
    gamma_m: float
    gamma_c: float
    times: np.ndarray
    distances: np.ndarray

    @property
    def max_distance(self) -> float:
        return float(np.max(self.distances))


def _resonator_system(theta1: float, theta2: float, gamma_m: float) -> SystemSpec:
    couplings = [QuadraticCoupling("c2", "m", CouplingKind.BEAM_SPLITTER, theta2)]
    if theta1 > 0:
        couplings.insert(0, QuadraticCoupling("c1", "m", CouplingKind.TWO_MODE_SQUEEZE, theta1))
    modes = (Mode("c1", Role.CAVITY), Mode("c2", Role.CAVITY), Mode("m", Role.MECHANICAL))
    return SystemSpec(modes, tuple(couplings), (LocalChannel("m", gamma_m),), name="resonator_cooled")


def adiabatic_equivalence_check(
    theta1: float,
    theta2: float,
    gamma_m: float,
    t_grid: Sequence[float],
    dims: Sequence[int] = (8, 8, 4),
    opts: SolverOptions | None = None,
    ratio: float = 10.0,
) -> AdiabaticReport:
    """Compare the cavity pair of the damped-resonator system with its eliminated form.

    Both start in vacuum; the report holds the trace distance between the
    reduced two-cavity state of the full model and the effective model at
    every time of ``t_grid``.
    """
    if not gamma_m >= ratio * max(theta1, theta2):
        raise RegimeError(f"adiabatic elimination needs gamma_m >= {ratio:g} max(theta), got {gamma_m}")
    t = _check_grid(t_grid)
    if opts is None:
        # the full model is stiff once gamma_m t is large
        opts = SolverOptions(method="expm" if gamma_m * t[-1] < 2000 else "bdf")
    full_spec = _resonator_system(theta1, theta2, gamma_m)
    full_space = make_space(dims, ("c1", "c2", "m"))
    H, chans = compile(full_spec, full_space, sparse=True)
    full = evolve(H, chans, vacuum(full_space), t, opts)

    gc = cooling_rate(theta1, theta2, gamma_m)
    d, _ = bogoliubov_channels(theta1, theta2, gc)
    eff_spec = SystemSpec((Mode("c1"), Mode("c2")), (), (d,), name="eliminated")
    eff_space = make_space(dims[:2], ("c1", "c2"))
    He, che = compile(eff_spec, eff_space, sparse=True)
    eff = evolve(He, che, vacuum(eff_space), t, opts)

    dist = np.array([trace_distance(f.ptrace(("c1", "c2")), e) for f, e in zip(full.states, eff.states)])
    return AdiabaticReport(theta1, theta2, gamma_m, gc, t, dist)
