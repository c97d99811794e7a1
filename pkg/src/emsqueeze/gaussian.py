"""Gaussian moment engine.

Quadratures are ordered ``(X_1, P_1, ..., X_N, P_N)`` with ``X = (a + a^dag)/sqrt 2``
and ``P = -i(a - a^dag)/sqrt 2``; the vacuum covariance is ``I/2``. For
quadratic Hamiltonians and linear jump operators the first and second moments
obey closed linear equations

    d<R>/dt = A <R>,        d(sigma)/dt = A sigma + sigma A^T + D,

which this module builds from a :class:`~emsqueeze.model.SystemSpec` and solves.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import InvalidStateError, NoSteadyStateError, SpaceError, StepSizeError, UnsupportedTermError
from .fock import QuantumState, annihilation
from .model import CollectiveChannel, CouplingKind, LocalChannel, QuadraticCoupling, SystemSpec

SQRT2 = np.sqrt(2.0)
SYM_TOL = 1e-12
UNCERTAINTY_TOL = 1e-8
# RK4 is stable on the negative real axis up to |h lambda| of about 2.78
RK4_STABLE = 2.5


def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True, eq=False)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray
    labels: tuple[str, ...]
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).copy()
        cov = np.asarray(self.cov, dtype=float).copy()
        labels = tuple(self.labels)
        n = len(labels)
        if mean.shape != (2 * n,) or cov.shape != (2 * n, 2 * n):
            raise SpaceError(f"moments of shape {mean.shape}, {cov.shape} do not match {n} modes")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > SYM_TOL * scale:
            raise InvalidStateError("covariance matrix is not symmetric")
        cov = 0.5 * (cov + cov.T)
        lo = np.linalg.eigvalsh(cov + 0.5j * symplectic_form(n))[0] if self.validate else 0.0
        if lo < -UNCERTAINTY_TOL * scale:
            raise InvalidStateError(f"covariance violates the uncertainty relation (eigenvalue {lo:.3g})")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "labels", labels)

    @property
    def n_modes(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SpaceError(f"unknown mode {label!r}; state has {self.labels}") from None

    def quadrature_indices(self, labels: Sequence[str]) -> list[int]:
        idx = []
        for lb in labels:
            k = self.index(lb)
            idx += [2 * k, 2 * k + 1]
        return idx

    def marginal(self, labels: Sequence[str]) -> "GaussianState":
        idx = self.quadrature_indices(labels)
        return GaussianState(self.mean[idx], self.cov[np.ix_(idx, idx)], tuple(labels), validate=self.validate)

    def tensor(self, other: "GaussianState") -> "GaussianState":
        return GaussianState(
            np.concatenate([self.mean, other.mean]),
            sla.block_diag(self.cov, other.cov),
            self.labels + other.labels,
        )

    def reorder(self, labels: Sequence[str]) -> "GaussianState":
        if sorted(labels) != sorted(self.labels):
            raise SpaceError(f"cannot reorder {self.labels} into {tuple(labels)}")
        return self.marginal(labels)

    def cov_csv(self) -> str:
        """Covariance matrix as CSV with a quadrature-name header."""
        names = [f"{q}_{lb}" for lb in self.labels for q in ("X", "P")]
        buf = io.StringIO()
        buf.write(",".join(names) + "\n")
        for row in self.cov:
            buf.write(",".join(f"{v:.12g}" for v in row) + "\n")
        return buf.getvalue()


def vacuum(labels: Sequence[str]) -> GaussianState:
    n = len(labels)
    return GaussianState(np.zeros(2 * n), 0.5 * np.eye(2 * n), tuple(labels))


def thermal(labels: Sequence[str], occupations) -> GaussianState:
    labels = tuple(labels)
    if isinstance(occupations, Mapping):
        nbar = [float(occupations.get(lb, 0.0)) for lb in labels]
    else:
        nbar = [float(v) for v in occupations]
    if len(nbar) != len(labels) or any(v < 0 for v in nbar):
        raise SpaceError("need one non-negative occupation per mode")
    diag = np.repeat(np.asarray(nbar) + 0.5, 2)
    return GaussianState(np.zeros(2 * len(labels)), np.diag(diag), labels)


def coherent(labels: Sequence[str], amplitudes) -> GaussianState:
    alphas = np.asarray([complex(a) for a in amplitudes])
    mean = np.empty(2 * len(alphas))
    mean[0::2] = SQRT2 * alphas.real
    mean[1::2] = SQRT2 * alphas.imag
    return GaussianState(mean, 0.5 * np.eye(2 * len(alphas)), tuple(labels))


def tmsv_cov(zeta: float, sign: int = 1) -> np.ndarray:
    c, s = np.cosh(2 * zeta), sign * np.sinh(2 * zeta)
    z = np.diag([1.0, -1.0])
    return 0.5 * np.block([[c * np.eye(2), s * z], [s * z, c * np.eye(2)]])


def tmsv(zeta: float, sign: int = 1, labels: Sequence[str] = ("c1", "c2")) -> GaussianState:
    """Gaussian form of sum_n (sign tanh zeta)^n / cosh zeta |n, n>."""
    if sign not in (1, -1):
        raise SpaceError("sign must be +1 or -1")
    return GaussianState(np.zeros(4), tmsv_cov(zeta, sign), tuple(labels))


# -- drift and diffusion ---------------------------------------------------


def _ladder_vector(n: int, k: int, dagger: bool) -> np.ndarray:
    """Coefficients c with a_k (or a_k^dag) = c^T R."""
    c = np.zeros(2 * n, dtype=complex)
    c[2 * k] = 1 / SQRT2
    c[2 * k + 1] = (-1j if dagger else 1j) / SQRT2
    return c


@dataclass(frozen=True, eq=False)
class DriftDiffusion:
    A: np.ndarray
    D: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        D = np.asarray(self.D, dtype=float)
        n = 2 * len(self.labels)
        if A.shape != (n, n) or D.shape != (n, n):
            raise SpaceError("drift/diffusion shapes do not match the mode count")
        if np.max(np.abs(D - D.T), initial=0.0) > 1e-10 * max(1.0, float(np.max(np.abs(D), initial=0.0))):
            raise InvalidStateError("diffusion matrix is not symmetric")
        D = 0.5 * (D + D.T)
        if n and np.linalg.eigvalsh(D)[0] < -1e-10 * max(1.0, float(np.max(np.abs(D)))):
            raise InvalidStateError("diffusion matrix is not positive semidefinite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n_modes(self) -> int:
        return len(self.labels)

    def is_hurwitz(self) -> bool:
        return bool(np.max(np.linalg.eigvals(self.A).real) < 0)

    def spectral_abscissa(self) -> float:
        return float(np.max(np.linalg.eigvals(self.A).real))


def hamiltonian_matrix(spec: SystemSpec) -> np.ndarray:
    """Real symmetric M with H = R^T M R / 2 (up to a constant)."""
    n = len(spec.labels)
    M = np.zeros((2 * n, 2 * n))
    for c in spec.couplings:
        if not isinstance(c, QuadraticCoupling):
            raise UnsupportedTermError(f"unsupported coupling {c!r}")
        i, j = spec.index(c.mode_i), spec.index(c.mode_j)
        u = np.exp(1j * c.phase) * _ladder_vector(n, i, True)
        if c.kind is CouplingKind.BEAM_SPLITTER:
            v = _ladder_vector(n, j, False)
        elif c.kind is CouplingKind.TWO_MODE_SQUEEZE:
            v = _ladder_vector(n, j, True)
        else:
            raise UnsupportedTermError(f"unsupported coupling kind {c.kind!r}")
        # (u.R)(v.R) + h.c. = R^T Re(u v^T + v u^T) R up to a constant
        M -= 2 * c.strength * np.real(np.outer(u, v) + np.outer(v, u))
    return M


def _jump_vectors(spec: SystemSpec) -> list[tuple[np.ndarray, float]]:
    n = len(spec.labels)
    out = []
    for ch in spec.channels:
        if isinstance(ch, LocalChannel):
            k = spec.index(ch.mode)
            out.append((_ladder_vector(n, k, False), ch.down_rate))
            if ch.up_rate > 0:
                out.append((_ladder_vector(n, k, True), ch.up_rate))
        elif isinstance(ch, CollectiveChannel):
            c = np.zeros(2 * n, dtype=complex)
            for lb, coef in ch.lowering:
                c += coef * _ladder_vector(n, spec.index(lb), False)
            for lb, coef in ch.raising:
                c += coef * _ladder_vector(n, spec.index(lb), True)
            out.append((c, ch.rate))
        else:
            raise UnsupportedTermError(f"unsupported channel {ch!r}")
    return out


def drift_diffusion(spec: SystemSpec) -> DriftDiffusion:
    n = len(spec.labels)
    om = symplectic_form(n)
    A = om @ hamiltonian_matrix(spec)
    D = np.zeros_like(A)
    for c, rate in _jump_vectors(spec):
        if rate == 0:
            continue
        cc = np.outer(c, c.conj())
        A -= rate * om @ cc.imag
        D += rate * om @ cc.real @ om.T
    return DriftDiffusion(A, D, spec.labels)


# -- time evolution ------------------------------------------------------------


def step_propagator(dd: DriftDiffusion, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-step maps: sigma -> F sigma F^T + Q and mean -> F mean.

    Van Loan's block exponential is evaluated on a short sub-step and the
    result is squared up; a single long-step exponential of the block matrix
    overflows once the drift has decayed by many e-folds.
    """
    n = dd.A.shape[0]
    norm = np.linalg.norm(dd.A, 1) + np.linalg.norm(dd.D, 1)
    k = int(np.ceil(np.log2(norm * dt / 0.5))) if norm * dt > 0.5 else 0
    h = dt / 2**k
    big = np.zeros((2 * n, 2 * n))
    big[:n, :n] = dd.A
    big[:n, n:] = dd.D
    big[n:, n:] = -dd.A.T
    E = sla.expm(big * h)
    F = E[:n, :n]
    Q = E[:n, n:] @ F.T
    Q = 0.5 * (Q + Q.T)
    for _ in range(k):
        Q = F @ Q @ F.T + Q
        Q = 0.5 * (Q + Q.T)
        F = F @ F
    return F, Q


def _rk4_step(dd: DriftDiffusion, mean, cov, h):
    A, D = dd.A, dd.D

    def f(s):
        return A @ s + s @ A.T + D

    k1 = f(cov)
    k2 = f(cov + 0.5 * h * k1)
    k3 = f(cov + 0.5 * h * k2)
    k4 = f(cov + h * k3)
    cov = cov + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    m1 = A @ mean
    m2 = A @ (mean + 0.5 * h * m1)
    m3 = A @ (mean + 0.5 * h * m2)
    m4 = A @ (mean + h * m3)
    mean = mean + h / 6 * (m1 + 2 * m2 + 2 * m3 + m4)
    return mean, cov


def _check_symmetry(cov: np.ndarray, t: float) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(cov))))
    asym = float(np.max(np.abs(cov - cov.T)))
    if asym > 1e-8 * scale or not np.all(np.isfinite(cov)):
        raise StepSizeError(f"covariance lost symmetry ({asym:.3g}) at t={t:.6g}; reduce the step")
    return 0.5 * (cov + cov.T)


class _Tracker:
    """Uncertainty check for propagated moments, scaled by the largest covariance seen so far.

    A state that passed through a strongly squeezed intermediate carries
    roundoff proportional to that peak, not to its current size.
    """

    def __init__(self, labels: tuple[str, ...], cov: np.ndarray):
        self.labels = labels
        self.omega = 0.5j * symplectic_form(len(labels))
        self.peak = max(1.0, float(np.max(np.abs(cov))))

    def state(self, mean: np.ndarray, cov: np.ndarray, t: float) -> GaussianState:
        self.peak = max(self.peak, float(np.max(np.abs(cov))))
        lo = np.linalg.eigvalsh(cov + self.omega)[0]
        if lo < -UNCERTAINTY_TOL * self.peak:
            raise StepSizeError(f"propagated covariance violates the uncertainty relation ({lo:.3g}) at t={t:.6g}")
        return GaussianState(mean, cov, self.labels, validate=False)


def evolve_moments(
    dd: DriftDiffusion,
    g0: GaussianState,
    t_grid: Sequence[float],
    method: str = "exact",
    step: float | None = None,
) -> list[GaussianState]:
    """Moments at each time in ``t_grid`` (which starts at 0 and increases).

    ``method="exact"`` applies the closed-form interval propagator;
    ``method="rk4"`` integrates the moment ODEs with fixed RK4 sub-steps
    (default step ``0.02 / max|eig A|``).
    """
    if g0.labels != dd.labels:
        raise SpaceError(f"state modes {g0.labels} differ from system modes {dd.labels}")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) == 0 or t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must start at 0 and increase strictly")
    mean, cov = np.array(g0.mean), np.array(g0.cov)
    out = [g0]
    track = _Tracker(dd.labels, cov)
    if method == "exact":
        cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        for k in range(1, len(t)):
            dt = float(t[k] - t[k - 1])
            key = round(dt, 12)
            if key not in cache:
                cache[key] = step_propagator(dd, dt)
            F, Q = cache[key]
            mean = F @ mean
            cov = _check_symmetry(F @ cov @ F.T + Q, t[k])
            out.append(track.state(mean, cov, t[k]))
    elif method == "rk4":
        # the covariance ODE has eigenvalues up to twice those of A
        rad = 2 * float(np.max(np.abs(np.linalg.eigvals(dd.A)), initial=0.0))
        if step is None:
            step = 0.04 / rad if rad > 0 else float(t[-1] - t[0]) or 1.0
        elif step * rad > RK4_STABLE:
            raise StepSizeError(f"rk4 step {step:g} is outside the stability region (limit {RK4_STABLE / rad:.3g})")
        for k in range(1, len(t)):
            dt = float(t[k] - t[k - 1])
            nsub = max(1, int(np.ceil(dt / step - 1e-9)))
            h = dt / nsub
            for _ in range(nsub):
                mean, cov = _rk4_step(dd, mean, cov, h)
            cov = _check_symmetry(cov, t[k])
            out.append(track.state(mean, cov, t[k]))
    else:
        raise ValueError(f"unknown method {method!r}")
    return out


def lyapunov_steady(dd: DriftDiffusion) -> GaussianState:
    """Solve A sigma + sigma A^T + D = 0 by a dense vectorized linear solve."""
    abscissa = dd.spectral_abscissa()
    if not abscissa < 0:
        raise NoSteadyStateError(f"drift matrix is not Hurwitz (max real eigenvalue {abscissa:.3g})")
    n = dd.A.shape[0]
    eye = np.eye(n)
    K = np.kron(dd.A, eye) + np.kron(eye, dd.A)
    sigma = np.linalg.solve(K, -dd.D.ravel()).reshape(n, n)
    return GaussianState(np.zeros(n), 0.5 * (sigma + sigma.T), dd.labels)


def lyapunov_residual(dd: DriftDiffusion, g: GaussianState) -> float:
    return float(np.max(np.abs(dd.A @ g.cov + g.cov @ dd.A.T + dd.D)))


def stroboscopic_moments(
    dd_a: DriftDiffusion,
    dd_b: DriftDiffusion,
    g0: GaussianState,
    delta_t: float,
    n_cycles: int,
) -> tuple[np.ndarray, list[GaussianState]]:
    """Alternate ``dd_a`` and ``dd_b`` for ``delta_t`` each; sample after every full cycle."""
    if dd_a.labels != dd_b.labels or g0.labels != dd_a.labels:
        raise SpaceError("stroboscopic halves and state must share the mode list")
    if delta_t <= 0 or n_cycles < 1:
        raise ValueError("need delta_t > 0 and at least one cycle")
    Fa, Qa = step_propagator(dd_a, delta_t)
    Fb, Qb = step_propagator(dd_b, delta_t)
    F = Fb @ Fa
    Q = Fb @ Qa @ Fb.T + Qb
    mean, cov = np.array(g0.mean), np.array(g0.cov)
    states = [g0]
    track = _Tracker(g0.labels, cov)
    for k in range(n_cycles):
        t = 2 * delta_t * (k + 1)
        mean = F @ mean
        cov = _check_symmetry(F @ cov @ F.T + Q, t)
        states.append(track.state(mean, cov, t))
    times = 2 * delta_t * np.arange(n_cycles + 1)
    return times, states


# -- bridge from Fock space ----------------------------------------------------


def gaussian_from_fock(state: QuantumState, labels: Sequence[str] | None = None) -> GaussianState:
    """First and symmetrized second quadrature moments of a Fock-space state."""
    space = state.space
    labels = tuple(space.labels if labels is None else labels)
    quads = []
    for lb in labels:
        a = annihilation(space, lb, sparse=True).matrix
        ad = a.conj().T.tocsr()
        quads.append(((a + ad) / SQRT2).tocsr())
        quads.append(((a - ad) * (-1j / SQRT2)).tocsr())
    m = len(quads)
    mean = np.empty(m)
    second = np.empty((m, m))
    if state.is_pure_vector:
        psi = state.data
        vecs = [q @ psi for q in quads]
        for k in range(m):
            mean[k] = np.vdot(psi, vecs[k]).real
            for l in range(k, m):
                # <R_k R_l> = (R_k psi)^dag (R_l psi) for Hermitian R_k
                second[k, l] = second[l, k] = np.vdot(vecs[k], vecs[l]).real
    else:
        rho = state.data
        prods = [q @ rho for q in quads]
        for k in range(m):
            mean[k] = np.trace(prods[k]).real
            qk_t = quads[k].T
            for l in range(k, m):
                # Re Tr(R_k R_l rho) is the symmetrized moment
                second[k, l] = second[l, k] = np.real(qk_t.multiply(prods[l]).sum())
    cov = second - np.outer(mean, mean)
    # truncated ladder operators break the canonical commutator at the top level,
    # so the uncertainty check would flag harmless truncation error
    return GaussianState(mean, 0.5 * (cov + cov.T), labels, validate=False)
