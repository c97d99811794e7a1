"""Declarative descriptions of quadratic Hamiltonians and linear Lindblad channels.

A :class:`SystemSpec` is representation-neutral: :func:`compile` turns it into
Fock-space operators and :func:`emsqueeze.gaussian.drift_diffusion` turns it
into moment equations. Conventions (hbar = 1):

* a coupling contributes ``-strength * (e^{i phase} pair + h.c.)`` with
  ``pair = a_i^dag a_j`` (beam splitter) or ``a_i^dag a_j^dag`` (two-mode squeeze);
* a channel with operator ``L`` and rate ``r`` contributes
  ``(r/2)(2 L rho L^dag - L^dag L rho - rho L^dag L)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sps

from .errors import SpecError
from .fock import FockSpace, Operator, annihilation, creation, make_space


class CouplingKind(str, Enum):
    BEAM_SPLITTER = "beam_splitter"
    TWO_MODE_SQUEEZE = "two_mode_squeeze"


class Role(str, Enum):
    CAVITY = "cavity"
    MECHANICAL = "mechanical"


@dataclass(frozen=True)
class Mode:
    label: str
    role: Role = Role.CAVITY

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))


@dataclass(frozen=True)
class QuadraticCoupling:
    mode_i: str
    mode_j: str
    kind: CouplingKind
    strength: float
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", CouplingKind(self.kind))
        if self.mode_i == self.mode_j:
            raise SpecError(f"coupling needs two distinct modes, got {self.mode_i!r} twice")
        if not (math.isfinite(self.strength) and math.isfinite(self.phase)):
            raise SpecError("coupling strength and phase must be finite")


@dataclass(frozen=True)
class LocalChannel:
    """Damping (``down_rate``, jump ``a``) and heating (``up_rate``, jump ``a^dag``) of one mode."""

    mode: str
    down_rate: float
    up_rate: float = 0.0

    def __post_init__(self):
        _check_rate(self.down_rate, f"down rate of {self.mode!r}")
        _check_rate(self.up_rate, f"up rate of {self.mode!r}")

    @property
    def labels(self) -> tuple[str, ...]:
        return (self.mode,)


@dataclass(frozen=True)
class CollectiveChannel:
    """Jump operator ``L = sum_k u_k a_k + sum_k v_k a_k^dag`` with a single rate.

    The coefficients are stored exactly as given; Bogoliubov operators keep
    their cosh/sinh-like weights and the rate multiplies the raw ``L``.
    """

    lowering: tuple[tuple[str, complex], ...]
    raising: tuple[tuple[str, complex], ...]
    rate: float
    name: str = ""

    def __post_init__(self):
        lowering = tuple((str(lb), complex(c)) for lb, c in self.lowering)
        raising = tuple((str(lb), complex(c)) for lb, c in self.raising)
        object.__setattr__(self, "lowering", lowering)
        object.__setattr__(self, "raising", raising)
        _check_rate(self.rate, f"rate of collective channel {self.name!r}")
        if not lowering and not raising:
            raise SpecError("collective channel needs at least one coefficient")
        if not all(math.isfinite(abs(c)) for _, c in lowering + raising):
            raise SpecError("collective channel coefficients must be finite")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lb for lb, _ in self.lowering + self.raising)

    def commutator(self) -> float:
        """[L, L^dag] = sum |u|^2 - sum |v|^2 (a c-number for linear L)."""
        return sum(abs(c) ** 2 for _, c in self.lowering) - sum(abs(c) ** 2 for _, c in self.raising)


Channel = LocalChannel | CollectiveChannel


def _check_rate(value: float, what: str) -> None:
    if not math.isfinite(value) or value < 0:
        raise SpecError(f"{what} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class SystemSpec:
    modes: tuple[Mode, ...]
    couplings: tuple[QuadraticCoupling, ...] = ()
    channels: tuple[Channel, ...] = ()
    name: str = ""

    def __post_init__(self):
        modes = tuple(m if isinstance(m, Mode) else Mode(*m) for m in self.modes)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "couplings", tuple(self.couplings))
        object.__setattr__(self, "channels", tuple(self.channels))
        labels = self.labels
        if not labels:
            raise SpecError("a system needs at least one mode")
        if len(set(labels)) != len(labels):
            raise SpecError(f"duplicate mode labels {labels}")
        known = set(labels)
        for c in self.couplings:
            for lb in (c.mode_i, c.mode_j):
                if lb not in known:
                    raise SpecError(f"coupling refers to undeclared mode {lb!r}")
        for ch in self.channels:
            for lb in ch.labels:
                if lb not in known:
                    raise SpecError(f"channel refers to undeclared mode {lb!r}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.modes)

    def labels_with_role(self, role: Role | str) -> tuple[str, ...]:
        role = Role(role)
        return tuple(m.label for m in self.modes if m.role is role)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SpecError(f"unknown mode {label!r}") from None

    def max_rate(self) -> float:
        """Largest coupling strength or channel rate (a natural inverse time scale)."""
        vals = [abs(c.strength) for c in self.couplings]
        for ch in self.channels:
            if isinstance(ch, LocalChannel):
                vals += [ch.down_rate, ch.up_rate]
            else:
                vals.append(ch.rate)
        return max(vals, default=0.0)

    def merged(self, other: "SystemSpec") -> "SystemSpec":
        """Union of couplings and channels of two specs on the same modes."""
        if self.labels != other.labels:
            raise SpecError("can only merge specs with identical mode lists")
        return replace(self, couplings=self.couplings + other.couplings, channels=self.channels + other.channels)

    def with_couplings(self, couplings: Iterable[QuadraticCoupling]) -> "SystemSpec":
        return replace(self, couplings=tuple(couplings))

    def default_space(self, dims: Sequence[int]) -> FockSpace:
        return make_space(dims, self.labels)

    def to_dict(self) -> dict:
        chans = []
        for ch in self.channels:
            if isinstance(ch, LocalChannel):
                chans.append({"type": "local", "mode": ch.mode, "down_rate": ch.down_rate, "up_rate": ch.up_rate})
            else:
                chans.append(
                    {
                        "type": "collective",
                        "name": ch.name,
                        "rate": ch.rate,
                        "lowering": [[lb, c.real, c.imag] for lb, c in ch.lowering],
                        "raising": [[lb, c.real, c.imag] for lb, c in ch.raising],
                    }
                )
        return {
            "name": self.name,
            "modes": [[m.label, m.role.value] for m in self.modes],
            "couplings": [
                {"mode_i": c.mode_i, "mode_j": c.mode_j, "kind": c.kind.value, "strength": c.strength, "phase": c.phase}
                for c in self.couplings
            ],
            "channels": chans,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SystemSpec":
        chans: list[Channel] = []
        for ch in obj.get("channels", []):
            if ch["type"] == "local":
                chans.append(LocalChannel(ch["mode"], float(ch["down_rate"]), float(ch.get("up_rate", 0.0))))
            elif ch["type"] == "collective":
                chans.append(
                    CollectiveChannel(
                        tuple((lb, complex(re, im)) for lb, re, im in ch["lowering"]),
                        tuple((lb, complex(re, im)) for lb, re, im in ch["raising"]),
                        float(ch["rate"]),
                        ch.get("name", ""),
                    )
                )
            else:
                raise SpecError(f"unknown channel type {ch['type']!r}")
        return cls(
            modes=tuple(Mode(lb, role) for lb, role in obj["modes"]),
            couplings=tuple(QuadraticCoupling(**c) for c in obj.get("couplings", [])),
            channels=tuple(chans),
            name=obj.get("name", ""),
        )


def _positive(**kw) -> None:
    for k, v in kw.items():
        if not (math.isfinite(v) and v > 0):
            raise SpecError(f"{k} must be positive, got {v}")


def _three_modes() -> tuple[Mode, ...]:
    return (Mode("c1", Role.CAVITY), Mode("c2", Role.CAVITY), Mode("m", Role.MECHANICAL))


def scheme_a(theta1: float, theta2: float) -> SystemSpec:
    """Blue sideband on cavity 1 and red sideband on cavity 2, sharing one resonator."""
    _positive(theta1=theta1, theta2=theta2)
    return SystemSpec(
        _three_modes(),
        (
            QuadraticCoupling("c1", "m", CouplingKind.TWO_MODE_SQUEEZE, theta1),
            QuadraticCoupling("c2", "m", CouplingKind.BEAM_SPLITTER, theta2),
        ),
        name="scheme_a",
    )


def scheme_a_prime(theta1: float, theta2: float) -> SystemSpec:
    """Sidebands swapped: beam splitter on cavity 1, two-mode squeeze on cavity 2.

    The strengths stay attached to their cavity index. The partner of
    ``scheme_a(t1, t2)`` that cools the second Bogoliubov mode is
    ``scheme_a_prime(t2, t1)``; see :func:`engineered_pair`.
    """
    _positive(theta1=theta1, theta2=theta2)
    return SystemSpec(
        _three_modes(),
        (
            QuadraticCoupling("c1", "m", CouplingKind.BEAM_SPLITTER, theta1),
            QuadraticCoupling("c2", "m", CouplingKind.TWO_MODE_SQUEEZE, theta2),
        ),
        name="scheme_a_prime",
    )


def engineered_pair(theta1: float, theta2: float) -> tuple[SystemSpec, SystemSpec]:
    """The two alternating Hamiltonians whose eliminated resonator cools D and D~.

    With ``theta2 > theta1`` the first engineers ``(theta2 a2 + theta1 a1^dag)/Theta``
    and the second ``(theta2 a1 + theta1 a2^dag)/Theta``. Both annihilate the same
    two-mode squeezed vacuum.
    """
    if not theta2 > theta1:
        raise SpecError(f"need theta2 > theta1 > 0, got ({theta1}, {theta2})")
    return scheme_a(theta1, theta2), scheme_a_prime(theta2, theta1)


def with_dissipation(spec: SystemSpec, kappa1: float, kappa2: float, gamma_m: float, n_th: float) -> SystemSpec:
    """Append cavity decay on c1/c2 and a thermal bath on every mechanical mode."""
    for name, v in (("kappa1", kappa1), ("kappa2", kappa2), ("gamma_m", gamma_m), ("n_th", n_th)):
        _check_rate(v, name)
    chans = [LocalChannel("c1", kappa1), LocalChannel("c2", kappa2)]
    for lb in spec.labels_with_role(Role.MECHANICAL):
        chans.append(LocalChannel(lb, gamma_m * (n_th + 1.0), gamma_m * n_th))
    return replace(spec, channels=spec.channels + tuple(chans))


def bogoliubov_theta(theta1: float, theta2: float) -> float:
    if not theta2 > theta1 >= 0:
        raise SpecError(f"need theta2 > theta1 >= 0, got ({theta1}, {theta2})")
    return math.sqrt(theta2**2 - theta1**2)


def cooling_rate(theta1: float, theta2: float, gamma_m: float) -> float:
    """Engineered cavity cooling rate 4 Theta^2 / gamma_m."""
    _positive(gamma_m=gamma_m)
    return 4.0 * bogoliubov_theta(theta1, theta2) ** 2 / gamma_m


def bogoliubov_channels(theta1: float, theta2: float, rate: float) -> tuple[CollectiveChannel, CollectiveChannel]:
    th = bogoliubov_theta(theta1, theta2)
    d = CollectiveChannel((("c2", theta2 / th),), (("c1", theta1 / th),), rate, name="D")
    dt = CollectiveChannel((("c1", theta2 / th),), (("c2", theta1 / th),), rate, name="D~")
    return d, dt


def effective_cooling(theta1: float, theta2: float, gamma_m: float, include_dtilde: bool = True) -> SystemSpec:
    """Two cavities cooled by the eliminated resonator(s); no Hamiltonian."""
    _positive(theta1=theta1)
    gc = cooling_rate(theta1, theta2, gamma_m)
    d, dt = bogoliubov_channels(theta1, theta2, gc)
    chans = (d, dt) if include_dtilde else (d,)
    return SystemSpec(
        (Mode("c1", Role.CAVITY), Mode("c2", Role.CAVITY)),
        (),
        chans,
        name="effective_cooling" if include_dtilde else "effective_cooling_single",
    )


def two_mr_system(
    theta1: float,
    theta2: float,
    gamma_m1: float,
    gamma_m2: float,
    n_th: float,
    kappa1: float,
    kappa2: float,
    as_printed: bool = False,
) -> SystemSpec:
    """Two cavities, two mechanical resonators, each resonator engineering one Bogoliubov mode.

    By default the second resonator carries the beam splitter at strength
    ``theta2`` on cavity 1 and the two-mode squeeze at ``theta1`` on cavity 2,
    so that eliminating it yields the damped mode ``(theta2 a1 + theta1 a2^dag)/Theta``.
    ``as_printed=True`` keeps each strength on its cavity index instead, which
    engineers ``(theta1 a1 + theta2 a2^dag)/Theta``; that operator has
    ``[L, L^dag] = -1`` and acts as an amplifier, so the system has no steady state.
    """
    _positive(theta1=theta1)
    bogoliubov_theta(theta1, theta2)
    for name, v in (("gamma_m1", gamma_m1), ("gamma_m2", gamma_m2), ("n_th", n_th), ("kappa1", kappa1), ("kappa2", kappa2)):
        _check_rate(v, name)
    bs2, tms2 = (theta1, theta2) if as_printed else (theta2, theta1)
    modes = (
        Mode("c1", Role.CAVITY),
        Mode("c2", Role.CAVITY),
        Mode("m1", Role.MECHANICAL),
        Mode("m2", Role.MECHANICAL),
    )
    couplings = (
        QuadraticCoupling("c1", "m1", CouplingKind.TWO_MODE_SQUEEZE, theta1),
        QuadraticCoupling("c2", "m1", CouplingKind.BEAM_SPLITTER, theta2),
        QuadraticCoupling("c1", "m2", CouplingKind.BEAM_SPLITTER, bs2),
        QuadraticCoupling("c2", "m2", CouplingKind.TWO_MODE_SQUEEZE, tms2),
    )
    channels = (
        LocalChannel("c1", kappa1),
        LocalChannel("c2", kappa2),
        LocalChannel("m1", gamma_m1 * (n_th + 1.0), gamma_m1 * n_th),
        LocalChannel("m2", gamma_m2 * (n_th + 1.0), gamma_m2 * n_th),
    )
    return SystemSpec(modes, couplings, channels, name="two_mr_as_printed" if as_printed else "two_mr")


def _pair(space: FockSpace, c: QuadraticCoupling, sparse: bool) -> Operator:
    left = creation(space, c.mode_i, sparse)
    if c.kind is CouplingKind.BEAM_SPLITTER:
        right = annihilation(space, c.mode_j, sparse)
    else:
        right = creation(space, c.mode_j, sparse)
    return left @ right


def _check_space(spec: SystemSpec, space: FockSpace) -> None:
    missing = [lb for lb in spec.labels if lb not in space.labels]
    if missing:
        raise SpecError(f"space {space.labels} lacks modes {missing}")


def hamiltonian(spec: SystemSpec, space: FockSpace, sparse: bool = False) -> Operator:
    _check_space(spec, space)
    n = space.total_dim
    if sparse:
        H = Operator(space, sps.csr_matrix((n, n), dtype=complex))
    else:
        H = Operator(space, np.zeros((n, n), dtype=complex))
    for c in spec.couplings:
        term = np.exp(1j * c.phase) * _pair(space, c, sparse)
        H = H - c.strength * (term + term.dag())
    return H


def channel_operators(spec: SystemSpec, space: FockSpace, sparse: bool = False) -> list[tuple[Operator, float]]:
    """Jump operators with their rates. Heating terms are omitted when their rate is zero."""
    _check_space(spec, space)
    out: list[tuple[Operator, float]] = []
    for ch in spec.channels:
        if isinstance(ch, LocalChannel):
            out.append((annihilation(space, ch.mode, sparse), ch.down_rate))
            if ch.up_rate > 0:
                out.append((creation(space, ch.mode, sparse), ch.up_rate))
        else:
            terms = [c * annihilation(space, lb, sparse) for lb, c in ch.lowering]
            terms += [c * creation(space, lb, sparse) for lb, c in ch.raising]
            L = terms[0]
            for t in terms[1:]:
                L = L + t
            out.append((L, ch.rate))
    return out


def compile(spec: SystemSpec, space: FockSpace, sparse: bool = False) -> tuple[Operator, list[tuple[Operator, float]]]:
    """Concrete Hamiltonian and (jump operator, rate) list on ``space``."""
    return hamiltonian(spec, space, sparse), channel_operators(spec, space, sparse)


compile_spec = compile
