"""SI-unit calculator: circuit and resonator parameters to coupling strengths and regime checks.

All angular frequencies are in rad/s. Quantities entered in Hz are converted
with an explicit factor 2 pi by :func:`parse_quantity`.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field

from scipy import constants

from .errors import SpecError

DEFAULT_RATIO = 10.0


@dataclass(frozen=True)
class DeviceParams:
    C0: float  # coupling capacitance, F
    d: float  # equilibrium gap, m
    m: float  # resonator effective mass, kg
    omega_m: float  # rad/s
    omega: tuple[float, float]  # cavity angular frequencies, rad/s
    C: tuple[float, float]  # cavity capacitances, F
    Vx: tuple[float, float]  # drive amplitudes, V
    Q_m: float = math.inf
    Q_c: float = math.inf
    T: float = 0.0  # K

    def __post_init__(self):
        for name in ("omega", "C", "Vx"):
            val = tuple(float(v) for v in getattr(self, name))
            if len(val) != 2:
                raise SpecError(f"{name} needs one value per cavity")
            object.__setattr__(self, name, val)
        positive = {"C0": self.C0, "d": self.d, "m": self.m, "omega_m": self.omega_m, "Q_m": self.Q_m, "Q_c": self.Q_c}
        for j in (0, 1):
            positive[f"omega{j + 1}"] = self.omega[j]
            positive[f"C{j + 1}"] = self.C[j]
            positive[f"Vx{j + 1}"] = self.Vx[j]
        for name, v in positive.items():
            if not v > 0 or math.isnan(v):
                raise SpecError(f"{name} must be strictly positive, got {v}")
        if not self.T >= 0:
            raise SpecError(f"temperature must be >= 0, got {self.T}")

    @property
    def gamma_m(self) -> float:
        return self.omega_m / self.Q_m

    def kappa(self, j: int) -> float:
        return self.omega[_cavity(j)] / self.Q_c


def _cavity(j: int) -> int:
    if j not in (1, 2):
        raise SpecError(f"cavity index must be 1 or 2, got {j}")
    return j - 1


def coupling_g(params: DeviceParams, j: int, vx: float | None = None) -> float:
    """Coefficient g_j = (C0/d) sqrt(omega_j / (2 m omega_m C_j)) V_x of the linearized coupling."""
    k = _cavity(j)
    v = params.Vx[k] if vx is None else vx
    if not v > 0:
        raise SpecError(f"drive voltage must be positive, got {v}")
    return params.C0 / params.d * math.sqrt(params.omega[k] / (2 * params.m * params.omega_m * params.C[k])) * v


def effective_theta(params: DeviceParams, j: int) -> float:
    """Sideband coupling strength: half of g_j at the tone amplitude."""
    return 0.5 * coupling_g(params, j)


def thermal_occupation(omega: float, T: float) -> float:
    """Bose-Einstein occupation of an oscillator at angular frequency ``omega``."""
    if T < 0:
        raise SpecError("temperature must be >= 0")
    if T == 0:
        return 0.0
    x = constants.hbar * omega / (constants.k * T)
    # e^-x / (1 - e^-x) stays finite where 1 / expm1(x) would overflow
    return math.exp(-x) / -math.expm1(-x)


@dataclass(frozen=True)
class Clause:
    name: str
    ratio: float
    ok: bool


@dataclass(frozen=True)
class RegimeReport:
    threshold: float
    scheme_a: tuple[Clause, ...]
    scheme_b: tuple[Clause, ...]

    @property
    def scheme_a_ok(self) -> bool:
        return all(c.ok for c in self.scheme_a)

    @property
    def scheme_b_ok(self) -> bool:
        return all(c.ok for c in self.scheme_b)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "scheme_a_ok": self.scheme_a_ok,
            "scheme_b_ok": self.scheme_b_ok,
            "scheme_a": [asdict(c) for c in self.scheme_a],
            "scheme_b": [asdict(c) for c in self.scheme_b],
        }


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return math.inf if num > 0 else math.nan
    return num / den


def regime_check(
    theta1: float,
    theta2: float,
    gamma_m: float,
    kappa: float,
    n_th: float,
    threshold: float = DEFAULT_RATIO,
) -> RegimeReport:
    """Evaluate the strong-inequality conditions of both schemes as ratios against ``threshold``.

    Scheme A (coherent, no dissipation) wants both strengths far above the
    cavity decay, the mechanical damping and the thermal decoherence rate.
    Scheme B (reservoir engineering) wants ``gamma_m >> Theta >> sqrt(gamma_m kappa)/2``
    and a thermal heating rate ``n_th gamma_m`` well below ``Theta``.
    """
    for name, v in (("theta1", theta1), ("theta2", theta2), ("gamma_m", gamma_m), ("kappa", kappa), ("n_th", n_th)):
        if v < 0 or math.isnan(v):
            raise SpecError(f"{name} must be >= 0, got {v}")
    slow = min(abs(theta1), abs(theta2))

    def clause(name, num, den):
        r = _ratio(num, den)
        return Clause(name, r, bool(r >= threshold))

    a = (
        clause("theta/kappa", slow, kappa),
        clause("theta/gamma_m", slow, gamma_m),
        clause("theta/(n_th gamma_m)", slow, n_th * gamma_m),
    )
    big = max(theta2**2 - theta1**2, 0.0)
    th = math.sqrt(big)
    b = (
        clause("gamma_m/Theta", gamma_m, th),
        clause("Theta/(sqrt(gamma_m kappa)/2)", th, math.sqrt(gamma_m * kappa) / 2),
        clause("Theta/(n_th gamma_m)", th, n_th * gamma_m),
    )
    return RegimeReport(float(threshold), a, b)


def device_summary(params: DeviceParams, threshold: float = DEFAULT_RATIO) -> dict:
    """Derived couplings, rates, time scales and regime verdicts for a device."""
    th1, th2 = effective_theta(params, 1), effective_theta(params, 2)
    n_th = thermal_occupation(params.omega_m, params.T)
    kappa = max(params.kappa(1), params.kappa(2))
    out = {
        "g1": coupling_g(params, 1),
        "g2": coupling_g(params, 2),
        "theta1": th1,
        "theta2": th2,
        "n_th": n_th,
        "gamma_m": params.gamma_m,
        "kappa": kappa,
    }
    if th2 > th1:
        big_theta = math.sqrt(th2**2 - th1**2)
        out["Theta"] = big_theta
        out["T_pi"] = math.pi / big_theta
        if params.gamma_m > 0:
            gc = 4 * big_theta**2 / params.gamma_m
            out["Gamma_c"] = gc
            out["settle_time"] = 4 / gc if gc > 0 else math.inf
    report = regime_check(th1, th2, params.gamma_m, kappa, n_th, threshold)
    out["scheme_a_ok"] = report.scheme_a_ok
    out["scheme_b_ok"] = report.scheme_b_ok
    out["regime"] = report.to_dict()
    return out


# -- units -----------------------------------------------------------------------

_PREFIX = {"": 1.0, "T": 1e12, "G": 1e9, "M": 1e6, "k": 1e3, "m": 1e-3, "u": 1e-6, "µ": 1e-6, "n": 1e-9, "p": 1e-12, "f": 1e-15}
_BASE = {
    "frequency": {"Hz": 2 * math.pi, "rad/s": 1.0},
    "capacitance": {"F": 1.0},
    "length": {"m": 1.0},
    "mass": {"g": 1e-3, "kg": 1.0},
    "voltage": {"V": 1.0},
    "temperature": {"K": 1.0},
}
_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)\s*$")


def parse_quantity(text: str, dimension: str) -> float:
    """Parse ``"6 GHz"`` and the like into SI units (angular frequency for Hz).

    A unit suffix is mandatory; ``"2pi"`` is never implied for rad/s inputs.
    """
    if dimension not in _BASE:
        raise ValueError(f"unknown dimension {dimension!r}")
    m = _NUMBER.match(str(text))
    if not m:
        raise ValueError(f"cannot parse quantity {text!r}")
    value, unit = float(m.group(1)), m.group(2)
    if not unit:
        raise ValueError(f"quantity {text!r} needs an explicit {dimension} unit")
    bases = _BASE[dimension]
    if unit in bases:
        return value * bases[unit]
    for base, factor in sorted(bases.items(), key=lambda kv: -len(kv[0])):
        if unit.endswith(base):
            prefix = unit[: -len(base)]
            if prefix in _PREFIX:
                return value * _PREFIX[prefix] * factor
    raise ValueError(f"unknown {dimension} unit {unit!r} in {text!r}")
