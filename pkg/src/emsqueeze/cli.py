"""Scenario runner.

Scenarios are INI files (see README for the schema). Subcommands::

    emsqueeze run CONFIG [--output-dir DIR] [--format csv|json]
    emsqueeze sweep CONFIG --parameter system.kappa --values 0.001,0.1,1
    emsqueeze device CONFIG
    emsqueeze list-scenarios

``CONFIG`` is a file path or the name of a bundled scenario. Exit codes:
0 success, 2 configuration error, 3 engine error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import re
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import closedform, device, fock, gaussian, lindblad, metrics, model
from .errors import ConfigError, EmsqueezeError

ENGINES = ("closedform", "gaussian", "fock", "stroboscopic", "adiabatic", "device")
BUILDERS = ("scheme_a", "scheme_a_prime", "resonator_cooled", "effective_cooling", "two_mr")
TIME_UNITS = ("1", "theta1", "t_pi", "gamma_c")
DEFAULT_COLUMNS = ("v_minus", "v_plus", "v_min", "fidelity", "occupations", "purity")


def _float(s: str) -> float:
    v = float(s)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _int(s: str) -> int:
    return int(s)


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _choice(options):
    def parse(s: str) -> str:
        s = s.strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s

    return parse


def _int_list(s: str) -> list[int]:
    return [int(x) for x in _list(s)]


def _float_list(s: str) -> list[float]:
    return [_float(x) for x in _list(s)]


def _unit(dimension: str):
    def parse(s: str) -> float:
        return device.parse_quantity(s, dimension)

    return parse


_OCC_KEY = re.compile(r"^n_[A-Za-z]\w*$")

SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "scenario": {"name": str, "engine": _choice(ENGINES), "description": str},
    "system": {
        "builder": _choice(BUILDERS),
        "theta1": _float,
        "theta2": _float,
        "r": _float,
        "gamma_m": _float,
        "gamma_m1": _float,
        "gamma_m2": _float,
        "n_th": _float,
        "kappa": _float,
        "kappa1": _float,
        "kappa2": _float,
        "include_dtilde": _bool,
        "as_printed": _bool,
    },
    "initial": {"state": _choice(("vacuum", "thermal"))},  # plus n_<label> occupations
    "time": {"t_max": _float, "unit": _choice(TIME_UNITS), "samples": _int},
    "metrics": {"columns": _list, "pair": _list, "fidelity": _choice(("none", "A", "B"))},
    "solver": {
        "method": _choice(("exact", "rk4", "expm", "bdf")),
        "dims": _int_list,
        "step": _float,
        "delta_t": _float,
        "representation": _choice(("gaussian", "fock")),
    },
    "output": {"csv": str, "summary": str, "covariance": _bool},
    "variants": {"parameter": str, "values": _float_list},
    "sweep": {"parameter": str, "values": _float_list},
}
DEVICE_SCHEMA: dict[str, Callable[[str], Any]] = {
    "C0": _unit("capacitance"),
    "d": _unit("length"),
    "m": _unit("mass"),
    "omega_m": _unit("frequency"),
    "omega1": _unit("frequency"),
    "omega2": _unit("frequency"),
    "C1": _unit("capacitance"),
    "C2": _unit("capacitance"),
    "Vx1": _unit("voltage"),
    "Vx2": _unit("voltage"),
    "Q_m": _float,
    "Q_c": _float,
    "T": _unit("temperature"),
    "threshold": _float,
    "quoted_Theta": _unit("frequency"),
    "note": str,
}


@dataclass(frozen=True)
class Scenario:
    name: str
    engine: str
    sections: dict[str, dict[str, Any]]
    devices: dict[str, dict[str, Any]] = field(default_factory=dict)
    source: str = ""

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def with_parameter(self, path: str, value: float) -> "Scenario":
        section, _, key = path.partition(".")
        schema = SCHEMA.get(section)
        if not key or schema is None or (key not in schema and not (section == "initial" and _OCC_KEY.match(key))):
            raise ConfigError(f"unknown parameter {path!r}")
        secs = {s: dict(v) for s, v in self.sections.items()}
        secs.setdefault(section, {})[key] = value
        return replace(self, sections=secs)


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line number of every ``key = value`` entry, keyed by (section, key)."""
    out: dict[tuple[str, str], int] = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if section is not None and ("=" in line or ":" in line):
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip()
            out[(section, key)] = n
    return out


def _section_lines(text: str) -> dict[str, int]:
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            out[line[1:-1].strip()] = n
    return out


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"entry before any section header: {exc.line.strip()!r}", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"cannot parse {line.strip()!r}", lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], exc.lineno) from None

    key_lines = _key_lines(text)
    sec_lines = _section_lines(text)
    sections: dict[str, dict[str, Any]] = {}
    devices: dict[str, dict[str, Any]] = {}
    for sec in parser.sections():
        if sec == "device" or sec.startswith("device:"):
            schema, target = DEVICE_SCHEMA, devices.setdefault(sec.partition(":")[2] or "device", {})
        elif sec in SCHEMA:
            schema, target = SCHEMA[sec], sections.setdefault(sec, {})
        else:
            raise ConfigError(f"unknown section [{sec}]", sec_lines.get(sec))
        for key, raw in parser.items(sec):
            line = key_lines.get((sec, key))
            if key in schema:
                conv = schema[key]
            elif sec == "initial" and _OCC_KEY.match(key):
                conv = _float
            else:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", line)
            try:
                target[key] = conv(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", line) from None

    scen = sections.get("scenario", {})
    if "engine" not in scen:
        raise ConfigError("missing [scenario] engine", sec_lines.get("scenario"))
    engine = scen["engine"]
    if engine == "device" and not devices:
        raise ConfigError("device engine needs at least one [device] section")
    for name, dev in devices.items():
        missing = [k for k in ("C0", "d", "m", "omega_m", "omega1", "omega2", "C1", "C2", "Vx1", "Vx2") if k not in dev]
        if missing:
            raise ConfigError(f"device {name!r} lacks {', '.join(missing)}", sec_lines.get(f"device:{name}", sec_lines.get("device")))
    for sec in ("variants", "sweep"):
        if sec in sections:
            s = sections[sec]
            if "parameter" not in s or not s.get("values"):
                raise ConfigError(f"[{sec}] needs a parameter and a non-empty values list", sec_lines.get(sec))
    scenario = Scenario(scen.get("name", Path(source).stem), engine, sections, devices, source)
    for sec in ("variants", "sweep"):
        if sec in sections:
            try:
                scenario.with_parameter(sections[sec]["parameter"], sections[sec]["values"][0])
            except ConfigError as exc:
                raise ConfigError(str(exc), key_lines.get((sec, "parameter"))) from None
    return scenario


def bundled_scenarios() -> dict[str, str]:
    root = resources.files("emsqueeze") / "scenarios"
    return {p.name[:-4]: p.read_text() for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".cfg")}


def load_scenario(ref: str) -> Scenario:
    path = Path(ref)
    if path.is_file():
        return parse_scenario(path.read_text(), str(path))
    bundled = bundled_scenarios()
    name = ref[:-4] if ref.endswith(".cfg") else ref
    if name in bundled:
        return parse_scenario(bundled[name], f"{name}.cfg")
    raise ConfigError(f"no such scenario file or bundled scenario: {ref!r}")


# -- system assembly -----------------------------------------------------------------


def _system_params(sc: Scenario) -> dict[str, Any]:
    p = dict(sc.sections.get("system", {}))
    p.setdefault("theta1", 1.0)
    if "r" in p:
        p["theta2"] = p["r"] * p["theta1"]
    p.setdefault("theta2", 2.0)
    return p


def build_system(sc: Scenario) -> model.SystemSpec:
    p = _system_params(sc)
    builder = p.get("builder", "scheme_a")
    t1, t2 = p["theta1"], p["theta2"]
    kappa = p.get("kappa", 0.0)
    k1, k2 = p.get("kappa1", kappa), p.get("kappa2", kappa)
    gamma = p.get("gamma_m", 0.0)
    n_th = p.get("n_th", 0.0)
    if builder == "scheme_a":
        spec = model.scheme_a(t1, t2)
    elif builder == "scheme_a_prime":
        spec = model.scheme_a_prime(t1, t2)
    elif builder == "resonator_cooled":
        return model.with_dissipation(model.scheme_a(t1, t2), k1, k2, gamma, n_th)
    elif builder == "effective_cooling":
        spec = model.effective_cooling(t1, t2, gamma, p.get("include_dtilde", True))
        if k1 or k2:
            spec = replace(spec, channels=spec.channels + (model.LocalChannel("c1", k1), model.LocalChannel("c2", k2)))
        return spec
    else:
        return model.two_mr_system(
            t1, t2, p.get("gamma_m1", gamma), p.get("gamma_m2", gamma), n_th, k1, k2, p.get("as_printed", False)
        )
    if gamma or k1 or k2:
        spec = model.with_dissipation(spec, k1, k2, gamma, n_th)
    return spec


def _gamma_c(sc: Scenario) -> float:
    p = _system_params(sc)
    return model.cooling_rate(p["theta1"], p["theta2"], p.get("gamma_m", p.get("gamma_m1", 0.0)))


def time_grid(sc: Scenario) -> np.ndarray:
    t = sc.sections.get("time", {})
    t_max = t.get("t_max", 1.0)
    samples = t.get("samples", 101)
    if samples < 2 or not t_max > 0:
        raise ConfigError("need t_max > 0 and at least 2 samples")
    unit = t.get("unit", "1")
    p = _system_params(sc)
    scale = {
        "1": lambda: 1.0,
        "theta1": lambda: 1.0 / p["theta1"],
        "t_pi": lambda: closedform.half_period(p["theta1"], p["theta2"]),
        "gamma_c": lambda: 1.0 / _gamma_c(sc),
    }[unit]()
    return np.linspace(0.0, t_max * scale, samples)


def _occupations(sc: Scenario, labels: Sequence[str]) -> dict[str, float]:
    init = sc.sections.get("initial", {})
    if init.get("state", "vacuum") == "vacuum":
        return {lb: 0.0 for lb in labels}
    unknown = [k[2:] for k in init if _OCC_KEY.match(k) and k[2:] not in labels]
    if unknown:
        raise ConfigError(f"initial occupations for unknown modes {unknown}")
    return {lb: float(init.get(f"n_{lb}", 0.0)) for lb in labels}


# -- metrics ---------------------------------------------------------------------------


@dataclass
class Series:
    times: np.ndarray
    columns: dict[str, np.ndarray]
    summary: dict[str, Any]
    covariance: str | None = None


def _fidelity_target(sc: Scenario) -> tuple[float, int] | None:
    which = sc.get("metrics", "fidelity", "none")
    if which == "none":
        return None
    p = _system_params(sc)
    # both schemes produce the (-tanh)^n branch in this package's conventions
    return closedform.squeeze_parameter(p["theta1"], p["theta2"], which), -1


def _metric_row(sc: Scenario, state, pair: Sequence[str]) -> dict[str, float]:
    cols = sc.get("metrics", "columns", list(DEFAULT_COLUMNS))
    row: dict[str, float] = {}
    if any(c in cols for c in ("v_minus", "v_plus", "v_min")):
        duan = metrics.duan_variance(state, pair)
        vals = {"v_minus": duan.v_minus, "v_plus": duan.v_plus, "v_min": duan.v_min}
        row.update({k: v for k, v in vals.items() if k in cols})
    target = _fidelity_target(sc)
    if "fidelity" in cols and target is not None:
        row["fidelity"] = metrics.fidelity_with_tmsv(state, target[0], target[1], pair)
    if "occupations" in cols:
        row.update({f"n_{lb}": v for lb, v in metrics.occupations(state).items()})
    if "purity" in cols:
        row["purity"] = metrics.purity(state)
    return row


def _series(sc: Scenario, times, states, pair) -> dict[str, np.ndarray]:
    rows = [_metric_row(sc, s, pair) for s in states]
    return {k: np.array([r[k] for r in rows]) for k in rows[0]}


def _pair(sc: Scenario) -> tuple[str, str]:
    pair = sc.get("metrics", "pair", ["c1", "c2"])
    if len(pair) != 2:
        raise ConfigError("metrics pair needs exactly two modes")
    return pair[0], pair[1]


def _final(columns: dict[str, np.ndarray]) -> dict[str, float]:
    return {k: float(v[-1]) for k, v in columns.items()}


def _settle_time(times: np.ndarray, v: np.ndarray, v_ss: float) -> float | None:
    """First time after which |V - V_ss| < 0.05 (2 - V_ss) holds for the rest of the run."""
    band = 0.05 * abs(2.0 - v_ss)
    outside = np.flatnonzero(np.abs(v - v_ss) >= band)
    if len(outside) == 0:
        return float(times[0])
    if outside[-1] == len(times) - 1:
        return None
    return float(times[outside[-1] + 1])


# -- engines ---------------------------------------------------------------------------


def run_closedform(sc: Scenario) -> Series:
    spec = build_system(sc)
    if spec.channels or spec.name != "scheme_a":
        raise ConfigError("closedform engine needs builder = scheme_a without dissipation")
    p = _system_params(sc)
    t1, t2 = p["theta1"], p["theta2"]
    g0 = gaussian.thermal(spec.labels, _occupations(sc, spec.labels))
    times = time_grid(sc)
    states = [closedform.apply_to_gaussian(closedform.propagator(t1, t2, t), g0) for t in times]
    pair = _pair(sc)
    cols = _series(sc, times, states, pair)
    tpi = closedform.half_period(t1, t2)
    at_tpi = closedform.apply_to_gaussian(closedform.propagator(t1, t2, tpi), g0)
    summary = {
        "t_pi": tpi,
        "v_tpi": metrics.duan_variance(at_tpi, pair).v_min,
        "v_tpi_predicted": closedform.half_period_variance(t2 / t1) if t2 / t1 > 1 else None,
        "zeta": closedform.squeeze_parameter(t1, t2, "A"),
        "final": _final(cols),
    }
    return Series(times, cols, summary)


def run_gaussian(sc: Scenario) -> Series:
    spec = build_system(sc)
    dd = gaussian.drift_diffusion(spec)
    g0 = gaussian.thermal(spec.labels, _occupations(sc, spec.labels))
    times = time_grid(sc)
    method = sc.get("solver", "method", "exact")
    method = "exact" if method in ("exact", "expm", "bdf") else "rk4"
    states = gaussian.evolve_moments(dd, g0, times, method=method, step=sc.get("solver", "step"))
    pair = _pair(sc)
    cols = _series(sc, times, states, pair)
    summary: dict[str, Any] = {"final": _final(cols), "hurwitz": dd.is_hurwitz()}
    if summary["hurwitz"]:
        ss = gaussian.lyapunov_steady(dd)
        v_ss = metrics.duan_variance(ss, pair).v_min
        summary["v_ss"] = v_ss
        summary["lyapunov_residual"] = gaussian.lyapunov_residual(dd, ss)
        if "v_min" in cols:
            summary["settle_time"] = _settle_time(times, cols["v_min"], v_ss)
        target = _fidelity_target(sc)
        if target is not None:
            summary["fidelity_ss"] = metrics.fidelity_with_tmsv(ss, target[0], target[1], pair)
    try:
        summary["gamma_c"] = _gamma_c(sc)
    except model.SpecError:
        pass
    cov = states[-1].cov_csv() if sc.get("output", "covariance", False) else None
    return Series(times, cols, summary, cov)


def _solver_options(sc: Scenario, default: str = "expm") -> lindblad.SolverOptions:
    method = sc.get("solver", "method", default)
    if method == "exact":
        method = "expm"
    return lindblad.SolverOptions(method=method, step=sc.get("solver", "step"))


def _dims(sc: Scenario, n: int) -> list[int]:
    dims = sc.get("solver", "dims")
    if dims is None or len(dims) != n:
        raise ConfigError(f"solver dims must list {n} truncation dimensions")
    return dims


def _fock_initial(space: fock.FockSpace, occ: dict[str, float]) -> fock.QuantumState:
    if not any(occ.values()):
        return fock.vacuum(space)
    return fock.thermal_state(space, occ)


def run_fock(sc: Scenario) -> Series:
    spec = build_system(sc)
    space = spec.default_space(_dims(sc, len(spec.labels)))
    sparse = sc.get("solver", "method", "expm") != "rk4"
    H, chans = model.compile(spec, space, sparse=sparse)
    rho0 = _fock_initial(space, _occupations(sc, spec.labels))
    times = time_grid(sc)
    res = lindblad.evolve(H, chans, rho0, times, _solver_options(sc))
    pair = _pair(sc)
    cols = _series(sc, times, res.states, pair)
    summary = {
        "final": _final(cols),
        "max_trace_drift": max(d.trace_drift for d in res.diagnostics),
        "min_eigenvalue": float(np.nanmin([d.min_eigenvalue for d in res.diagnostics] + [np.inf])),
        "top_level_population": fock.top_level_population(res.final),
    }
    return Series(times, cols, summary)


def _double_cooling_reference(t1, t2, gamma_m, n_th, kappa):
    """Eliminated two-channel model with the cavities' own decay, as drift/diffusion."""
    spec = model.effective_cooling(t1, t2, gamma_m, True)
    if kappa:
        spec = replace(spec, channels=spec.channels + (model.LocalChannel("c1", kappa), model.LocalChannel("c2", kappa)))
    return spec


def run_stroboscopic(sc: Scenario) -> Series:
    p = _system_params(sc)
    t1, t2 = p["theta1"], p["theta2"]
    gamma, n_th, kappa = p.get("gamma_m", 0.0), p.get("n_th", 0.0), p.get("kappa", 0.0)
    gc = model.cooling_rate(t1, t2, gamma)
    dt = sc.get("solver", "delta_t", 0.01) / gc
    t_end = time_grid(sc)[-1]
    n_cycles = max(1, int(round(t_end / (2 * dt))))
    h_a, h_b = model.engineered_pair(t1, t2)
    spec_a = model.with_dissipation(h_a, kappa, kappa, gamma, n_th)
    spec_b = model.with_dissipation(h_b, kappa, kappa, gamma, n_th)
    pair = _pair(sc)
    occ = _occupations(sc, spec_a.labels)
    rep = sc.get("solver", "representation", "gaussian")
    summary: dict[str, Any] = {"gamma_c": gc, "delta_t": dt, "n_cycles": n_cycles, "representation": rep}
    if rep == "gaussian":
        times, states = gaussian.stroboscopic_moments(
            gaussian.drift_diffusion(spec_a),
            gaussian.drift_diffusion(spec_b),
            gaussian.thermal(spec_a.labels, occ),
            dt,
            n_cycles,
        )
    else:
        space = spec_a.default_space(_dims(sc, 3))
        Ha, chans = model.compile(spec_a, space, sparse=True)
        Hb, _ = model.compile(spec_b, space, sparse=True)
        res = lindblad.stroboscopic_evolve(
            Ha, Hb, chans, dt, n_cycles, _fock_initial(space, occ), _solver_options(sc), gamma_c=gc
        )
        times, states = res.times, res.states
        summary["warnings"] = res.warnings
    stride = max(1, (len(times) - 1) // max(1, sc.get("time", "samples", 101) - 1))
    keep = list(range(0, len(times), stride))
    if keep[-1] != len(times) - 1:
        keep.append(len(times) - 1)
    cols = _series(sc, times[keep], [states[k] for k in keep], pair)
    # each channel acts half of the time, so the reference runs at half speed
    ref_spec = _double_cooling_reference(t1, t2, gamma, n_th, kappa)
    ref_dd = gaussian.drift_diffusion(ref_spec)
    g_ref = gaussian.thermal(ref_spec.labels, {lb: occ.get(lb, 0.0) for lb in ref_spec.labels})
    ref = gaussian.evolve_moments(ref_dd, g_ref, [0.0, times[-1] / 2])[-1]
    v_ref = metrics.duan_variance(ref, pair).v_min
    v_fin = float(cols["v_min"][-1]) if "v_min" in cols else metrics.duan_variance(states[-1], pair).v_min
    summary.update(
        {
            "final": _final(cols),
            "v_reference": v_ref,
            "relative_deviation": abs(v_fin - v_ref) / v_ref,
            "v_effective_ss": metrics.duan_variance(gaussian.lyapunov_steady(ref_dd), pair).v_min,
        }
    )
    return Series(times[keep], cols, summary)


def run_adiabatic(sc: Scenario) -> Series:
    p = _system_params(sc)
    times = time_grid(sc)
    dims = _dims(sc, 3)
    opts = None
    if "method" in sc.sections.get("solver", {}):
        opts = _solver_options(sc)
    rep = lindblad.adiabatic_equivalence_check(p["theta1"], p["theta2"], p["gamma_m"], times, dims, opts)
    summary = {"gamma_c": rep.gamma_c, "max_trace_distance": rep.max_distance, "final": {"trace_distance": float(rep.distances[-1])}}
    return Series(times, {"trace_distance": rep.distances}, summary)


def _device_params(dev: dict[str, Any]) -> device.DeviceParams:
    return device.DeviceParams(
        C0=dev["C0"],
        d=dev["d"],
        m=dev["m"],
        omega_m=dev["omega_m"],
        omega=(dev["omega1"], dev["omega2"]),
        C=(dev["C1"], dev["C2"]),
        Vx=(dev["Vx1"], dev["Vx2"]),
        Q_m=dev.get("Q_m", math.inf),
        Q_c=dev.get("Q_c", math.inf),
        T=dev.get("T", 0.0),
    )


DEVICE_COLUMNS = ("g1", "g2", "theta1", "theta2", "Theta", "n_th", "gamma_m", "kappa", "Gamma_c", "T_pi", "settle_time")


def device_table(sc: Scenario) -> tuple[list[str], list[list[Any]], dict[str, Any]]:
    header = ["device", *DEVICE_COLUMNS, "scheme_a_ok", "scheme_b_ok", "quoted_Theta", "Theta_over_quoted"]
    rows, details = [], {}
    for name, dev in sc.devices.items():
        info = device.device_summary(_device_params(dev), dev.get("threshold", device.DEFAULT_RATIO))
        quoted = dev.get("quoted_Theta")
        theta = info.get("Theta")
        ratio = theta / quoted if (quoted and theta) else None
        rows.append([name, *(info.get(c) for c in DEVICE_COLUMNS), info["scheme_a_ok"], info["scheme_b_ok"], quoted, ratio])
        details[name] = {**info, "quoted_Theta": quoted, "Theta_over_quoted": ratio, "note": dev.get("note", "")}
    return header, rows, details


ENGINE_FUNCS = {
    "closedform": run_closedform,
    "gaussian": run_gaussian,
    "fock": run_fock,
    "stroboscopic": run_stroboscopic,
    "adiabatic": run_adiabatic,
}


# -- output ------------------------------------------------------------------------------


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def series_csv(s: Series) -> str:
    header = ["t", *s.columns]
    rows = [[t, *(s.columns[c][k] for c in s.columns)] for k, t in enumerate(s.times)]
    return csv_text(header, rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _label(value: float) -> str:
    return f"{value:.12g}"


def execute(sc: Scenario) -> Series:
    func = ENGINE_FUNCS.get(sc.engine)
    if func is None:
        raise ConfigError(f"engine {sc.engine!r} has no time series; use the device subcommand")
    return func(sc)


def _summary_row(param: str, value: float, s: Series) -> dict[str, Any]:
    row = {param: value}
    row.update({k: v for k, v in s.summary.items() if not isinstance(v, (dict, list))})
    row.update(s.summary.get("final", {}))
    return row


def _rows_to_csv(rows: list[dict[str, Any]]) -> str:
    header: list[str] = []
    for r in rows:
        header += [k for k in r if k not in header]
    return csv_text(header, [[r.get(h) for h in header] for r in rows])


def run_scenario(sc: Scenario, fmt: str = "csv") -> dict[str, str]:
    """All output files of ``run`` as {filename: content}; nothing is written here."""
    files: dict[str, str] = {}
    out = sc.sections.get("output", {})
    base = out.get("csv", f"{sc.name}.csv")
    stem = base[:-4] if base.endswith(".csv") else base
    summary_name = out.get("summary", f"{sc.name}_summary.json")
    meta = {"scenario": sc.name, "engine": sc.engine}

    if sc.engine == "device":
        header, rows, details = device_table(sc)
        if fmt == "csv":
            files[f"{stem}.csv"] = csv_text(header, rows)
        files[summary_name] = json_text({**meta, "devices": details})
        return files

    variants = sc.sections.get("variants")
    if not variants:
        s = execute(sc)
        if fmt == "csv":
            files[f"{stem}.csv"] = series_csv(s)
            if s.covariance is not None:
                files[f"{stem}_covariance.csv"] = s.covariance
        payload = {**meta, **s.summary}
        if fmt == "json":
            payload["series"] = {"t": s.times, **s.columns}
        files[summary_name] = json_text(payload)
        return files

    param, values = variants["parameter"], variants["values"]
    runs = []
    for v in values:
        s = execute(sc.with_parameter(param, v))
        runs.append((v, s))
        key = param.split(".")[-1]
        if fmt == "csv":
            files[f"{stem}_{key}={_label(v)}.csv"] = series_csv(s)
    rows = [_summary_row(param, v, s) for v, s in runs]
    if fmt == "csv":
        files[f"{stem}_summary.csv"] = _rows_to_csv(rows)
    payload = {**meta, "parameter": param, "variants": []}
    for v, s in runs:
        entry = {"value": v, **s.summary}
        if fmt == "json":
            entry["series"] = {"t": s.times, **s.columns}
        payload["variants"].append(entry)
    files[summary_name] = json_text(payload)
    return files


def sweep_scenario(sc: Scenario, parameter: str, values: Sequence[float]) -> str:
    if not values:
        raise ConfigError("sweep needs at least one value")
    base = replace(sc, sections={k: v for k, v in sc.sections.items() if k != "variants"})
    base.with_parameter(parameter, values[0])
    rows = [_summary_row(parameter, v, execute(base.with_parameter(parameter, v))) for v in values]
    return _rows_to_csv(rows)


def _write(files: dict[str, str], outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        with open(outdir / name, "w", newline="\n") as fh:
            fh.write(text)


# -- entry point --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="emsqueeze", description="Cavity-electromechanics entanglement scenarios.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="scenario file or bundled scenario name")
        p.add_argument("--output-dir", default=".", type=Path)
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    common(sub.add_parser("run", help="run a scenario and write its outputs"))
    sw = sub.add_parser("sweep", help="run a scenario once per parameter value")
    common(sw)
    sw.add_argument("--parameter", help="dotted path, e.g. system.kappa")
    sw.add_argument("--values", help="comma-separated values")
    common(sub.add_parser("device", help="print the device parameter table"))
    sub.add_parser("list-scenarios", help="list bundled scenarios")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-scenarios":
            for name, text in bundled_scenarios().items():
                sc = parse_scenario(text, f"{name}.cfg")
                desc = sc.get("scenario", "description", "")
                print(f"{name:18s} {sc.engine:13s} {desc}")
            return 0
        sc = load_scenario(args.config)
        if args.command == "run":
            files = run_scenario(sc, args.format)
            _write(files, args.output_dir)
            for name in files:
                print(args.output_dir / name)
            return 0
        if args.command == "sweep":
            sweep_cfg = sc.sections.get("sweep", {})
            parameter = args.parameter or sweep_cfg.get("parameter")
            if args.values is not None:
                try:
                    values = _float_list(args.values)
                except ValueError as exc:
                    raise ConfigError(f"bad --values: {exc}") from None
            else:
                values = sweep_cfg.get("values", [])
            if not parameter:
                raise ConfigError("sweep needs --parameter or a [sweep] section")
            if not values:
                raise ConfigError("sweep values list is empty")
            text = sweep_scenario(sc, parameter, values)
            if args.format == "json":
                rows = list(csv.DictReader(io.StringIO(text)))
                files = {f"{sc.name}_sweep.json": json_text({"scenario": sc.name, "parameter": parameter, "rows": rows})}
            else:
                files = {f"{sc.name}_sweep.csv": text}
            _write(files, args.output_dir)
            for name in files:
                print(args.output_dir / name)
            return 0
        if args.command == "device":
            if not sc.devices:
                raise ConfigError("config has no [device] section")
            header, rows, details = device_table(sc)
            if args.format == "json":
                sys.stdout.write(json_text(details))
            else:
                sys.stdout.write(csv_text(header, rows))
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (EmsqueezeError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"engine error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
