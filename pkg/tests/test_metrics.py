import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emsqueeze import SpaceError
from emsqueeze import fock, gaussian, metrics, model
from emsqueeze.metrics import duan_variance, fidelity_with_tmsv, occupations, purity, trace_distance

CAV = ("c1", "c2")


def _fock_space(dim=30):
    return fock.make_space([dim, dim], list(CAV))


def test_vacuum_is_boundary():
    r = duan_variance(gaussian.vacuum(CAV))
    assert r.v_minus == pytest.approx(2) and r.v_plus == pytest.approx(2)
    assert not r.entangled


def test_tmsv_variance():
    zeta = 0.7
    r = duan_variance(gaussian.tmsv(zeta))
    assert r.v_minus == pytest.approx(2 * math.exp(-2 * zeta), rel=1e-12)
    assert r.entangled


def test_thermal_pair_variance_fock_oracle():
    nbar = 0.4
    space = _fock_space(25)
    rho = fock.thermal_state(space, [nbar, nbar], tail_tol=1e-8)
    expected = 2 * (2 * nbar + 1)
    assert duan_variance(rho).v_min == pytest.approx(expected, abs=1e-6)
    assert duan_variance(gaussian.thermal(CAV, [nbar, nbar])).v_min == pytest.approx(expected, rel=1e-12)


def test_needs_two_modes():
    with pytest.raises(SpaceError):
        duan_variance(gaussian.vacuum(("a",)))
    with pytest.raises(SpaceError):
        duan_variance(gaussian.vacuum(CAV), ("c1", "c1"))


@given(st.floats(0, 1.5))
def test_sign_flip_swaps_conventions(zeta):
    plus = duan_variance(gaussian.tmsv(zeta, 1))
    minus = duan_variance(gaussian.tmsv(zeta, -1))
    assert plus.v_minus == pytest.approx(minus.v_plus, rel=1e-12)
    assert plus.v_plus == pytest.approx(minus.v_minus, rel=1e-12)
    assert plus.v_min == pytest.approx(minus.v_min, rel=1e-12)


@given(st.floats(0, 1.0), st.sampled_from([1, -1]))
def test_gaussian_and_fock_paths_agree(zeta, sign):
    space = _fock_space(40)
    f = duan_variance(fock.tmsv_state(space, zeta, sign, tail_tol=1.0))
    g = duan_variance(gaussian.tmsv(zeta, sign))
    assert f.v_minus == pytest.approx(g.v_minus, abs=1e-6)
    assert f.v_plus == pytest.approx(g.v_plus, abs=1e-6)


@given(st.floats(0, 1.5), st.floats(0, 1.5), st.floats(-1, 1), st.floats(-1, 1))
def test_separable_states_not_entangled(s1, s2, n1, n2):
    # products of single-mode squeezed thermal states
    def single(s, n):
        return np.diag([(abs(n) + 0.5) * math.exp(-2 * s), (abs(n) + 0.5) * math.exp(2 * s)])

    cov = np.zeros((4, 4))
    cov[:2, :2] = single(s1, n1)
    cov[2:, 2:] = single(s2, n2)
    r = duan_variance(gaussian.GaussianState(np.zeros(4), cov, CAV))
    assert r.v_min >= 2 - 1e-12
    assert not r.entangled


@given(st.floats(0, 1.2), st.floats(0, 3))
def test_uncertainty_forced_sum(zeta, nbar):
    cov = gaussian.tmsv_cov(zeta) + nbar * np.eye(4)
    r = duan_variance(gaussian.GaussianState(np.zeros(4), cov, CAV))
    assert r.v_minus >= 0 and r.v_plus >= 0
    assert r.v_minus + r.v_plus >= 4 - 1e-12


def test_fidelity_self_and_vacuum():
    zeta = 0.5
    assert fidelity_with_tmsv(gaussian.tmsv(zeta), zeta) == pytest.approx(1, abs=1e-12)
    assert fidelity_with_tmsv(gaussian.vacuum(CAV), zeta) == pytest.approx(1 / math.cosh(zeta) ** 2, rel=1e-12)
    space = _fock_space(30)
    assert fidelity_with_tmsv(fock.tmsv_state(space, zeta), zeta) == pytest.approx(1, abs=1e-12)
    assert fidelity_with_tmsv(fock.vacuum(space), zeta) == pytest.approx(1 / math.cosh(zeta) ** 2, rel=1e-10)


def test_fidelity_sign_matters():
    zeta = 0.5
    assert fidelity_with_tmsv(gaussian.tmsv(zeta, -1), zeta, sign=1) < 0.9


@given(st.floats(0, 1), st.floats(0, 1), st.sampled_from([1, -1]))
def test_fidelity_paths_agree(z_state, z_target, sign):
    space = _fock_space(40)
    f = fidelity_with_tmsv(fock.tmsv_state(space, z_state, sign, tail_tol=1.0), z_target, sign)
    g = fidelity_with_tmsv(gaussian.tmsv(z_state, sign), z_target, sign)
    assert f == pytest.approx(g, abs=1e-8)


@given(st.floats(0, 1), st.floats(0, 2))
def test_gaussian_fidelity_symmetric(zeta, nbar):
    rho = gaussian.tmsv_cov(0.3) + nbar * np.eye(4)
    target = gaussian.tmsv_cov(zeta)
    assert metrics.gaussian_fidelity_pure(rho, target) == pytest.approx(metrics.gaussian_fidelity_pure(target, rho))


def test_fidelity_rejects_displaced_gaussian():
    with pytest.raises(ValueError):
        fidelity_with_tmsv(gaussian.coherent(CAV, [0.1, 0]), 0.5)


def test_fidelity_on_subsystem():
    space = fock.make_space([20, 3, 20], ["c1", "m", "c2"])
    g = fidelity_with_tmsv(fock.vacuum(space), 0.4, pair=("c1", "c2"))
    assert g == pytest.approx(1 / math.cosh(0.4) ** 2, rel=1e-10)


def test_occupations():
    assert occupations(gaussian.vacuum(CAV)) == {"c1": 0.0, "c2": 0.0}
    zeta = 0.6
    space = _fock_space(40)
    for state in (gaussian.tmsv(zeta), fock.tmsv_state(space, zeta)):
        for v in occupations(state).values():
            assert v == pytest.approx(math.sinh(zeta) ** 2, rel=1e-8)
    th = occupations(gaussian.thermal(CAV, [0.3, 1.1]))
    assert th == {"c1": pytest.approx(0.3), "c2": pytest.approx(1.1)}
    coh = occupations(gaussian.coherent(CAV, [0.5j, 0]))
    assert coh["c1"] == pytest.approx(0.25)


def test_purity():
    assert purity(gaussian.tmsv(0.8)) == pytest.approx(1)
    assert purity(fock.tmsv_state(_fock_space(30), 0.3)) == pytest.approx(1)
    assert purity(gaussian.thermal(("a",), [1.0])) == pytest.approx(1 / 3)
    space = fock.make_space([60], ["a"])
    f = purity(fock.thermal_state(space, [0.5], tail_tol=1e-10))
    g = purity(gaussian.thermal(("a",), [0.5]))
    assert f == pytest.approx(g, abs=1e-8)


def test_trace_distance():
    space = fock.make_space([3], ["a"])
    a, b = fock.fock_state(space, [0]), fock.fock_state(space, [1])
    assert trace_distance(a, b) == pytest.approx(1)
    assert trace_distance(a, a.as_density()) == pytest.approx(0)
    with pytest.raises(SpaceError):
        trace_distance(a, fock.vacuum(fock.make_space([4], ["a"])))


@pytest.mark.xfail(
    strict=True,
    reason="with n_th = 0.01 the two-resonator steady state reaches fidelity 0.979, short of 0.999",
)
def test_two_mr_steady_fidelity():
    spec = model.two_mr_system(1, 2, 15, 15, 0.01, 1e-3, 1e-3)
    ss = gaussian.lyapunov_steady(gaussian.drift_diffusion(spec))
    assert fidelity_with_tmsv(ss, math.atanh(0.5), sign=-1, pair=CAV) >= 0.999


def test_two_mr_steady_fidelity_value():
    spec = model.two_mr_system(1, 2, 15, 15, 0.01, 1e-3, 1e-3)
    ss = gaussian.lyapunov_steady(gaussian.drift_diffusion(spec))
    assert fidelity_with_tmsv(ss, math.atanh(0.5), sign=-1, pair=CAV) == pytest.approx(0.979, abs=1e-3)
    cold = gaussian.lyapunov_steady(gaussian.drift_diffusion(model.two_mr_system(1, 2, 15, 15, 0, 0, 0)))
    assert fidelity_with_tmsv(cold, math.atanh(0.5), sign=-1, pair=CAV) == pytest.approx(1, abs=1e-10)
