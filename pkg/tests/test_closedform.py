import math

import numpy as np
import pytest
from scipy.linalg import expm
from hypothesis import given, settings
from hypothesis import strategies as st

from emsqueeze import RegimeError
from emsqueeze import closedform as cf
from emsqueeze import fock, gaussian, lindblad, metrics, model


def test_identity_at_zero():
    np.testing.assert_allclose(cf.propagator(1, 2, 0).matrix, np.eye(6), atol=1e-15)


def test_half_period_rows():
    bmap = cf.propagator(1, 2, math.pi / math.sqrt(3))
    a1 = bmap.row("a1")
    np.testing.assert_allclose(a1, [5 / 3, 0, 0, 0, 4 / 3, 0], atol=1e-12)
    np.testing.assert_allclose(bmap.row("b"), [0, 0, -1, 0, 0, 0], atol=1e-12)


def test_mechanical_row_exact_at_half_period():
    for t1, t2 in [(1, 2), (0.3, 0.7), (1, 1 + 2.5**-5)]:
        b = cf.propagator(t1, t2, cf.half_period(t1, t2)).row("b")
        np.testing.assert_allclose(b, [0, 0, -1, 0, 0, 0], atol=1e-12)


@given(st.floats(0.1, 3.0), st.floats(-5, 5))
def test_beam_splitter_limit(theta2, t):
    bmap = cf.propagator(0.0, theta2, t)
    np.testing.assert_allclose(bmap.row("a1"), [1, 0, 0, 0, 0, 0], atol=1e-12)
    c, s = math.cos(theta2 * t), math.sin(theta2 * t)
    np.testing.assert_allclose(bmap.row("a2"), [0, c, 1j * s, 0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(bmap.row("b"), [0, 1j * s, c, 0, 0, 0], atol=1e-12)


def test_half_period_values():
    assert cf.half_period(0, 1) == pytest.approx(math.pi)
    assert cf.half_period(1, 2) == pytest.approx(1.8137993642342178, rel=1e-14)
    r = 1 + 2.5**-5
    assert cf.half_period(1, r) == pytest.approx(math.pi / math.sqrt(r**2 - 1), rel=1e-14)


@pytest.mark.parametrize("t1, t2", [(2, 1), (1, 1), (-1, 1)])
def test_hyperbolic_regime_rejected(t1, t2):
    with pytest.raises(RegimeError):
        cf.propagator(t1, t2, 0.1)
    with pytest.raises(RegimeError):
        cf.half_period(t1, t2)


def test_squeeze_parameters():
    zeta_b = cf.squeeze_parameter(1, 2, "B")
    assert math.tanh(zeta_b) == pytest.approx(0.5)
    assert 2 * math.exp(-2 * zeta_b) == pytest.approx(2 / 3)
    zeta_a = cf.squeeze_parameter(1, 2, "A")
    assert math.tanh(zeta_a) == pytest.approx(0.8)
    assert 2 * math.exp(-2 * zeta_a) == pytest.approx(2 / 9)
    assert cf.half_period_variance(2) == pytest.approx(2 / 9)
    assert cf.squeeze_parameter(1, 1e8, "A") < 1e-7
    with pytest.raises(RegimeError):
        cf.squeeze_parameter(1, 1, "A")
    with pytest.raises(RegimeError):
        cf.squeeze_parameter(2, 1, "B")


def test_identity_map_on_gaussian():
    g = gaussian.thermal(("c1", "c2", "m"), [0.3, 0, 2.0])
    out = cf.apply_to_gaussian(cf.propagator(1, 2, 0), g)
    np.testing.assert_allclose(out.cov, g.cov, atol=1e-14)


@pytest.mark.parametrize("n_th", [0, 10, 100])
def test_half_period_cavity_block_is_tmsv(n_th):
    g0 = gaussian.thermal(("c1", "c2", "m"), {"m": n_th})
    out = cf.apply_to_gaussian(cf.propagator(1, 2, cf.half_period(1, 2)), g0)
    # the map at T_pi carries the a2 -> -a2 phase, hence the minus-sign squeezed vacuum
    np.testing.assert_allclose(out.marginal(("c1", "c2")).cov, gaussian.tmsv_cov(math.atanh(0.8), -1), atol=1e-10)
    np.testing.assert_allclose(out.marginal(("m",)).cov, g0.marginal(("m",)).cov, atol=1e-9 * (1 + n_th))
    v = metrics.duan_variance(out, ("c1", "c2")).v_min
    assert v == pytest.approx(2 / 9, rel=1e-9)


def test_half_period_map_against_fock_unitary():
    # brute force: Schrodinger evolution of the vacuum on a finite truncation
    spec = model.scheme_a(1, 2)
    space = spec.default_space([40, 40, 14])
    H, _ = model.compile(spec, space, sparse=True)
    tp = cf.half_period(1, 2)
    psi = lindblad.propagate_pure(H, fock.vacuum(space), [0.0, tp])[-1]
    moments = gaussian.gaussian_from_fock(psi)
    expected = cf.apply_to_gaussian(cf.propagator(1, 2, tp), gaussian.vacuum(spec.labels))
    np.testing.assert_allclose(moments.cov, expected.cov, atol=1e-5)


theta_pairs = st.tuples(st.floats(0.0, 2.0), st.floats(0.05, 2.0)).map(lambda p: (p[0], p[0] + p[1]))


@given(theta_pairs, st.floats(-20, 20))
def test_symplectic_invariant(thetas, t):
    bmap = cf.propagator(*thetas, t)
    assert bmap.symplectic_error() <= 1e-12
    assert bmap.reality_error() <= 1e-15


@given(theta_pairs, st.floats(-5, 5))
def test_periodicity(thetas, t):
    t1, t2 = thetas
    period = 2 * math.pi / math.sqrt(t2**2 - t1**2)
    a = cf.propagator(t1, t2, t).matrix
    b = cf.propagator(t1, t2, t + period).matrix
    np.testing.assert_allclose(a, b, atol=1e-10 * max(1.0, np.max(np.abs(a))))


@given(theta_pairs, st.floats(0, 10))
def test_quadrature_matrix_is_symplectic(thetas, t):
    S = cf.propagator(*thetas, t).quadrature_matrix()
    J = gaussian.symplectic_form(3)
    np.testing.assert_allclose(S @ J @ S.T, J, atol=1e-10 * max(1.0, np.max(np.abs(S)) ** 2))


@given(st.tuples(st.floats(0.05, 2.0), st.floats(0.05, 2.0)).map(lambda p: (p[0], p[0] + p[1])), st.floats(0, 5))
def test_map_matches_drift_exponential(thetas, t):
    A = gaussian.drift_diffusion(model.scheme_a(*thetas)).A
    S = cf.propagator(*thetas, t).quadrature_matrix()
    np.testing.assert_allclose(S, expm(A * t), atol=1e-9 * max(1.0, np.max(np.abs(S))))


@settings(max_examples=8)
@given(st.floats(0.1, 0.4), st.floats(0.3, 1.0), st.floats(0.05, 1.0))
def test_agrees_with_fock_evolution(t1, gap, t):
    t2 = t1 + gap
    spec = model.scheme_a(t1, t2)
    space = spec.default_space([16, 16, 10])
    amps = [0.1, -0.05j, 0.1 + 0.05j]
    H, _ = model.compile(spec, space, sparse=True)
    psi = lindblad.propagate_pure(H, fock.coherent_state(space, amps, tail_tol=1e-12), [0.0, t])[-1]
    expected = cf.apply_to_gaussian(cf.propagator(t1, t2, t), gaussian.coherent(spec.labels, amps))
    a = fock.annihilation(space, "c1", sparse=True)
    n1 = fock.number(space, "c1", sparse=True)
    assert fock.expectation(a, psi) == pytest.approx(
        (expected.mean[0] + 1j * expected.mean[1]) / math.sqrt(2), abs=1e-6
    )
    assert fock.expectation(n1, psi).real == pytest.approx(metrics.occupations(expected)["c1"], abs=1e-6)
    got = gaussian.gaussian_from_fock(psi)
    np.testing.assert_allclose(got.mean, expected.mean, atol=1e-6)
    np.testing.assert_allclose(got.cov, expected.cov, atol=1e-6)
