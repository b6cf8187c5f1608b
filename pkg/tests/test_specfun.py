import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import exp1

from radlimit.specfun import (TAIL_AT_ZERO, ball_mass, exp_integral_e1, exp_integral_e2,
                              first_moment_tail, head_from, kernel_envelope, kernel_eps_const,
                              kernel_fourier, kernel_K, second_antiderivative_tail, tail_from)

positive = st.floats(min_value=1e-6, max_value=600.0, allow_nan=False)


def test_e1_frozen_value():
    assert exp_integral_e1(1.0) == pytest.approx(0.2193839344, abs=1e-10)


def test_e1_bracket_at_ten():
    v = exp_integral_e1(10.0)
    assert np.exp(-10) / 11 < v < np.exp(-10) / 10


def test_e1_diverges_near_zero():
    assert exp_integral_e1(1e-8) > 17


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_e1_rejects_nonpositive(x):
    with pytest.raises(ValueError):
        exp_integral_e1(x)


@given(positive)
def test_e1_relative_accuracy(x):
    ref = exp1(x)
    if ref > 1e-300:
        assert abs(exp_integral_e1(x) - ref) <= 1e-12 * ref


def test_e1_matches_quadrature_on_both_branches():
    for x in (0.3, 1.0, 1.0 + 1e-12, 4.0):
        ref, _ = quad(lambda t: np.exp(-t) / t, x, np.inf, epsabs=0, epsrel=1e-13)
        assert exp_integral_e1(x) == pytest.approx(ref, rel=1e-12)


def test_e2_recurrence():
    x = np.array([0.1, 1.0, 7.0])
    assert np.allclose(exp_integral_e2(x), np.exp(-x) - x * exp1(x), rtol=1e-13)


def test_kernel_frozen_and_even():
    assert kernel_K(1.0) == pytest.approx(0.1096919672, abs=1e-10)
    assert kernel_K(-1.0) == kernel_K(1.0)
    with pytest.raises(ValueError):
        kernel_K(0.0)


@pytest.mark.parametrize("x", [0.01, 0.1, 1.0, 5.0])
def test_kernel_envelope_examples(x):
    lo, hi = kernel_envelope(x)
    assert lo <= kernel_K(x) <= hi


@given(st.floats(min_value=1e-8, max_value=300.0).filter(lambda v: v != 0),
       st.booleans())
def test_kernel_positive_even_and_enveloped(x, flip):
    v = -x if flip else x
    k = kernel_K(v)
    lo, hi = kernel_envelope(v)
    assert k == kernel_K(-v)
    assert lo <= k * (1 + 1e-13) and k <= hi * (1 + 1e-13)
    assert k > 0 or x > 700


def test_fourier_frozen_values():
    assert kernel_fourier(0.0) == pytest.approx(0.3989423, abs=1e-7)
    assert kernel_fourier(1.0) == pytest.approx(0.3133285, abs=1e-7)


def test_fourier_matches_oscillatory_quadrature_at_three():
    # independent route: QAWO near the singularity, QAWF on the tail
    k = lambda s: 0.5 * exp1(s)  # noqa: E731
    xi = 3.0
    near = quad(k, 0.0, 1.0, weight="cos", wvar=xi, limit=400)[0]
    far_c = quad(lambda s: k(s + 1.0), 0.0, np.inf, weight="cos", wvar=xi)[0]
    far_s = quad(lambda s: k(s + 1.0), 0.0, np.inf, weight="sin", wvar=xi)[0]
    ref = 2.0 * (near + far_c * np.cos(xi) - far_s * np.sin(xi)) / np.sqrt(2 * np.pi)
    assert kernel_fourier(xi) == pytest.approx(ref, abs=1e-6)
    assert kernel_fourier(xi, method="quadrature") == pytest.approx(ref, abs=1e-6)


def test_tail_examples():
    assert tail_from(1.0) == pytest.approx(0.0742476, abs=1e-6)
    assert tail_from(1.0) == pytest.approx(tail_from(1.0, method="quadrature"), abs=1e-12)
    assert tail_from(1e-12) == pytest.approx(TAIL_AT_ZERO, abs=1e-10)
    with pytest.raises(ValueError):
        tail_from(0.0)


def test_head_examples():
    assert head_from(-1.0) == pytest.approx(0.9257524, abs=1e-6)
    assert head_from(-30.0) > 1 - 1e-12
    assert head_from(-1e-12) == pytest.approx(0.5, abs=1e-10)
    assert head_from(-2.0) == pytest.approx(head_from(-2.0, method="quadrature"), abs=1e-12)


@pytest.mark.parametrize("x", [0.1, 1.0, 5.0])
def test_head_plus_tail_is_one(x):
    assert head_from(-x) + tail_from(x) == pytest.approx(1.0, abs=1e-15)


@given(st.floats(min_value=1e-9, max_value=700.0))
def test_head_plus_tail_property(x):
    assert abs(head_from(-x) + tail_from(x) - 1.0) <= 1e-15


def test_first_moment_tail():
    assert first_moment_tail(0.0) == 0.25
    assert first_moment_tail(1.0) == pytest.approx(first_moment_tail(1.0, method="quadrature"),
                                                   abs=1e-10)
    # the odd part cancels: moment over (-x, inf) equals moment over (x, inf)
    x = 0.7
    sym, _ = quad(lambda s: s * 0.5 * exp1(abs(s)), -x, 0.0, points=[0.0])
    assert first_moment_tail(x) == pytest.approx(sym + first_moment_tail(0.0), abs=1e-10)


def test_second_antiderivative_integrates_tail():
    for x in (0.0, 0.5, 3.0):
        ref, _ = quad(lambda s: tail_from(s) if s > 0 else 0.5, x, np.inf, epsabs=1e-14)
        assert second_antiderivative_tail(x) == pytest.approx(ref, abs=1e-12)


def test_eps_kernel_examples():
    assert kernel_eps_const(1.0, 1.0, 1.0) == pytest.approx(np.exp(-1) / (4 * np.pi), rel=1e-14)
    assert ball_mass(2.0, 0.1, 1e3) == 1.0
    with pytest.raises(ValueError):
        kernel_eps_const(1.0, 1.0, 0.0)


@given(st.floats(0.1, 10.0), st.floats(0.01, 2.0), st.floats(0.01, 5.0))
def test_eps_kernel_homogeneity(alpha, eps, r):
    lhs = kernel_eps_const(alpha, eps, r) * (eps / alpha) ** 3
    assert lhs == pytest.approx(kernel_eps_const(1.0, 1.0, alpha * r / eps), rel=1e-12)


def test_ball_mass_matches_radial_integral():
    alpha, eps, r = 1.3, 0.2, 0.5
    ref, _ = quad(lambda s: 4 * np.pi * s * s * kernel_eps_const(alpha, eps, s), 0, r)
    assert ball_mass(alpha, eps, r) == pytest.approx(ref, rel=1e-12)


@given(st.floats(0.0, 50.0))
def test_fourier_quadrature_agreement(xi):
    assert abs(kernel_fourier(xi) - kernel_fourier(xi, method="quadrature")) <= 1e-6
