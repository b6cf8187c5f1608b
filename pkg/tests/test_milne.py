import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radlimit.geometry import ConvexDomain
from radlimit.milne import (BoundaryTemperatureMap, HalfLineGrid, MilneSolver,
                            assemble_operator, hat_weights, milne_limit, picard_iterates,
                            solve_milne, temperature_from_u)
from radlimit.sources import ConeSource, IsotropicSource, planar_source
from radlimit.specfun import (exp_integral_e2, first_moment_tail, kernel_K,
                              second_antiderivative_tail, tail_from)


@pytest.fixture(scope="module")
def op():
    return assemble_operator(HalfLineGrid.graded())


@pytest.fixture(scope="module")
def small_op():
    return assemble_operator(HalfLineGrid.graded(y_max=12.0, h_max=0.1))


def _tail(y):
    return np.where(y > 0, tail_from(np.maximum(y, 1e-300)), 0.5)


def test_default_grid_shape(op):
    g = op.grid
    assert g.y_max == 40.0 and g.spacing[0] <= 1e-3 and g.spacing.max() <= 0.25
    assert 1100 <= g.size <= 1300


def test_grid_rejects_coarse_spacing():
    with pytest.raises(ValueError):
        HalfLineGrid(np.array([0.0, 0.01, 0.5]))
    with pytest.raises(ValueError):
        HalfLineGrid(np.array([0.0, 1e-3, 0.5]))


def test_constant_row_sums(op):
    y = op.grid.nodes
    ones = op.apply(np.ones_like(y))
    assert np.max(np.abs(ones - (1.0 - op.masses))) <= 1e-10
    assert np.max(np.abs(ones - _tail(y))) <= 1e-10
    # exact row sums are positive; beyond y ~ 30 they fall below roundoff
    assert np.all(ones[y <= 30] > 0)


def test_identity_rows_match_closed_form(op):
    y = op.grid.nodes
    k = np.r_[0.0, kernel_K(y[1:])]
    exact = y / 4 * np.exp(-y) - np.exp(-y) / 4 - y**2 / 2 * k
    got = op.apply(y)
    half = y <= 0.5 * op.grid.y_max
    assert np.max(np.abs(got - exact)[half]) <= 1e-8
    # remaining rows differ by the constant continuation beyond Y_max, known in closed form
    closure = second_antiderivative_tail(op.grid.y_max - y)
    assert np.max(np.abs(got - closure - exact)) <= 1e-8


def test_sign_pattern(op):
    A = op.matrix
    off = A - np.diag(np.diag(A))
    assert off.max() <= 0 and np.diag(A).min() > 0
    assert np.all(op.weights >= 0)


def test_hat_weights_integrate_linear_functions():
    y = np.linspace(0.0, 5.0, 41)
    t = np.array([-0.3, 0.0, 1.01, 2.5, 5.0, 6.0])
    W = hat_weights(y, t)
    mass = np.array([_integral(tt, 0, 5) for tt in t])
    mom = np.array([_integral(tt, 0, 5, first=True) for tt in t])
    assert np.allclose(W.sum(axis=1), mass, atol=1e-13)
    assert np.allclose(W @ y, mom, atol=1e-12)


def _integral(t, a, b, first=False):
    # closed-form integral of K(t - y) (times y if first) over [a, b]
    def F(z):  # integral over (-inf, z] of K(s) ds and of s K(s) ds
        if z >= 0:
            return 1.0 - _tail(np.array(z)), -first_moment_tail(z)
        return _tail(np.array(-z)), -first_moment_tail(-z)
    m_hi, s_hi = F(t - a)
    m_lo, s_lo = F(t - b)
    mass = float(m_hi - m_lo)
    if not first:
        return mass
    # y = t - s
    return t * mass - float(s_hi - s_lo)


def test_zero_source_gives_zero(op):
    prof = solve_milne(op, np.zeros(op.grid.size))
    assert np.all(prof.values == 0)


def test_isotropic_equilibrium(op):
    c = 1.0
    G = lambda y: 2 * np.pi * c * exp_integral_e2(y)  # noqa: E731
    prof = solve_milne(op, G)
    assert np.max(np.abs(prof.values - 4 * np.pi)) <= 1e-8 * 4 * np.pi
    assert prof.residual <= 1e-8
    plateau, moment, _ = milne_limit(prof, G)
    assert plateau == pytest.approx(4 * np.pi, rel=1e-4)
    assert moment == pytest.approx(4 * np.pi, rel=1e-4)


def test_exponential_source_layer(op):
    G = lambda y: np.exp(-y)  # noqa: E731
    prof, gap = solve_milne(op, G, picard_steps=200)
    assert np.all(prof.values >= 0)
    plateau, moment, rate = milne_limit(prof, G)
    assert rate <= -0.45
    assert abs(plateau - moment) <= 1e-3 * plateau
    # iterates rise monotonically and stay below the direct solution
    it, worst = picard_iterates(op, G, 200)
    assert worst >= -1e-12
    assert np.all(it <= prof.values + 1e-10)
    assert gap > 0


def test_picard_detects_non_monotone_quadrature(small_op):
    with pytest.raises(ArithmeticError):
        picard_iterates(small_op, -np.exp(-small_op.grid.nodes), 3)


def test_negative_source_rejected(op):
    with pytest.raises(ValueError):
        solve_milne(op, -np.ones(op.grid.size))


def test_uniform_bound_by_exponential_source(op):
    cone = ConeSource((0.3, 0.0, -1.0), 0.6, 3.0)
    n = np.array([0.0, 0.0, 1.0])
    y = op.grid.nodes
    u = solve_milne(op, planar_source(cone, n, y)).values
    bound = solve_milne(op, cone.norm1 * np.exp(-y)).values
    assert np.all(u <= bound + 1e-10 * bound.max())


@given(st.integers(0, 2**32 - 1))
def test_discrete_maximum_principle(small_op, seed):
    rng = np.random.default_rng(seed)
    g = rng.exponential(size=small_op.grid.size) * (rng.random(small_op.grid.size) < 0.3)
    u = small_op.solve(g)
    assert u.min() >= -1e-10 * max(u.max(), 1.0)


def test_solver_estimator_interface():
    s = MilneSolver().fit(lambda y: np.exp(-y))
    assert s.get_params()["y_max"] == 40.0
    assert s.predict(np.array([0.0, 100.0]))[1] == pytest.approx(s.profile_.values[-1])
    assert s.u_inf_ == pytest.approx(s.u_inf_moment_, rel=1e-3)


def test_boundary_map_isotropic_is_constant():
    m = BoundaryTemperatureMap(samples=12).fit(ConvexDomain.ball(), IsotropicSource(1.0))
    assert np.allclose(m.u_inf_, 4 * np.pi, rtol=1e-4)
    assert np.allclose(m.predict(m.points_[:3] * 1.0), m.u_inf_[:3])


def test_boundary_map_cone_peaks_against_axis():
    axis = np.array([0.0, 0.0, 1.0])
    cone = ConeSource(axis, np.pi / 4)
    m = BoundaryTemperatureMap(samples=32, mu_order=8).fit(ConvexDomain.ball(), cone)
    top = int(np.argmax(m.u_inf_))
    assert m.normals_[top] @ axis == pytest.approx(np.min(m.normals_ @ axis))
    assert np.all(m.u_inf_ >= 0)


def test_boundary_map_lipschitz_stable_under_refinement():
    cone = ConeSource((0.0, 0.0, 1.0), np.pi / 3)
    lip = [BoundaryTemperatureMap(samples=s, mu_order=8).fit(ConvexDomain.ball(), cone)
           .lipschitz_quotients().max() for s in (16, 64)]
    assert lip[1] <= 2.0 * lip[0]


def test_temperature_examples():
    assert temperature_from_u(4 * np.pi, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert temperature_from_u(0.0) == 0.0
    T = 1.7
    assert temperature_from_u(4 * np.pi * 2.0 * T**4, 2.0) == pytest.approx(T, abs=1e-14)
    with pytest.raises(ValueError):
        temperature_from_u(-1.0)
