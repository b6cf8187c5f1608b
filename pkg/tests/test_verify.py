import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radlimit.absorption import AbsorptionField
from radlimit.geometry import ConvexDomain
from radlimit.milne import HalfLineGrid, assemble_operator
from radlimit.sources import IsotropicSource
from radlimit.transport import TransportSolver
from radlimit.verify import (SupersolutionParams, calibrate_supersolution, check_supersolution,
                             phi_eps, positivity_harness, recipe_c1, recipe_gamma)

BALL = ConvexDomain.ball()
CONST = AbsorptionField.constant(1.0)
RADIAL = AbsorptionField.radial([1.0, 0.0, 0.5])
DEEP = np.array([[0.1, 0.0, 0.0], [0.0, 0.2, 0.1]])


@pytest.fixture(scope="module")
def params():
    return SupersolutionParams.from_recipe(BALL, CONST)


def test_recipes():
    assert recipe_c1(BALL) == 22.0
    g = recipe_gamma(0.5)
    assert 0 < g < 1.0 / 3.0
    assert recipe_gamma(0.5, c0=1.0, c1=2.0) < g


def test_params_validation():
    with pytest.raises(ValueError):
        SupersolutionParams(mu=1.5, gamma=0.1, C1=1, C2=1, C3=1, R=1)
    with pytest.raises(ValueError):
        SupersolutionParams(mu=0.5, gamma=0.4, C1=1, C2=1, C3=1, R=1)
    with pytest.raises(ValueError):
        SupersolutionParams(mu=0.5, gamma=0.1, C1=1, C2=1, C3=1, R=1, c0=2.0, c1=1.0)


def test_eps_window(params):
    # mu R / 2 = 0.25 against 2 eps ln(1/eps): 0.18 at eps = 0.025, 0.30 at 0.05
    assert params.eps_window(0.025)
    assert not params.eps_window(0.05)


@given(st.tuples(*[st.floats(-1, 1)] * 3), st.floats(0.01, 0.5),
       st.sampled_from(["constant", "variable"]))
def test_phi_nonnegative_and_uniformly_bounded(v, eps, variant):
    p = SupersolutionParams.from_recipe(BALL, RADIAL)
    x = np.asarray(v) * 0.999 / max(np.linalg.norm(v), 1.0)
    val = phi_eps(x, p, eps, BALL, 2.0, variant)
    assert 0 <= val <= p.uniform_bound(2.0, variant)


def test_phi_continuous_at_wedge_switch(params):
    d = params.mu * params.R
    r = BALL.radius - d
    a = phi_eps(np.array([r - 1e-13, 0, 0]), params, 0.05, BALL)
    b = phi_eps(np.array([r + 1e-13, 0, 0]), params, 0.05, BALL)
    assert abs(a - b) <= 1e-12


def test_deep_interior_margin(params):
    eps = 0.05
    r = check_supersolution(params, eps, BALL, CONST, DEEP)
    assert np.all(r["distance"] >= params.mu * params.R)
    assert r["min_margin"] >= eps**2 - 1e-6


def test_degenerate_gamma_reduces_to_quadratic_bound(params):
    eps = 0.05
    flat = dataclasses.replace(params, gamma=0.0, C3=1.0)
    r = check_supersolution(flat, eps, BALL, CONST, DEEP)
    target = np.exp(-r["distance"] / eps)
    assert np.allclose(r["margin"] + target, 2 * eps**2, rtol=1e-3)


def test_calibration_returns_passing_constants():
    p = SupersolutionParams.from_recipe(BALL, RADIAL)
    probes = np.array([[0.1, 0.0, 0.0], [0.0, 0.0, 0.85]])
    best, reports = calibrate_supersolution(p, [0.2, 0.1], BALL, RADIAL, probes,
                                            variant="variable", C2_grid=(1.0,),
                                            C3_grid=(0.5, 1.0, 2.0), lam_grid=(1.0,),
                                            mu_order=4, phi_order=16)
    assert min(r["min_margin"] for r in reports) >= 0
    assert best.C3 in (0.5, 1.0, 2.0)


def test_milne_harness_and_sign_flip():
    op = assemble_operator(HalfLineGrid.graded(y_max=15.0, h_max=0.1))
    assert positivity_harness(op, trials=30, seed=1).passed
    flip = positivity_harness(op, trials=1, seed=1, sign_flip=True)
    assert not flip.passed and flip.offending_source is not None
    assert np.all(flip.offending_source <= 0)


def test_transport_harness():
    W = TransportSolver(eps=0.2).fit(BALL, IsotropicSource(1.0)).operator_
    assert positivity_harness(W, trials=5, seed=2).passed
    with pytest.raises(ValueError):
        positivity_harness(-W, trials=1)
    with pytest.raises(ValueError):
        positivity_harness(W[:3], trials=1)
