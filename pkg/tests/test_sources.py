import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radlimit.absorption import AbsorptionField
from radlimit.geometry import ConvexDomain
from radlimit.sources import (ConeSource, IsotropicSource, TabulatedSource, domain_source,
                              make_source, planar_source)
from radlimit.specfun import exp_integral_e1

BALL = ConvexDomain.ball()
ISO = IsotropicSource(1.0)
CONE = ConeSource((0.0, 0.0, 1.0), np.pi / 4, 2.0)

unit = st.tuples(*[st.floats(-1, 1)] * 3).map(np.array).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: v / np.linalg.norm(v))


def test_isotropic_planar_examples():
    n = np.array([0.0, 0.0, 1.0])
    assert planar_source(ISO, n, 0.0) == pytest.approx(2 * np.pi, rel=1e-14)
    ref = 2 * np.pi * (np.exp(-1) - exp_integral_e1(1.0))
    assert ref == pytest.approx(2 * np.pi * 0.148496, rel=1e-5)
    assert planar_source(ISO, n, 1.0) == pytest.approx(ref, rel=1e-13)
    assert planar_source(ISO, n, 1.0, method="quadrature") == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("g", [ISO, CONE])
def test_planar_deep_bound(g):
    n = np.array([0.3, 0.0, -1.0]) / np.linalg.norm([0.3, 0.0, -1.0])
    assert planar_source(g, n, 40.0, method="quadrature") <= g.norm1 * np.exp(-40.0)


@given(unit)
def test_isotropic_planar_rotation_invariant(n):
    x = np.array([0.0, 0.3, 2.0])
    assert np.allclose(planar_source(ISO, n, x, method="quadrature"),
                       planar_source(ISO, np.array([0, 0, 1.0]), x), rtol=1e-10, atol=0)


@given(unit, st.floats(0.0, 30.0), st.floats(0.0, 5.0))
def test_planar_nonincreasing(n, x, dx):
    a = planar_source(CONE, n, x)
    b = planar_source(CONE, n, x + dx)
    assert b <= a * (1 + 1e-12) + 1e-300


def test_cone_planar_converges_under_refinement():
    n = np.array([0.2, 0.1, 1.0]) / np.linalg.norm([0.2, 0.1, 1.0])
    x = np.array([0.0, 0.05, 0.5, 3.0])
    a = planar_source(CONE, n, x, mu_order=16)
    b = planar_source(CONE, n, x, mu_order=64)
    assert np.allclose(a, b, rtol=1e-9)


def test_cone_norms():
    assert CONE.norm1 == pytest.approx(2.0 * 2 * np.pi * (1 - np.cos(np.pi / 4)), rel=1e-14)
    assert CONE.norm_inf == 2.0


def test_domain_source_center_of_ball():
    for alpha, eps in ((1.0, 0.5), (2.0, 0.3)):
        val = domain_source(ISO, BALL, AbsorptionField.constant(alpha), eps, np.zeros(3))
        assert val == pytest.approx(4 * np.pi * np.exp(-alpha / eps), rel=1e-12)


def test_domain_source_deep_interior_bound():
    x = np.array([0.1, 0.0, 0.0])
    for g in (ISO, CONE):
        v = domain_source(g, BALL, AbsorptionField.constant(1.0), 0.1, x)
        assert v <= g.norm1 * np.exp(-BALL.signed_distance(x) / 0.1)


def test_domain_source_cone_refinement():
    # near-boundary point below the pole, cone aligned with the inward normal
    x = np.array([0.0, 0.0, 0.95])
    alpha = AbsorptionField.radial([1.0, 0.0, 0.5])
    cone = ConeSource((0.0, 0.0, -1.0), np.pi / 3)
    vals = [domain_source(cone, BALL, alpha, 0.1, x, order=o) for o in (32, 64, 128)]
    assert abs(vals[0] - vals[2]) <= 1e-6 * vals[2]


def test_domain_source_vanishes_as_eps_shrinks():
    x = np.array([0.2, 0.1, 0.0])
    vals = [domain_source(ISO, BALL, None, eps, x) for eps in (0.1, 0.05, 0.025, 0.0125)]
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-20


def test_tabulated_source_roundtrip(tmp_path):
    theta = np.linspace(0, np.pi, 13)
    phi = np.linspace(0, 2 * np.pi, 25)[:-1]
    path = tmp_path / "g.csv"
    with open(path, "w") as fh:
        fh.write("theta,phi,value\n")
        for t in theta:
            for p in phi:
                fh.write(f"{float(t)!r},{float(p)!r},1.5\n")
    g = TabulatedSource.from_csv(str(path))
    assert g.norm1 == pytest.approx(1.5 * 4 * np.pi, rel=1e-3)
    n = np.array([0.0, 0.0, 1.0])
    assert planar_source(g, n, 0.0) == pytest.approx(1.5 * 2 * np.pi, rel=1e-3)


def test_make_source_rejects_unknown_kind():
    assert make_source({"kind": "isotropic", "level": 2.0}).norm1 == pytest.approx(8 * np.pi)
    with pytest.raises(ValueError):
        make_source({"kind": "laser"})
    with pytest.raises(ValueError):
        IsotropicSource(-1.0)
