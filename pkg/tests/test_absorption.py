import numpy as np
import pytest

from radlimit.absorption import AbsorptionField
from radlimit.geometry import ConvexDomain

BALL = ConvexDomain.ball()


def test_constant_and_radial_values():
    assert AbsorptionField.constant(2.0)(np.zeros((4, 3))).tolist() == [2.0] * 4
    a = AbsorptionField.radial([1.0, 0.0, 0.5])
    assert a(np.array([0.0, 0.6, 0.8])) == pytest.approx(1.5)
    assert a.bounds(BALL) == pytest.approx((1.0, 1.5))


def test_axial_gradient_matches_difference():
    a = AbsorptionField.axial([1.0, 0.0, 0.5])
    x = np.array([0.3, 0.1, -0.2])
    h = 1e-6
    fd = (a(x + [h, 0, 0]) - a(x - [h, 0, 0])) / (2 * h)
    assert a.gradient(x)[0] == pytest.approx(fd, rel=1e-8)


def test_optical_depth_constant_is_linear():
    a = AbsorptionField.constant(2.0)
    tau = a.optical_depth(np.zeros(3), np.array([1.0, 0, 0]), 0.5, 0.1)
    assert tau == pytest.approx(10.0)


def test_grid_field_reproduces_smooth_data():
    ax = np.linspace(-1.2, 1.2, 13)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    vals = 1.0 + 0.1 * X + 0.05 * Y * Z
    a = AbsorptionField("grid", grid_axes=[ax, ax, ax], grid_values=vals)
    x = np.array([0.31, -0.2, 0.47])
    assert a(x) == pytest.approx(1.0 + 0.031 - 0.05 * 0.2 * 0.47, abs=1e-10)
    c0, c1 = a.bounds(BALL)
    assert 0 < c0 <= a(x) <= c1


def test_invalid_fields_rejected():
    with pytest.raises(ValueError):
        AbsorptionField.constant(0.0)
    with pytest.raises(ValueError):
        AbsorptionField("spline")
    with pytest.raises(ValueError):
        AbsorptionField.radial([])
