"""Distances, path gains, steering vectors, and their gradients."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isac_planner import geometry as ge
from isac_planner.errors import DegenerateGeometry

GEOM = ge.ArrayGeometry(nx=8, ny=8, dx=0.05, dy=0.05, wavelength=0.1)


def steering_at(q, h, v, geom=GEOM):
    return ge.steering_vector(ge.direction_cosines(q, h, v), geom)


def test_slant_distance_examples():
    assert ge.slant_distance_sq([0, 0], 80.0, [0, 0]) == pytest.approx(6400.0)
    assert ge.slant_distance_sq([60, 0], 80.0, [0, 0]) == pytest.approx(10000.0)
    assert ge.slant_distance_sq([0, 0], 0.0, [0, 0]) == 0.0


def test_path_gain_examples():
    assert ge.path_gain([0, 0], 80.0, [0, 0], 1.0) == pytest.approx(1 / 6400)
    assert ge.path_gain([60, 0], 80.0, [0, 0], 1.0) == pytest.approx(1e-4)
    with pytest.raises(DegenerateGeometry):
        ge.path_gain([0, 0], 0.0, [0, 0], 1.0)


def test_path_gain_decreasing_in_horizontal_distance():
    radii = np.linspace(0.0, 400.0, 60)
    gains = ge.path_gain(np.column_stack([radii, np.zeros_like(radii)
                                          ]), 80.0, [0.0, 0.0], 1.0)
    assert np.all(np.diff(gains) < 0)
    assert np.all(gains > 0)


def test_direction_cosines_examples():
    over = ge.direction_cosines([5.0, -3.0], 80.0, [5.0, -3.0])
    assert over.phi == pytest.approx(0.0, abs=1e-15)
    assert over.omega == pytest.approx(0.0, abs=1e-15)
    assert over.zenith == pytest.approx(0.0, abs=1e-12)

    cos_x = ge.direction_cosines([100.0, 0.0], 80.0, [0.0, 0.0])
    assert cos_x.phi == pytest.approx(100 / np.sqrt(16400))
    assert cos_x.omega == pytest.approx(0.0, abs=1e-15)

    cos_y = ge.direction_cosines([0.0, 100.0], 80.0, [0.0, 0.0])
    assert cos_y.omega == pytest.approx(100 / np.sqrt(16400))
    assert cos_y.phi == pytest.approx(0.0, abs=1e-15)


@given(st.floats(-400, 400), st.floats(-400, 400), st.floats(30, 150))
@settings(max_examples=60, deadline=None)
def test_direction_cosine_identities(x, y, h):
    cos = ge.direction_cosines([x, y], h, [0.0, 0.0])
    assert cos.phi ** 2 + cos.omega ** 2 <= 1.0 + 1e-12
    assert cos.phi == pytest.approx(np.sin(cos.zenith) * np.cos(cos.azimuth),
                                    abs=1e-12)
    assert cos.omega == pytest.approx(np.sin(cos.zenith) * np.sin(cos.azimuth),
                                      abs=1e-12)


def test_steering_vector_overhead_is_all_ones():
    a = ge.steering_vector((0.0, 0.0), GEOM)
    assert np.allclose(a, 1.0)


def test_steering_vector_half_wavelength_endfire():
    geom = ge.ArrayGeometry(nx=2, ny=1, dx=0.05, dy=0.05, wavelength=0.1)
    a = ge.steering_vector((1.0, 0.0), geom)
    assert np.allclose(a, [1.0, -1.0], atol=1e-12)


@given(st.floats(0, np.pi / 2), st.floats(-np.pi, np.pi))
@settings(max_examples=60, deadline=None)
def test_steering_vector_unit_modulus(zen, azi):
    a = ge.steering_from_angles(zen, azi, GEOM)
    assert np.max(np.abs(np.abs(a) - 1.0)) < 1e-12
    assert np.vdot(a, a).real == pytest.approx(GEOM.n_elements, rel=1e-12)


def test_steering_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    eps = 1e-4
    worst = 0.0
    for _ in range(100):
        q = rng.uniform(-300, 300, 2)
        v = rng.uniform(-300, 300, 2)
        da_dx, da_dy = ge.steering_gradient(q, 80.0, v, GEOM)
        for axis, grad in ((0, da_dx), (1, da_dy)):
            shift = np.zeros(2)
            shift[axis] = eps
            fd = (steering_at(q + shift, 80.0, v)
                  - steering_at(q - shift, 80.0, v)) / (2 * eps)
            worst = max(worst, np.max(np.abs(grad - fd))
                        / max(np.max(np.abs(fd)), 1e-12))
    assert worst < 1e-5


def test_steering_gradient_overhead_structure():
    # Above the BS the x-gradient is purely imaginary and follows t_x.
    da_dx, _ = ge.steering_gradient([0.0, 0.0], 80.0, [0.0, 0.0], GEOM)
    grid = da_dx.reshape(8, 8)
    assert np.max(np.abs(grid.real)) < 1e-14
    tx = np.arange(8)
    expected = -1j * 2 * np.pi / 0.1 * 0.05 * (1.0 / 80.0) * tx
    assert np.allclose(grid[:, 0], expected, atol=1e-12)
    assert np.allclose(grid, grid[:, :1])   # constant along the y axis


def test_steering_gradient_scales_inversely_with_geometry():
    q, v, h = np.array([120.0, -40.0]), np.array([10.0, 25.0]), 80.0
    g1 = np.stack(ge.steering_gradient(q, h, v, GEOM))
    g2 = np.stack(ge.steering_gradient(v + 2 * (q - v), 2 * h, v, GEOM))
    assert np.allclose(g2, g1 / 2.0, rtol=1e-10)


def test_directional_gain_bounds_and_matched_peak():
    rng = np.random.default_rng(3)
    q, v = rng.uniform(-200, 200, 2), rng.uniform(-200, 200, 2)
    a = steering_at(q, 80.0, v)
    w = a / np.sqrt(GEOM.n_elements)
    assert ge.directional_gain(a, w) == pytest.approx(64.0, abs=1e-9)

    null = np.zeros(64, dtype=complex)
    null[0], null[1] = 1.0, -np.conj(a[0]) * a[1]
    null /= np.linalg.norm(null)
    assert ge.directional_gain(a, null) == pytest.approx(0.0, abs=1e-18)

    for _ in range(25):
        w = rng.normal(size=64) + 1j * rng.normal(size=64)
        w /= np.linalg.norm(w)
        gain = ge.directional_gain(a, w)
        assert -1e-12 <= gain <= 64.0 + 1e-9


def test_degenerate_geometry_raised_on_gradients():
    with pytest.raises(DegenerateGeometry):
        ge.steering_gradient([0.0, 0.0], 0.0, [0.0, 0.0], GEOM)
    with pytest.raises(DegenerateGeometry):
        ge.direction_cosines([0.3, 0.0], 0.0, [0.0, 0.0])


class TestLinearizedGain:
    def setup_method(self):
        self.rng = np.random.default_rng(11)
        self.v = np.array([50.0, -20.0])
        self.anchor = np.array([180.0, 90.0])
        a = steering_at(self.anchor * 0.9, 80.0, self.v)
        self.w = a / np.sqrt(GEOM.n_elements)

    def exact(self, q):
        return ge.directional_gain(steering_at(q, 80.0, self.v), self.w)

    def test_tangency(self):
        lin = ge.linearized_gain(self.anchor, self.anchor, 80.0, self.v,
                                 self.w, GEOM)
        assert lin == pytest.approx(self.exact(self.anchor), abs=1e-12)

    def test_small_step_error_quadratic_bound(self):
        # Error at 0.1 m stays below a finite-difference curvature bound.
        direction = np.array([0.6, -0.8])
        h = 0.05
        curli = abs(self.exact(self.anchor + h * direction)
                    - 2 * self.exact(self.anchor)
                    + self.exact(self.anchor - h * direction)) / h ** 2
        q = self.anchor + 0.1 * direction
        err = abs(ge.linearized_gain(q, self.anchor, 80.0, self.v, self.w,
                                     GEOM) - self.exact(q))
        assert err <= 2.0 * curli * 0.01 + 1e-9

    def test_error_order_at_least_1_9(self):
        direction = np.array([1.0, 0.4])
        direction /= np.linalg.norm(direction)
        errs = []
        for step in (0.2, 0.1, 0.05):
            q = self.anchor + step * direction
            errs.append(abs(ge.linearized_gain(q, self.anchor, 80.0, self.v,
                                               self.w, GEOM) - self.exact(q)))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders >= 1.9)

    def test_matched_beam_is_stationary(self):
        # Matched beams put the anchor at the gain peak: zero gradient.
        v = np.array([0.0, 0.0])
        anchor = np.array([0.0, 0.0])
        a = steering_at(anchor, 80.0, v)
        w = a / np.sqrt(GEOM.n_elements)
        grad = ge.gain_gradient(anchor, 80.0, v, w, GEOM)
        assert np.max(np.abs(grad)) < 1e-10
        for step in (1e-2, 1e-3):
            probe = ge.linearized_gain(anchor + [step, 0], anchor, 80.0, v,
                                       w, GEOM)
            assert probe == pytest.approx(64.0, abs=1e-9)
