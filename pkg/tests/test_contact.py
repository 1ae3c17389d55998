import numpy as np
import pytest

from centaursim.contact import (
    ContactDetector,
    convex_hull_2d,
    default_contact_threshold,
    estimate_foot_wrench,
    foot_torques_for_wrench,
    signed_margin,
    support_state,
)
from centaursim.model import JointState, limb_jacobian

from conftest import random_state_within_limits

LEGS = ["front_left_leg", "front_right_leg", "rear_left_leg", "rear_right_leg"]


class TestWrenchEstimation:
    def test_pure_vertical_load_round_trip(self, model, stand_state):
        f = 180.0
        wrench = np.array([0.0, 0.0, f, 0.0, 0.0, 0.0])
        torques = foot_torques_for_wrench(model, stand_state, "front_left_leg", wrench)
        est, reliable = estimate_foot_wrench(model, stand_state, "front_left_leg", torques)
        assert reliable
        assert abs(est[2] - f) < 1e-6

    def test_zero_torques_after_gravity_zero_wrench(self, model, stand_state):
        torques = foot_torques_for_wrench(model, stand_state, "rear_right_leg",
                                          np.zeros(6))
        est, _ = estimate_foot_wrench(model, stand_state, "rear_right_leg", torques)
        np.testing.assert_allclose(est, 0.0, atol=1e-9)

    def test_realizable_wrench_round_trip(self, model):
        """Any wrench in the row space of J^T comes back exactly."""
        rng = np.random.default_rng(4)
        for _ in range(30):
            q = random_state_within_limits(model, rng, fraction=0.5)
            leg = LEGS[int(rng.integers(4))]
            J = limb_jacobian(model, q, leg)
            if np.linalg.svd(J, compute_uv=False)[-1] < 1e-3:
                continue
            # project a random wrench onto the realizable 5D subspace
            w_raw = rng.normal(size=6) * 50.0
            u, _, _ = np.linalg.svd(J, full_matrices=False)
            w = u @ (u.T @ w_raw)
            torques = foot_torques_for_wrench(model, q, leg, w)
            est, reliable = estimate_foot_wrench(model, q, leg, torques)
            assert reliable
            np.testing.assert_allclose(est, w, atol=1e-6)

    def test_singular_leg_flagged(self, model):
        q = JointState.zeros(model)  # stretched leg: rank < 5
        torques = np.zeros(5)
        _, reliable = estimate_foot_wrench(model, q, "front_left_leg", torques)
        assert not reliable


class TestContactDetector:
    def test_above_threshold(self):
        d = ContactDetector(20.0, ["fl"])
        assert d.update("fl", 30.0) is True

    def test_zero_force(self):
        d = ContactDetector(20.0, ["fl"])
        assert d.update("fl", 0.0) is False

    def test_hysteresis_band_holds(self):
        d = ContactDetector(20.0, ["fl"])
        d.update("fl", 30.0)
        for f in [16.0, 22.0, 17.0, 21.0, 15.0]:  # 0.75x..1.1x threshold
            assert d.update("fl", f) is True
        assert d.update("fl", 13.0) is False  # below 0.7x

    def test_no_double_transition_on_monotone_ramp(self):
        d = ContactDetector(20.0, ["fl"])
        transitions = 0
        prev = False
        for f in np.linspace(0, 40, 400):
            cur = d.update("fl", f)
            if cur != prev:
                transitions += 1
            prev = cur
        assert transitions == 1
        for f in np.linspace(40, 0, 400):
            cur = d.update("fl", f)
            if cur != prev:
                transitions += 1
            prev = cur
        assert transitions == 2

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            ContactDetector(0.0, ["fl"])

    def test_default_threshold(self, model):
        assert abs(default_contact_threshold(model) - 0.1 * 92.002 * 9.81 / 4) < 0.01


class TestSupportPolygon:
    def test_equilateral_triangle_inradius(self):
        s = 0.6
        tri = np.array([[0, 0], [s, 0], [s / 2, s * np.sqrt(3) / 2]])
        centroid = tri.mean(axis=0)
        hull = convex_hull_2d(tri)
        margin = signed_margin(centroid, hull)
        assert abs(margin - s / (2 * np.sqrt(3))) < 1e-12

    def test_point_on_edge_zero(self):
        tri = np.array([[0, 0], [1, 0], [0.5, 1]])
        hull = convex_hull_2d(tri)
        assert abs(signed_margin(np.array([0.5, 0.0]), hull)) < 1e-12

    def test_outside_negative(self):
        tri = np.array([[0, 0], [1, 0], [0.5, 1]])
        hull = convex_hull_2d(tri)
        assert signed_margin(np.array([0.5, -0.2]), hull) == pytest.approx(-0.2)

    def test_square_matches_boundary_sampling(self):
        """Brute-force oracle: min distance to densely sampled boundary points."""
        square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        hull = convex_hull_2d(square)
        rng = np.random.default_rng(9)
        ts = np.linspace(0, 1, 4000, endpoint=False)
        boundary = np.vstack([
            np.column_stack([ts, np.zeros_like(ts)]),
            np.column_stack([np.ones_like(ts), ts]),
            np.column_stack([1 - ts, np.ones_like(ts)]),
            np.column_stack([np.zeros_like(ts), 1 - ts]),
        ])
        for _ in range(50):
            p = rng.uniform(0.01, 0.99, size=2)
            brute = np.min(np.linalg.norm(boundary - p, axis=1))
            assert abs(signed_margin(p, hull) - brute) < 1e-6

    def test_margin_monotone_under_shrink(self):
        hull = convex_hull_2d(np.array([[0, 0], [2, 0], [2, 1], [0, 1]], dtype=float))
        p = np.array([0.8, 0.45])
        centroid = hull.mean(axis=0)
        margins = []
        for s in [1.0, 0.8, 0.6, 0.4]:
            shrunk = convex_hull_2d(centroid + (hull - centroid) * s)
            margins.append(signed_margin(p, shrunk))
        assert all(a > b for a, b in zip(margins, margins[1:]))

    def test_support_state_requires_three_feet(self):
        st = support_state({"fl": np.array([0.0, 0.0]), "fr": np.array([1.0, 0.0])},
                           np.array([0.5, 0.0, 0.3]))
        assert st.margin is None
        assert not st.stable

    def test_support_state_four_feet(self):
        pts = {"fl": np.array([0.4, 0.3]), "fr": np.array([0.4, -0.3]),
               "rl": np.array([-0.4, 0.3]), "rr": np.array([-0.4, -0.3])}
        st = support_state(pts, np.array([0.0, 0.0, 0.0]))
        assert st.margin == pytest.approx(0.3)
        assert st.stable
        # hull is convex and CCW: all cross products positive
        h = st.polygon
        n = len(h)
        for i in range(n):
            a, b, c = h[i], h[(i + 1) % n], h[(i + 2) % n]
            assert (b - a)[0] * (c - b)[1] - (b - a)[1] * (c - b)[0] > 0

    def test_collinear_feet_degenerate(self):
        pts = {"a": np.array([0.0, 0.0]), "b": np.array([0.5, 0.0]),
               "c": np.array([1.0, 0.0])}
        st = support_state(pts, np.array([0.5, 0.0, 0.0]))
        assert st.margin is None
