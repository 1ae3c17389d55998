import numpy as np
import pytest

from centaursim.contact import estimate_foot_wrench
from centaursim.model import GRAVITY, JointState, default_stand_positions
from centaursim.omnidrive import BaseTwist
from centaursim.shapes import BoxPrimitive
from centaursim.transforms import Pose6D, quat_rotate
from centaursim.world import (
    Scenario,
    World,
    bundled_scenario_names,
    load_bundled_scenario,
    render_cloud,
)


@pytest.fixture
def flat_world(model):
    return World(model, load_bundled_scenario("flat"))


def settle(world, targets, n=80):
    snap = None
    for _ in range(n):
        snap = world.step(targets)
    return snap


class TestTerrain:
    def test_bundled_scenarios_load(self):
        names = bundled_scenario_names()
        for required in ("flat", "ramp20", "gap30", "stepfield", "stairs",
                         "grasp_table"):
            assert required in names
            load_bundled_scenario(required)

    def test_ramp_height(self):
        sc = load_bundled_scenario("ramp20")
        t = sc.terrain
        assert t.height_one(0.0, 0.0) == 0.0
        rise = np.tan(np.radians(20.0))
        assert abs(t.height_one(2.0, 0.0) - 0.8 * rise) < 1e-12
        assert abs(t.height_one(5.0, 0.0) - 1.6 * rise) < 1e-12

    def test_gap_depth(self):
        sc = load_bundled_scenario("gap30")
        assert sc.terrain.height_one(1.35, 0.0) == -0.5
        assert sc.terrain.height_one(1.0, 0.0) == 0.0
        assert abs((1.50 - 1.20) - 0.30) < 1e-12  # the paper task dimension

    def test_block_field_deterministic(self):
        a = load_bundled_scenario("stepfield")
        b = load_bundled_scenario("stepfield")
        xs = np.linspace(0.9, 2.7, 50)
        np.testing.assert_array_equal(a.terrain.height(xs, np.zeros_like(xs)),
                                      b.terrain.height(xs, np.zeros_like(xs)))
        c = load_bundled_scenario("stepfield", seed=123)
        assert not np.array_equal(a.terrain.height(xs, np.zeros_like(xs)),
                                  c.terrain.height(xs, np.zeros_like(xs)))
        heights = c.terrain.height(xs, np.zeros_like(xs))
        assert heights.max() <= 0.10 + 1e-9


class TestWorldStep:
    def test_spawn_settles_with_contacts(self, model, flat_world):
        targets = default_stand_positions(model)
        contact_tick = None
        for i in range(80):
            snap = flat_world.step(targets)
            if contact_tick is None and all(f.contact for f in snap.feet.values()):
                contact_tick = i
        assert contact_tick is not None and contact_tick < 5
        total = sum(f.force for f in snap.feet.values())
        weight = model.total_mass * GRAVITY
        assert abs(total - weight) / weight < 0.02

    def test_zero_commands_no_drift(self, model, flat_world):
        targets = default_stand_positions(model)
        settle(flat_world, targets)
        before = flat_world.state_dict()
        after = None
        for _ in range(100):
            flat_world.step(targets)
        after = flat_world.state_dict()
        np.testing.assert_allclose(after["base_position"], before["base_position"],
                                   atol=1e-12)
        np.testing.assert_allclose(after["positions"], before["positions"], atol=1e-12)
        assert after["tick"] == before["tick"] + 100

    def test_constant_twist_advances_base(self, model, flat_world):
        targets = default_stand_positions(model)
        settle(flat_world, targets)
        x0 = flat_world.base_pose.position[0]
        for _ in range(200):
            flat_world.step(targets, BaseTwist(0.5, 0.0, 0.0))
        assert abs(flat_world.base_pose.position[0] - x0 - 1.0) < 1e-9

    def test_determinism_bit_exact(self, model):
        def run():
            w = World(model, load_bundled_scenario("stepfield"))
            targets = default_stand_positions(model)
            for i in range(150):
                tw = BaseTwist(0.3, 0.0, 0.1) if i > 50 else None
                w.step(targets, tw)
            return w.state_dict()

        a = run()
        b = run()
        assert a == b

    def test_nan_target_halts(self, model, flat_world):
        targets = default_stand_positions(model)
        targets[3] = np.nan
        with pytest.raises(RuntimeError):
            flat_world.step(targets)

    def test_ramp_pitches_base(self, model):
        world = World(model, load_bundled_scenario("ramp20"))
        targets = default_stand_positions(model)
        settle(world, targets)
        # stop mid-ramp (x ~= 2.1) with all four feet on the incline
        for _ in range(350):
            world.step(targets, BaseTwist(0.6, 0.0, 0.0))
        # robot is on the incline: base x axis pitched up about 20 degrees
        ex = quat_rotate(world.base_pose.orientation, [1.0, 0.0, 0.0])
        pitch = np.degrees(np.arcsin(ex[2]))
        assert 14.0 < pitch < 26.0
        assert world.base_pose.position[2] > 0.9  # climbed

    def test_torques_recover_contact_force(self, model, flat_world):
        """World-synthesized leg torques invert to the simulated foot force."""
        targets = default_stand_positions(model)
        snap = settle(flat_world, targets, n=120)
        for foot, limb in [("fl", "front_left_leg"), ("rr", "rear_right_leg")]:
            idx = [model.joint_index[j] for j in model.limb(limb).joints]
            wrench, reliable = estimate_foot_wrench(
                model, snap.q, limb, snap.q.torques[idx])
            assert reliable
            # vertical force in base frame == world vertical here (no tilt)
            assert abs(wrench[2] - snap.feet[foot].force) < 1e-6

    def test_step_mode_anchors_hold_base(self, model, flat_world):
        targets = default_stand_positions(model)
        settle(flat_world, targets)
        pose_before = flat_world.base_pose.copy()
        flat_world.set_mode("step")
        for _ in range(50):
            flat_world.step(targets)
        assert np.linalg.norm(flat_world.base_pose.position - pose_before.position) < 1e-6

    def test_mode_validation(self, flat_world):
        with pytest.raises(ValueError):
            flat_world.set_mode("fly")


class TestRender:
    def test_flat_world_returns_ground_plane(self, model):
        sc = load_bundled_scenario("flat")
        pose = Pose6D(np.array([0.0, 0.0, 1.0]))
        pts, labels = render_cloud(sc, pose, mode="spherical",
                                   n_azimuth=60, n_elevation=30)
        assert len(pts) > 100
        np.testing.assert_allclose(pts[:, 2], 0.0, atol=1e-3)
        assert set(labels) == {"terrain"}

    def test_cube_aabb_visible_faces(self, model):
        doc = {
            "name": "cube", "seed": 0, "spawn": {"xy": [0, 0]},
            "terrain": {"primitives": []},
            "obstacles": [{"center": [3.0, 0.0, 0.5], "half_extents": [0.5, 0.5, 0.5]}],
        }
        sc = Scenario.from_dict(doc)
        pose = Pose6D(np.array([0.0, 0.0, 0.5]))
        pts, labels = render_cloud(sc, pose, mode="spherical",
                                   n_azimuth=400, n_elevation=200)
        cube_pts = pts[np.array(labels) == "obstacle"]
        assert len(cube_pts) > 50
        # only the sensor-facing face (x = 2.5) and nothing behind it
        assert abs(cube_pts[:, 0].min() - 2.5) < 0.02
        assert cube_pts[:, 0].max() <= 3.5 + 1e-6
        assert cube_pts[:, 1].min() >= -0.5 - 1e-6
        assert cube_pts[:, 1].max() <= 0.5 + 1e-6

    def test_occlusion_one_sided(self, model):
        """A box hidden behind another yields no returns."""
        doc = {
            "name": "occ", "seed": 0, "spawn": {"xy": [0, 0]},
            "terrain": {"primitives": []},
            "obstacles": [
                {"center": [2.0, 0.0, 0.5], "half_extents": [0.5, 1.0, 0.5]},
                {"center": [4.0, 0.0, 0.5], "half_extents": [0.3, 0.3, 0.3]},
            ],
        }
        sc = Scenario.from_dict(doc)
        pose = Pose6D(np.array([0.0, 0.0, 0.5]))
        pts, labels = render_cloud(sc, pose, mode="spherical",
                                   n_azimuth=300, n_elevation=100)
        hits = pts[np.array(labels) == "obstacle"]
        assert len(hits) > 0
        assert hits[:, 0].max() < 2.6  # nothing from the hidden box

    def test_object_rendering_and_labels(self, model):
        sc = load_bundled_scenario("grasp_table")
        world = World(model, sc)
        pts, labels = world.render(mode="depth-frustum", res=96)
        assert "drill1" in labels
        drill_pts = pts[np.array(labels) == "drill1"]
        # the drill stands on the table: points between table top and handle top
        assert drill_pts[:, 2].min() > 0.79
        assert drill_pts[:, 2].max() < 1.05

    def test_range_noise_seeded(self, model):
        doc = {"name": "n", "seed": 3, "spawn": {"xy": [0, 0]},
               "terrain": {"primitives": []}, "range_noise": 0.01}
        sc = Scenario.from_dict(doc)
        w1 = World(model, sc)
        w2 = World(model, sc)
        p1, _ = w1.render(n_azimuth=40, n_elevation=20)
        p2, _ = w2.render(n_azimuth=40, n_elevation=20)
        np.testing.assert_array_equal(p1, p2)
        spread = np.std(p1[:, 2])
        assert spread > 1e-4  # noise present
