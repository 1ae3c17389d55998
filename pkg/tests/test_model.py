import json
from importlib import resources

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from centaursim.model import (
    JointState,
    LimbChain,
    ModelError,
    center_of_mass,
    check_limits,
    default_model,
    default_stand_positions,
    fk_all,
    forward_kinematics,
    limb_gravity_torques,
    limb_jacobian,
    load_model,
)
from centaursim.transforms import Pose6D, quat_angle_between

from conftest import random_state_within_limits


def _raw_doc():
    return json.loads(
        resources.files("centaursim.data").joinpath("centaur_desk.json").read_text())


def oracle_fk(doc, model, q: JointState, link_name: str) -> np.ndarray:
    """Independent FK: 4x4 homogeneous matrix chain built from the raw JSON
    with scipy rotations. Shares no code with the package implementation."""
    by_name = {l["name"]: l for l in doc["links"]}
    chain = []
    cur = by_name[link_name]
    while cur is not None:
        chain.append(cur)
        cur = by_name.get(cur.get("parent"))
    T = np.eye(4)
    for entry in reversed(chain):
        fixed = np.eye(4)
        fixed[:3, :3] = Rotation.from_euler("xyz", entry.get("rpy", [0, 0, 0])).as_matrix()
        fixed[:3, 3] = entry.get("xyz", [0, 0, 0])
        T = T @ fixed
        if "joint" in entry:
            jd = entry["joint"]
            angle = q.positions[model.joint_index[jd["name"]]]
            rot = np.eye(4)
            rot[:3, :3] = Rotation.from_rotvec(np.asarray(jd["axis"]) * angle).as_matrix()
            T = T @ rot
    return T


def test_zero_configuration_feet(model):
    """All joints zero: foot pose is the plain sum of the leg's fixed offsets."""
    q = JointState.zeros(model)
    for leg, (hx, hy) in {"fl": (0.3, 0.3), "fr": (0.3, -0.3),
                          "rl": (-0.3, 0.3), "rr": (-0.3, -0.3)}.items():
        pose = forward_kinematics(model, q, f"{leg}_wheel")
        np.testing.assert_allclose(pose.position, [hx, hy, -0.82], atol=1e-12)
        assert quat_angle_between(pose.orientation, [0, 0, 0, 1]) < 1e-12


def test_single_hip_yaw_rotation(model):
    q = JointState.zeros(model).with_updates(model, {"fl_hip_yaw": np.pi / 2})
    pose = forward_kinematics(model, q, "fl_wheel")
    # foot straight below the hip, so the position is unchanged but the frame yawed
    np.testing.assert_allclose(pose.position, [0.3, 0.3, -0.82], atol=1e-12)
    ex = pose.rotation_matrix() @ np.array([1.0, 0, 0])
    np.testing.assert_allclose(ex, [0, 1, 0], atol=1e-12)
    # with knee bent, the foot swings 90 degrees about the hip vertical axis
    q2 = JointState.zeros(model).with_updates(
        model, {"fl_hip_pitch": -0.6, "fl_knee_pitch": 0.6})
    p_before = forward_kinematics(model, q2, "fl_wheel").position
    q3 = q2.with_updates(model, {"fl_hip_yaw": np.pi / 2})
    p_after = forward_kinematics(model, q3, "fl_wheel").position
    hip = np.array([0.3, 0.3, 0.0])
    r_before = p_before - hip
    expect = hip + np.array([-r_before[1], r_before[0], r_before[2]])
    np.testing.assert_allclose(p_after, expect, atol=1e-12)


def test_fk_matches_matrix_oracle(model):
    doc = _raw_doc()
    rng = np.random.default_rng(42)
    links = ["fl_wheel", "rr_wheel", "left_arm_tool_frame", "right_arm_hand", "torso"]
    for _ in range(25):
        q = random_state_within_limits(model, rng)
        for link in links:
            got = forward_kinematics(model, q, link)
            want = oracle_fk(doc, model, q, link)
            assert np.linalg.norm(got.position - want[:3, 3]) < 1e-10
            np.testing.assert_allclose(got.rotation_matrix(), want[:3, :3], atol=1e-10)


def test_fk_composition(model):
    rng = np.random.default_rng(7)
    q = random_state_within_limits(model, rng)
    poses = fk_all(model, q)
    for name, link in model.links.items():
        if link.parent is None:
            continue
        parent = poses[link.parent]
        child = forward_kinematics(model, q, name)
        recomposed = parent.compose(link.origin)
        if link.joint is not None:
            angle = q.positions[model.joint_index[link.joint.name]]
            recomposed = recomposed.compose(
                Pose6D(np.zeros(3),
                       Rotation.from_rotvec(np.asarray(link.joint.axis) * angle).as_quat()))
        assert recomposed.almost_equal(child, pos_tol=1e-10, rot_tol=1e-9)


def test_unknown_link_raises(model):
    with pytest.raises(KeyError):
        forward_kinematics(model, JointState.zeros(model), "no_such_link")


def test_out_of_limits_warns_but_computes(model, caplog):
    q = JointState.zeros(model).with_updates(model, {"fl_hip_yaw": 3.0})
    with caplog.at_level("WARNING"):
        pose = forward_kinematics(model, q, "fl_wheel")
    assert "fl_hip_yaw" in caplog.text
    assert np.all(np.isfinite(pose.position))
    assert check_limits(model, q) == ["fl_hip_yaw"]


@pytest.mark.parametrize("limb", ["front_left_leg", "rear_right_leg", "left_arm", "right_arm"])
def test_jacobian_finite_difference(model, limb):
    rng = np.random.default_rng(hash(limb) % 2**32)
    eps = 1e-7
    for _ in range(20):
        q = random_state_within_limits(model, rng, fraction=0.6)
        J = limb_jacobian(model, q, limb)
        tip = model.limb(limb).tip
        base = forward_kinematics(model, q, tip)
        for col, jn in enumerate(model.limb(limb).joints):
            qp = q.with_updates(model, {jn: q.get(model, jn) + eps})
            moved = forward_kinematics(model, qp, tip)
            dlin = (moved.position - base.position) / eps
            dq = Rotation.from_quat(moved.orientation) * Rotation.from_quat(base.orientation).inv()
            dang = dq.as_rotvec() / eps
            np.testing.assert_allclose(J[:3, col], dlin, atol=1e-5)
            np.testing.assert_allclose(J[3:, col], dang, atol=1e-5)


def test_jacobian_zero_velocity_zero_twist(model, stand_state):
    J = limb_jacobian(model, stand_state, "left_arm")
    np.testing.assert_allclose(J @ np.zeros(7), np.zeros(6))


def test_stretched_leg_is_singular(model):
    """Fully extended leg with the foot under the hip: rank < 5."""
    q = JointState.zeros(model)
    J = limb_jacobian(model, q, "front_left_leg")
    svals = np.linalg.svd(J, compute_uv=False)
    assert svals[-1] < 1e-8


def test_com_symmetry_and_mass(model):
    com = center_of_mass(model, JointState.zeros(model))
    assert abs(com[1]) < 1e-9
    assert abs(model.total_mass - 92.0) < 0.1


def test_com_single_link_model():
    doc = {
        "name": "one",
        "wheel_radius": 0.1,
        "links": [{"name": "base", "xyz": [0, 0, 0], "rpy": [0, 0, 0],
                   "mass": 1.0, "com": [0.1, -0.2, 0.3]}],
        "limbs": {},
    }
    m = load_model(json.dumps(doc))
    np.testing.assert_allclose(center_of_mass(m, JointState.zeros(m)), [0.1, -0.2, 0.3])


def test_com_matches_brute_force(model):
    rng = np.random.default_rng(11)
    for _ in range(20):
        q = random_state_within_limits(model, rng)
        poses = fk_all(model, q)
        total = 0.0
        acc = np.zeros(3)
        for name, link in model.links.items():
            p = poses[name].position + poses[name].rotation_matrix() @ link.com
            acc += link.mass * p
            total += link.mass
        assert np.linalg.norm(center_of_mass(model, q) - acc / total) < 1e-10


def test_com_lipschitz_continuity(model):
    # lever arm of any link is bounded by the longest chain (~1.1 m)
    L = sum(l.mass for l in model.links.values()) * 1.5 / model.total_mass
    rng = np.random.default_rng(13)
    for _ in range(50):
        q = random_state_within_limits(model, rng, fraction=0.5)
        delta = rng.normal(size=model.n_joints) * 1e-3
        q2 = JointState(q.positions + delta)
        d = np.linalg.norm(center_of_mass(model, q) - center_of_mass(model, q2))
        assert d <= L * np.linalg.norm(delta, 1)


def test_gravity_torques_sign(model, stand_state):
    """Holding a horizontally outstretched arm loads the shoulder pitch."""
    q = stand_state.with_updates(model, {
        "left_arm_sh_pitch": -np.pi / 2, "left_arm_sh_roll": 0.0, "left_arm_elbow_pitch": 0.0})
    tau = limb_gravity_torques(model, q, "left_arm")
    assert abs(tau[0]) > 5.0  # several kg on a ~0.3 m lever
    # vertical arm: pitch torque nearly zero
    q2 = stand_state.with_updates(model, {
        "left_arm_sh_pitch": 0.0, "left_arm_sh_roll": 0.0, "left_arm_elbow_pitch": 0.0})
    tau2 = limb_gravity_torques(model, q2, "left_arm")
    assert abs(tau2[0]) < 1e-9


def test_limb_chain_matches_fk(model, stand_state):
    chain = LimbChain(model, "left_arm", stand_state)
    rng = np.random.default_rng(21)
    arm = model.limb("left_arm")
    idx = [model.joint_index[j] for j in arm.joints]
    Q = rng.uniform(-1.0, 1.0, size=(16, 7))
    fk = chain.batch_fk(Q)
    for b in range(Q.shape[0]):
        q = stand_state.copy()
        q.positions[idx] = Q[b]
        tip = forward_kinematics(model, q, arm.tip)
        assert np.linalg.norm(fk["tip_p"][b] - tip.position) < 1e-10
        np.testing.assert_allclose(fk["tip_R"][b], tip.rotation_matrix(), atol=1e-10)
        J = limb_jacobian(model, q, "left_arm")
        np.testing.assert_allclose(fk["axes"][b], J[3:].T, atol=1e-10)
        tau = limb_gravity_torques(model, q, "left_arm")
        tau_b = chain.batch_gravity_torques(Q[b:b + 1])[0]
        np.testing.assert_allclose(tau_b, tau, atol=1e-8)


def test_fast_kinematics_matches_reference(model):
    """The array-based per-tick path must agree with the Pose6D path."""
    rng = np.random.default_rng(31)
    fast = model.fast
    for _ in range(10):
        q = random_state_within_limits(model, rng)
        table = fast.table(q.positions)
        poses = fk_all(model, q)
        for name in ("fl_wheel", "rr_wheel", "left_arm_tool_frame", "torso"):
            np.testing.assert_allclose(fast.link_position(table, name),
                                       poses[name].position, atol=1e-12)
        np.testing.assert_allclose(fast.center_of_mass(table),
                                   center_of_mass(model, q), atol=1e-12)
        for limb in ("front_left_leg", "left_arm"):
            np.testing.assert_allclose(fast.limb_jacobian(table, limb),
                                       limb_jacobian(model, q, limb), atol=1e-12)
            np.testing.assert_allclose(fast.limb_gravity(table, limb),
                                       limb_gravity_torques(model, q, limb),
                                       atol=1e-9)


def test_loader_rejects_bad_mass_with_line():
    doc = _raw_doc()
    doc["links"][3]["mass"] = -1.0
    bad_name = doc["links"][3]["name"]
    with pytest.raises(ModelError) as exc:
        load_model(json.dumps(doc, indent=1))
    msg = str(exc.value)
    assert bad_name in msg
    assert ":" in msg.split()[0]  # carries a line location


def test_loader_rejects_cycle():
    doc = {
        "name": "bad", "wheel_radius": 0.1,
        "links": [
            {"name": "a", "parent": "b", "mass": 1.0},
            {"name": "b", "parent": "a", "mass": 1.0},
        ],
        "limbs": {},
    }
    with pytest.raises(ModelError):
        load_model(json.dumps(doc))


def test_loader_rejects_wrong_leg_joint_count():
    doc = _raw_doc()
    doc["limbs"]["front_left_leg"]["joints"] = doc["limbs"]["front_left_leg"]["joints"][:4]
    with pytest.raises(ModelError, match="5 chain joints"):
        load_model(json.dumps(doc))


def test_default_model_invariants(model):
    assert len(model.legs) == 4
    assert len(model.arms) == 2
    for leg in model.legs:
        assert len(leg.joints) == 5
        assert model.joint(leg.steer_joint).type == "continuous"
        assert model.joint(leg.wheel_joint).type == "continuous"
    for arm in model.arms:
        assert len(arm.joints) == 7
    assert model.wheel_radius == 0.08
    assert np.all(model.velocity_limits > 0)
    assert np.all(model.acceleration_limits > 0)
