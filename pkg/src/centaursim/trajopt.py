"""Stochastic arm trajectory optimization with transition-based costs.

Rollouts perturb the interior waypoints with smoothness-preferring noise
(covariance = inverse of the squared finite-difference acceleration
operator), get scored by summed transition costs (duration, collision
against a signed EDT with the arm modeled as spheres, static gravity
torque), and are combined by exponentiated-cost weighting. The best
trajectory ever seen is retained and returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .edt import EDTGrid
from .model import JointState, LimbChain, RobotModel


@dataclass
class SphereModel:
    """Collision spheres attached to arm chain segments.

    Each entry is (chain segment index 1..7, offset in that segment's frame,
    radius). The union must cover the arm's collision geometry.
    """

    spheres: list[tuple[int, np.ndarray, float]]

    def __post_init__(self):
        for _, _, r in self.spheres:
            if r <= 0.0:
                raise ValueError("sphere radius must be positive")

    @property
    def radii(self) -> np.ndarray:
        return np.array([r for _, _, r in self.spheres])

    @property
    def attachment_points(self) -> list[tuple[int, np.ndarray]]:
        return [(seg, off) for seg, off, _ in self.spheres]

    @classmethod
    def default_arm(cls) -> "SphereModel":
        """Covers the default arm's segment cylinders (verified in tests)."""
        up = [(3, np.array([0.0, 0.0, z]), 0.07) for z in (-0.03, -0.11, -0.19, -0.27)]
        fore = [(4, np.array([0.0, 0.0, z]), 0.06) for z in (-0.035, -0.105, -0.175, -0.245)]
        hand = [(7, np.array([0.0, 0.0, z]), 0.065) for z in (-0.03, -0.09)]
        return cls(up + fore + hand)

    @staticmethod
    def default_arm_cylinders() -> list[tuple[int, float, float]]:
        """Collision primitives the spheres must contain: (segment, length, radius)."""
        return [(3, 0.30, 0.05), (4, 0.28, 0.045), (7, 0.12, 0.05)]


@dataclass
class CostWeights:
    """Cost weights and optimizer parameters. Components are normalized to
    [0, 1] per transition before weighting."""

    w_duration: float = 1.0
    w_collision: float = 4.0
    w_torque: float = 0.5
    d_safe: float = 0.10  # m clearance where the collision penalty reaches 0
    rollouts: int = 20
    max_iterations: int = 200
    noise_scale: float = 0.12  # rad, std of waypoint perturbations
    temperature: float = 10.0
    samples_per_transition: int = 8
    max_transition_duration: float = 1.0  # s, duration normalizer
    convergence_window: int = 10
    convergence_tol: float = 1e-4

    def __post_init__(self):
        if self.w_duration < 0 or self.w_collision < 0 or self.w_torque < 0:
            raise ValueError("weights must be non-negative")
        if self.w_duration + self.w_collision + self.w_torque == 0:
            raise ValueError("weights must not all be zero")


def duration_priority_weights() -> CostWeights:
    return CostWeights(w_duration=5.0, w_collision=1.0, w_torque=0.2)


def clearance_priority_weights() -> CostWeights:
    return CostWeights(w_duration=0.3, w_collision=10.0, w_torque=0.2,
                       d_safe=0.16, noise_scale=0.16)


@dataclass
class KeyframeTrajectory:
    """Joint-space waypoints for one arm; endpoints stay fixed."""

    arm: str
    waypoints: np.ndarray  # (N, n_joints_of_arm)

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float)
        if self.waypoints.ndim != 2 or self.waypoints.shape[0] < 2:
            raise ValueError("need at least start and goal waypoints")

    @classmethod
    def straight_line(cls, arm: str, start: np.ndarray, goal: np.ndarray,
                      n_waypoints: int = 10) -> "KeyframeTrajectory":
        s = np.linspace(0.0, 1.0, n_waypoints)[:, None]
        return cls(arm, (1 - s) * np.asarray(start) + s * np.asarray(goal))

    def copy(self) -> "KeyframeTrajectory":
        return KeyframeTrajectory(self.arm, self.waypoints.copy())

    def to_dict(self) -> dict:
        return {"arm": self.arm, "waypoints": self.waypoints.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "KeyframeTrajectory":
        return cls(d["arm"], np.array(d["waypoints"], dtype=float))


class TransitionCostEvaluator:
    """Vectorized transition costs for batches of candidate trajectories."""

    def __init__(self, model: RobotModel, arm: str, q_rest: JointState,
                 edt: EDTGrid, spheres: SphereModel, weights: CostWeights):
        self.model = model
        self.arm = model.limb(arm)
        self.chain = LimbChain(model, arm, q_rest)
        self.edt = edt
        self.spheres = spheres
        self.weights = weights
        idx = [model.joint_index[j] for j in self.arm.joints]
        self.vel_limits = model.velocity_limits[idx]
        self.torque_norm = self._torque_normalizer()
        self.lower = model.position_lower[idx]
        self.upper = model.position_upper[idx]

    def _torque_normalizer(self) -> np.ndarray:
        # worst-case static gravity torque per joint: total distal arm weight
        # on a fully stretched lever
        from .model import GRAVITY
        arm_mass = sum(m for m in self.chain._masses)
        return np.full(len(self.arm.joints), arm_mass * GRAVITY * 0.7)

    def _sample_configs(self, trajs: np.ndarray) -> np.ndarray:
        """Midpoint samples along every transition: (C, T, S, n)."""
        S = self.weights.samples_per_transition
        s = (np.arange(S) + 0.5) / S
        a = trajs[:, :-1, None, :]
        b = trajs[:, 1:, None, :]
        return a + (b - a) * s[None, None, :, None]

    def evaluate_batch(self, trajs: np.ndarray):
        """Costs for candidate trajectories (C, N, n).

        Returns dict with per-candidate totals, graded totals (collisions
        replaced by a large depth-ranked penalty so the optimizer can order
        rejected rollouts), per-component sums and min clearance.
        """
        w = self.weights
        trajs = np.asarray(trajs, dtype=float)
        C, N, n = trajs.shape
        T = N - 1
        S = w.samples_per_transition

        configs = self._sample_configs(trajs)  # (C, T, S, n)
        flat = configs.reshape(-1, n)
        fk = self.chain.batch_fk(flat)
        centers = self.chain.points_from_fk(fk, self.spheres.attachment_points)
        P = centers.shape[1]
        dists = self.edt.query(centers.reshape(-1, 3)).reshape(-1, P)
        clearance = dists - self.spheres.radii[None, :]  # (B, P)

        penalty = np.maximum(0.0, (w.d_safe - dists) / w.d_safe)
        collision_per_config = penalty.mean(axis=1).reshape(C, T, S)
        collision = collision_per_config.mean(axis=2)  # (C, T)

        colliding = (clearance < 0.0).any(axis=1).reshape(C, T, S)
        depth = np.maximum(0.0, -clearance).max(axis=1).reshape(C, T, S)

        tau = self.chain.gravity_from_fk(fk)  # (B, n)
        torque_cfg = np.clip(np.abs(tau) / self.torque_norm, 0.0, 1.0).mean(axis=1)
        torque = torque_cfg.reshape(C, T, S).mean(axis=2)

        dq = np.abs(np.diff(trajs, axis=1))  # (C, T, n)
        duration_raw = (dq / self.vel_limits).max(axis=2)
        duration = np.clip(duration_raw / w.max_transition_duration, 0.0, 1.0)

        per_transition = (w.w_duration * duration + w.w_collision * collision
                          + w.w_torque * torque)
        finite_total = per_transition.sum(axis=1)
        has_collision = colliding.any(axis=(1, 2))
        total = np.where(has_collision, np.inf, finite_total)
        graded = finite_total + 1e3 * (colliding.mean(axis=(1, 2))
                                       + depth.mean(axis=(1, 2)))
        graded = np.where(has_collision, graded, finite_total)
        return {
            "total": total,
            "graded": graded,
            "duration": duration.sum(axis=1),
            "duration_seconds": duration_raw.sum(axis=1),
            "collision": collision.sum(axis=1),
            "torque": torque.sum(axis=1),
            "min_clearance": clearance.min(axis=1).reshape(C, T, S).min(axis=(1, 2)),
        }

    def min_clearance(self, traj: KeyframeTrajectory, oversample: int = 4) -> float:
        """Min (EDT - sphere radius) along the trajectory, densely sampled."""
        w_save = self.weights.samples_per_transition
        self.weights.samples_per_transition = w_save * oversample
        try:
            out = self.evaluate_batch(traj.waypoints[None])
        finally:
            self.weights.samples_per_transition = w_save
        return float(out["min_clearance"][0])


def transition_cost(q_a: np.ndarray, q_b: np.ndarray,
                    evaluator: TransitionCostEvaluator):
    """Cost of a single transition: (total, component dict).

    Total is +inf when any interpolated sphere sample penetrates an obstacle
    (EDT below the sphere radius).
    """
    traj = np.stack([np.asarray(q_a, dtype=float), np.asarray(q_b, dtype=float)])[None]
    out = evaluator.evaluate_batch(traj)
    components = {
        "duration": float(out["duration"][0]),
        "collision": float(out["collision"][0]),
        "torque": float(out["torque"][0]),
    }
    return float(out["total"][0]), components


def smoothness_covariance(n_free: int) -> np.ndarray:
    """Inverse squared second-difference operator, scaled to unit max variance."""
    if n_free == 1:
        return np.ones((1, 1))
    A = np.zeros((n_free, n_free))
    for i in range(n_free):
        A[i, i] = -2.0
        if i > 0:
            A[i, i - 1] = 1.0
        if i + 1 < n_free:
            A[i, i + 1] = 1.0
    cov = np.linalg.inv(A.T @ A)
    return cov / np.max(np.diag(cov))


IMPROVE_EPS = 1e-9  # float ties must not displace the incumbent best


@dataclass
class OptimizationResult:
    trajectory: KeyframeTrajectory
    cost: float
    collision_free: bool
    iterations: int
    trace: list  # per iteration: dict(iteration, best_cost, duration, collision, torque)
    components: dict


def optimize(initial: KeyframeTrajectory, evaluator: TransitionCostEvaluator,
             seed: int = 0) -> OptimizationResult:
    """Iteratively sample, score and average rollouts; keep the best ever.

    Terminates at the iteration cap or when the best cost improves by less
    than the convergence tolerance over the convergence window. Start and
    goal waypoints are never modified.
    """
    w = evaluator.weights
    way = initial.waypoints.copy()
    N, n = way.shape
    M = N - 2
    if M < 1:
        out = evaluator.evaluate_batch(way[None])
        return OptimizationResult(initial.copy(), float(out["total"][0]),
                                  bool(out["min_clearance"][0] >= 0.0), 0, [],
                                  _components(out, 0))
    rng = np.random.default_rng(seed)
    cov = smoothness_covariance(M)
    chol = np.linalg.cholesky(cov + 1e-12 * np.eye(M))

    def score(batch):
        return evaluator.evaluate_batch(batch)

    mean = way.copy()
    out0 = score(mean[None])
    best_graded = float(out0["graded"][0])
    best = mean.copy()
    best_out = out0
    trace = []
    history = [best_graded]
    it = 0
    for it in range(1, w.max_iterations + 1):
        eps = rng.standard_normal((w.rollouts, M, n))
        eps = np.einsum("ij,rjn->rin", chol, eps) * w.noise_scale
        cands = np.repeat(mean[None], w.rollouts + 1, axis=0)
        cands[1:, 1:-1, :] += eps
        cands[:, 1:-1, :] = np.clip(cands[:, 1:-1, :],
                                    evaluator.lower, evaluator.upper)
        out = score(cands)
        graded = out["graded"]

        gmin, gmax = float(graded.min()), float(graded.max())
        if gmax > gmin:
            weights = np.exp(-w.temperature * (graded - gmin) / (gmax - gmin))
        else:
            weights = np.ones_like(graded)
        weights /= weights.sum()
        new_interior = np.einsum("r,rmn->mn", weights, cands[:, 1:-1, :])
        mean[1:-1, :] = np.clip(new_interior, evaluator.lower, evaluator.upper)

        mean_out = score(mean[None])
        for k in range(len(graded)):
            if graded[k] < best_graded - IMPROVE_EPS:
                best_graded = float(graded[k])
                best = cands[k].copy()
        if float(mean_out["graded"][0]) < best_graded - IMPROVE_EPS:
            best_graded = float(mean_out["graded"][0])
            best = mean.copy()

        best_out = score(best[None])
        trace.append({
            "iteration": it,
            "best_cost": best_graded,
            "duration": float(best_out["duration"][0]),
            "collision": float(best_out["collision"][0]),
            "torque": float(best_out["torque"][0]),
        })
        history.append(best_graded)
        if len(history) > w.convergence_window:
            if history[-w.convergence_window - 1] - history[-1] < w.convergence_tol:
                break

    best[0] = initial.waypoints[0]
    best[-1] = initial.waypoints[-1]
    final = score(best[None])
    collision_free = bool(final["min_clearance"][0] >= 0.0)
    return OptimizationResult(
        KeyframeTrajectory(initial.arm, best),
        float(final["total"][0]), collision_free, it, trace, _components(final, 0))


def _components(out: dict, i: int) -> dict:
    return {
        "duration": float(out["duration"][i]),
        "duration_seconds": float(out["duration_seconds"][i]),
        "collision": float(out["collision"][i]),
        "torque": float(out["torque"][i]),
        "min_clearance": float(out["min_clearance"][i]),
    }
