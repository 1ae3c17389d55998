"""Figure rendering for CLI outputs.

Every report-producing subcommand writes its delimited output (CSV/JSON)
and drops matplotlib PNG figures next to it. Headless by construction
(Agg backend).
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def write_cost_trace_csv(trace: list[dict], path: Path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["iteration", "best_cost", "duration",
                                          "collision", "torque"])
        w.writeheader()
        for row in trace:
            w.writerow(row)


def plot_cost_trace(trace: list[dict], path: Path):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    it = [r["iteration"] for r in trace]
    ax1.plot(it, [r["best_cost"] for r in trace], color="tab:blue")
    ax1.set_ylabel("best cost")
    ax1.grid(alpha=0.3)
    for key, color in (("duration", "tab:orange"), ("collision", "tab:red"),
                       ("torque", "tab:green")):
        ax2.plot(it, [r[key] for r in trace], label=key, color=color)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("component sums")
    ax2.legend(loc="best", fontsize=8)
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trajectory_topdown(evaluator, initial, optimized, path: Path,
                            obstacle_points: np.ndarray | None = None):
    """EE path before/after optimization, base-frame top view."""
    fig, ax = plt.subplots(figsize=(6, 6))

    def ee_path(waypoints, n=200):
        s = np.linspace(0, 1, n)
        dense = []
        for a, b in zip(waypoints[:-1], waypoints[1:]):
            dense.extend(a + (b - a) * t for t in s)
        fk = evaluator.chain.batch_fk(np.asarray(dense))
        return fk["tip_p"]

    if obstacle_points is not None and len(obstacle_points):
        ax.scatter(obstacle_points[:, 0], obstacle_points[:, 1], s=2,
                   c="0.6", label="obstacles")
    p0 = ee_path(initial.waypoints)
    p1 = ee_path(optimized.waypoints)
    ax.plot(p0[:, 0], p0[:, 1], "--", color="tab:blue", label="initial")
    ax.plot(p1[:, 0], p1[:, 1], "-", color="tab:green", label="optimized")
    ax.scatter([p1[0, 0], p1[-1, 0]], [p1[0, 1], p1[-1, 1]],
               c=["k", "r"], zorder=5)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_variance_spectrum(variances: np.ndarray, captured: float, path: Path):
    fig, ax = plt.subplots(figsize=(6, 4))
    frac = variances / variances.sum() if variances.sum() > 0 else variances
    ax.bar(np.arange(1, len(variances) + 1), frac, color="tab:blue")
    ax.set_xlabel("latent component")
    ax.set_ylabel("variance fraction")
    ax.set_title(f"captured variance: {captured * 100:.1f} %")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_registration_overlay(observed: np.ndarray, inferred: np.ndarray,
                              path: Path, grasp_points: np.ndarray | None = None):
    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(projection="3d")
    ax.scatter(*observed.T, s=4, c="tab:blue", label="observed", alpha=0.6)
    ax.scatter(*inferred.T, s=4, c="tab:orange", label="inferred shape", alpha=0.6)
    if grasp_points is not None and len(grasp_points):
        ax.scatter(*np.atleast_2d(grasp_points).T, s=60, c="tab:red", marker="^",
                   label="grasp")
    ax.legend(fontsize=8)
    span = np.ptp(np.vstack([observed, inferred]), axis=0).max()
    mid = np.vstack([observed, inferred]).mean(axis=0)
    for setter, m in zip((ax.set_xlim, ax.set_ylim, ax.set_zlim), mid):
        setter(m - span / 2, m + span / 2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_stage_csv(stages: list, path: Path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["stage", "success", "detail"])
        for s in stages:
            w.writerow([s.stage, s.success, s.detail])
