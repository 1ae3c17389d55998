"""Coherent-point-drift non-rigid registration.

EM over a Gaussian mixture whose centroids are the deformed canonical
points T(Y) = Y + G(beta) W; the M-step solves a kernel-regularized linear
system for the weight matrix W.

Training clouds here are full, axis-aligned views in the normalized
category frame, so the EM is initialized from a diagonal second-moment
pre-scale and a neighbor-spacing noise level instead of the global-variance
start; that skips the centroid-collapse phase which otherwise locks the
coarse samplings of this domain into permuted correspondences. A hard
nearest-neighbor refinement (the sigma -> 0 limit of the same EM) finishes
the fit, leaving W exactly zero when no displacement is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

DEFAULT_BETA = 0.3
DEFAULT_LAMBDA = 2.0
MAX_ITERS = 150
CONVERGENCE_TOL = 1e-6
RIDGE_FLOOR = 1e-7  # keeps the kernel solve conditioned once sigma^2 anneals to 0
FINAL_RIDGE = 1e-3  # RKHS ridge of the refinement solve; keeps W smooth for PCA
ANNEAL_FLOOR = 0.90  # sigma^2 may shrink at most this factor per iteration


class DegenerateCloudError(ValueError):
    pass


def gaussian_kernel(a: np.ndarray, b: np.ndarray, beta: float) -> np.ndarray:
    """K[i, j] = exp(-|a_i - b_j|^2 / (2 beta^2))."""
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
    return np.exp(-d2 / (2.0 * beta * beta))


@dataclass
class DeformationField:
    """Kernel-weighted displacement anchored on the canonical points."""

    control_points: np.ndarray  # (M, 3)
    weights: np.ndarray  # (M, 3)
    beta: float

    def apply(self) -> np.ndarray:
        """Deformed canonical points T(Y) = Y + G W."""
        G = gaussian_kernel(self.control_points, self.control_points, self.beta)
        return self.control_points + G @ self.weights

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Displacement field at arbitrary points (kernel interpolation)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        K = gaussian_kernel(pts, self.control_points, self.beta)
        return K @ self.weights

    def as_vector(self) -> np.ndarray:
        return self.weights.reshape(-1)

    @classmethod
    def from_vector(cls, vec: np.ndarray, control_points: np.ndarray,
                    beta: float) -> "DeformationField":
        return cls(control_points, np.asarray(vec, dtype=float).reshape(-1, 3), beta)


@dataclass
class CPDResult:
    field: DeformationField
    residual: float  # mean distance, transformed canonical -> nearest instance point
    iterations: int
    sigma2: float


def check_rank(points: np.ndarray):
    centered = points - points.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    if svals[-1] < 1e-6 * max(svals[0], 1e-12):
        raise DegenerateCloudError("instance cloud has rank < 3 spread")


def cpd_register(canonical: np.ndarray, instance: np.ndarray,
                 beta: float = DEFAULT_BETA, lam: float = DEFAULT_LAMBDA,
                 outlier_weight: float = 0.0, max_iters: int = MAX_ITERS,
                 tol: float = CONVERGENCE_TOL) -> CPDResult:
    """Fit a smooth deformation carrying ``canonical`` onto ``instance``.

    Both clouds must be preprocessed (normalized category frame, full
    axis-aligned views). Iterates until the mean movement of the
    transformed points falls below ``tol`` or the iteration cap. The
    instance must have full 3D spread.
    """
    Y = np.asarray(canonical, dtype=float)
    X = np.asarray(instance, dtype=float)
    check_rank(X)
    M, N = len(Y), len(X)
    D = 3
    G = gaussian_kernel(Y, Y, beta)
    tree = cKDTree(X)

    # diagonal moment pre-scale seeds the correspondences
    scale = np.std(X, axis=0) / np.maximum(np.std(Y, axis=0), 1e-12)
    shift = X.mean(axis=0) - (Y * scale).mean(axis=0)
    W = np.linalg.solve(G + FINAL_RIDGE * np.eye(M), (Y * scale + shift) - Y)
    T = Y + G @ W

    spacing = float(np.median(tree.query(X, k=2)[0][:, 1]))
    sigma2 = max(float(np.mean(tree.query(T)[0] ** 2)), spacing ** 2)
    iterations = 0
    for iterations in range(1, max_iters + 1):
        # E-step: soft correspondences
        d2 = np.sum((X[None, :, :] - T[:, None, :]) ** 2, axis=2)  # (M, N)
        sigma2 = max(sigma2, 1e-10)
        P = np.exp(-d2 / (2.0 * sigma2))
        denom = P.sum(axis=0, keepdims=True)
        if outlier_weight > 0.0:
            c = ((2 * np.pi * sigma2) ** (D / 2) * outlier_weight /
                 (1 - outlier_weight) * M / N)
            denom = denom + c
        denom = np.maximum(denom, 1e-300)
        P = P / denom

        p1 = P.sum(axis=1)  # (M,)
        np_total = float(p1.sum())
        if np_total < 1e-12:
            break
        # M-step: regularized weight solve
        A = (p1[:, None] * G) + (lam * sigma2 + RIDGE_FLOOR) * np.eye(M)
        rhs = P @ X - p1[:, None] * Y
        W = np.linalg.solve(A, rhs)
        T_new = Y + G @ W

        pt1 = P.sum(axis=0)  # (N,)
        xPx = float(np.sum(pt1 * np.sum(X * X, axis=1)))
        trPXT = float(np.sum((P @ X) * T_new))
        tTt = float(np.sum(p1 * np.sum(T_new * T_new, axis=1)))
        sigma2_fit = max((xPx - 2.0 * trPXT + tTt) / (np_total * D), 1e-12)
        sigma2 = max(sigma2_fit, sigma2 * ANNEAL_FLOOR)

        movement = float(np.mean(np.linalg.norm(T_new - T, axis=1)))
        T = T_new
        if movement < tol:
            break

    # hard-correspondence refinement: re-solve against nearest-point targets
    # so W is exactly zero when no displacement is needed
    prev_nn = None
    for _ in range(10):
        T = Y + G @ W
        nn = tree.query(T)[1]
        if prev_nn is not None and np.array_equal(nn, prev_nn):
            break
        prev_nn = nn
        W = np.linalg.solve(G + FINAL_RIDGE * np.eye(M), X[nn] - Y)
    T = Y + G @ W

    residual = float(np.mean(tree.query(T)[0]))
    return CPDResult(DeformationField(Y.copy(), W, beta), residual, iterations, sigma2)


def preprocess_cloud(points: np.ndarray, scale: float | None = None):
    """Center at the centroid and scale to unit bounding-sphere radius.

    Returns (normalized points, center, scale). Passing ``scale`` reuses a
    known category scale (partial views underestimate their own extent).
    """
    pts = np.asarray(points, dtype=float)
    center = pts.mean(axis=0)
    centered = pts - center
    if scale is None:
        scale = float(np.max(np.linalg.norm(centered, axis=1)))
        if scale <= 0.0:
            raise DegenerateCloudError("cloud has zero extent")
    return centered / scale, center, scale
