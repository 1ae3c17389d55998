"""Latent shape space: EM principal-component analysis over deformation fields.

The design matrix stacks each training instance's deformation field as a
column; EM alternates latent-coordinate and basis regressions and converges
to the principal subspace, which is then orthonormalized and rotated to the
principal axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cpd import DeformationField


class LatentSpaceError(ValueError):
    pass


@dataclass
class LatentShapeSpace:
    mean: np.ndarray  # (D,)
    components: np.ndarray  # (D, L), orthonormal columns
    variances: np.ndarray  # (L,), descending
    captured_variance: float  # fraction of total training variance

    @property
    def latent_dim(self) -> int:
        return self.components.shape[1]

    def encode(self, vec: np.ndarray) -> np.ndarray:
        return self.components.T @ (np.asarray(vec, dtype=float) - self.mean)

    def decode(self, z: np.ndarray) -> np.ndarray:
        return self.mean + self.components @ np.asarray(z, dtype=float)

    def round_trip_residual(self, vec: np.ndarray) -> float:
        return float(np.linalg.norm(vec - self.decode(self.encode(vec))))


def build_latent_space(fields: list[DeformationField], latent_dim: int,
                       max_iters: int = 300, tol: float = 1e-10,
                       seed: int = 0) -> LatentShapeSpace:
    """EM-PCA over vectorized deformation fields.

    Requires at least 3 training instances and latent_dim <= instances - 1.
    """
    if len(fields) < 3:
        raise LatentSpaceError("need at least 3 training instances")
    n = len(fields)
    if latent_dim > n - 1:
        raise LatentSpaceError(f"latent dim {latent_dim} > instances - 1 = {n - 1}")
    if latent_dim < 1:
        raise LatentSpaceError("latent dim must be >= 1")
    X = np.stack([f.as_vector() for f in fields], axis=1)  # (D, n)
    D = X.shape[0]
    mean = X.mean(axis=1)
    Xc = X - mean[:, None]
    total_var = float(np.sum(Xc * Xc) / max(n - 1, 1))

    if total_var < 1e-20:
        # all fields identical: mean is the field, zero variance everywhere
        comps = np.zeros((D, latent_dim))
        comps[np.arange(latent_dim), np.arange(latent_dim)] = 1.0
        return LatentShapeSpace(mean, comps, np.zeros(latent_dim), 1.0)

    rng = np.random.default_rng(seed)
    C = rng.standard_normal((D, latent_dim))
    prev = None
    for _ in range(max_iters):
        # pinv throughout: the data may have rank < latent_dim
        Z = np.linalg.pinv(C.T @ C) @ (C.T @ Xc)  # (L, n)
        C = Xc @ Z.T @ np.linalg.pinv(Z @ Z.T)
        # monitor subspace drift through the projected data
        proj = C @ (np.linalg.pinv(C.T @ C) @ (C.T @ Xc))
        err = float(np.sum((Xc - proj) ** 2))
        if prev is not None and abs(prev - err) < tol * max(prev, 1.0):
            break
        prev = err

    # orthonormalize and rotate to principal axes within the subspace
    U, _, _ = np.linalg.svd(C, full_matrices=False)
    B = U.T @ Xc  # (L, n)
    cov = B @ B.T / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], 0.0)
    components = U @ evecs[:, order]
    captured = float(np.sum(evals) / total_var)
    return LatentShapeSpace(mean, components, evals, captured)
