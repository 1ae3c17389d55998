"""Bundled category builders for the parametric drill-like family.

The category frame is the object frame scaled so the canonical shape has
unit bounding-sphere radius; instances and observations are normalized by
the same factor (partial views must not be rescaled by their own extent).
"""

from __future__ import annotations

import numpy as np

from ..shapes import (
    DrillParams,
    canonical_params,
    drill_grasp_annotations,
    drill_points,
    sample_params,
)
from ..transforms import Pose6D
from .transfer import GraspAnnotation, train_category

DRILL_CATEGORY = "drill"


def canonical_scale() -> float:
    pts = drill_points(canonical_params())
    return float(np.max(np.linalg.norm(pts, axis=1)))


def normalized_drill_cloud(params: DrillParams, scale: float | None = None) -> np.ndarray:
    s = canonical_scale() if scale is None else scale
    return drill_points(params) / s


def normalized_annotations(params: DrillParams, scale: float) -> list[GraspAnnotation]:
    out = []
    for raw in drill_grasp_annotations(params):
        poses = {k: Pose6D(p.position / scale, p.orientation)
                 for k, p in raw["poses"].items()}
        out.append(GraspAnnotation(raw["name"], poses))
    return out


def build_drill_category(n_instances: int = 8, seed: int = 0,
                         latent_dim: int | None = None,
                         spread: float = 1.0):
    """Train the drill category on sampled instances.

    Returns (CategoryModel, list of training DrillParams).
    """
    rng = np.random.default_rng(seed)
    scale = canonical_scale()
    canon = canonical_params()
    canonical_cloud = normalized_drill_cloud(canon, scale)
    params = [sample_params(rng, spread=spread) for _ in range(n_instances)]
    instances = [normalized_drill_cloud(p, scale) for p in params]
    model = train_category(
        instances, canonical_cloud, normalized_annotations(canon, scale),
        DRILL_CATEGORY, center=np.zeros(3), scale=scale, latent_dim=latent_dim)
    return model, params
