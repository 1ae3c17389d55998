import numpy as np
import pytest
from scipy.spatial import cKDTree

from centaursim.grasp.cpd import (
    DegenerateCloudError,
    DeformationField,
    cpd_register,
    gaussian_kernel,
    preprocess_cloud,
)
from centaursim.grasp.categories import canonical_scale, normalized_drill_cloud
from centaursim.shapes import canonical_params, scaled_params


@pytest.fixture(scope="module")
def canon_cloud():
    return normalized_drill_cloud(canonical_params())


def test_identity_registration(canon_cloud):
    res = cpd_register(canon_cloud, canon_cloud.copy())
    assert np.linalg.norm(res.field.weights, "fro") < 1e-4
    assert res.residual < 1e-4


def test_zero_weights_identity_deformation(canon_cloud):
    fld = DeformationField(canon_cloud, np.zeros_like(canon_cloud), beta=0.3)
    np.testing.assert_allclose(fld.apply(), canon_cloud)
    np.testing.assert_allclose(fld.evaluate(np.array([[0.2, 0.1, 0.4]])), 0.0)


def test_z_stretch_recovered(canon_cloud):
    instance = canon_cloud * np.array([1.0, 1.0, 1.2])
    res = cpd_register(canon_cloud, instance)
    moved = res.field.apply()
    mean_err = np.mean(np.linalg.norm(moved - instance, axis=1))
    assert mean_err < 0.005


def test_noisy_instance_residual_bounded(canon_cloud):
    rng = np.random.default_rng(0)
    sigma = 0.005
    instance = canon_cloud + rng.normal(scale=sigma, size=canon_cloud.shape)
    res = cpd_register(canon_cloud, instance)
    assert res.residual <= 2 * sigma


def test_family_instance_registration(canon_cloud):
    """A different family member is matched with small correspondence error.

    Ground truth: index i of the instance corresponds to index i of the
    canonical cloud by construction.
    """
    instance = normalized_drill_cloud(scaled_params(1.1))
    res = cpd_register(canon_cloud, instance)
    moved = res.field.apply()
    err = np.mean(np.linalg.norm(moved - instance, axis=1))
    assert err < 0.02


def test_degenerate_cloud_rejected(canon_cloud):
    flat = canon_cloud.copy()
    flat[:, 2] = 0.0
    with pytest.raises(DegenerateCloudError):
        cpd_register(canon_cloud, flat)


def test_kernel_properties(canon_cloud):
    G = gaussian_kernel(canon_cloud, canon_cloud, 0.3)
    assert np.allclose(G, G.T)
    assert np.allclose(np.diag(G), 1.0)
    assert G.min() >= 0.0


def test_preprocess_cloud():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(100, 3)) * 0.2 + np.array([1.0, -2.0, 0.5])
    norm, center, scale = preprocess_cloud(pts)
    np.testing.assert_allclose(norm.mean(axis=0), 0.0, atol=1e-12)
    assert abs(np.max(np.linalg.norm(norm, axis=1)) - 1.0) < 1e-12
    np.testing.assert_allclose(center, pts.mean(axis=0))
