import numpy as np
import pytest

from centaursim.grasp.cpd import DeformationField, cpd_register
from centaursim.grasp.latent import LatentSpaceError, build_latent_space
from centaursim.grasp.categories import normalized_drill_cloud
from centaursim.shapes import canonical_params, sample_params, scaled_params


@pytest.fixture(scope="module")
def canon_cloud():
    return normalized_drill_cloud(canonical_params())


def make_field(canon, vec):
    return DeformationField.from_vector(vec, canon, beta=0.3)


def test_identical_fields_zero_variance(canon_cloud):
    rng = np.random.default_rng(0)
    vec = rng.normal(size=canon_cloud.size)
    fields = [make_field(canon_cloud, vec.copy()) for _ in range(4)]
    space = build_latent_space(fields, 2)
    np.testing.assert_allclose(space.mean, vec)
    np.testing.assert_allclose(space.variances, 0.0)
    np.testing.assert_allclose(space.components.T @ space.components,
                               np.eye(2), atol=1e-8)


def test_scaling_family_first_component_dominates(canon_cloud):
    """1-parameter family: >= 95 % of variance on the first axis."""
    fields = []
    for s in np.linspace(0.85, 1.15, 7):
        inst = normalized_drill_cloud(scaled_params(float(s)))
        fields.append(cpd_register(canon_cloud, inst).field)
    space = build_latent_space(fields, 3)
    frac = space.variances[0] / space.variances.sum()
    assert frac >= 0.95


def test_components_orthonormal(canon_cloud):
    rng = np.random.default_rng(1)
    fields = [make_field(canon_cloud, rng.normal(size=canon_cloud.size))
              for _ in range(6)]
    space = build_latent_space(fields, 4)
    gram = space.components.T @ space.components
    assert np.linalg.norm(gram - np.eye(4)) < 1e-8


def test_em_matches_svd_oracle(canon_cloud):
    """EM subspace equals the top principal subspace from a direct SVD."""
    rng = np.random.default_rng(2)
    # low-rank structure + small noise
    basis = rng.normal(size=(canon_cloud.size, 3))
    coords = rng.normal(size=(3, 9))
    data = basis @ coords + 0.001 * rng.normal(size=(canon_cloud.size, 9))
    fields = [make_field(canon_cloud, data[:, i]) for i in range(9)]
    space = build_latent_space(fields, 3)

    X = data - data.mean(axis=1, keepdims=True)
    U = np.linalg.svd(X, full_matrices=False)[0][:, :3]
    # subspace angle: projections must agree
    P_em = space.components @ space.components.T
    agreement = np.linalg.norm(P_em @ U - U)
    assert agreement < 1e-3
    # variances match the SVD spectrum
    svals = np.linalg.svd(X, compute_uv=False)[:3]
    np.testing.assert_allclose(space.variances, svals**2 / (9 - 1), rtol=1e-3)


def test_round_trip_residual_bounded_by_truncation(canon_cloud):
    rng = np.random.default_rng(3)
    data = rng.normal(size=(canon_cloud.size, 8))
    fields = [make_field(canon_cloud, data[:, i]) for i in range(8)]
    L = 5
    space = build_latent_space(fields, L)
    X = data - data.mean(axis=1, keepdims=True)
    svals = np.linalg.svd(X, compute_uv=False)
    truncation = np.sqrt(np.sum(svals[L:] ** 2))  # total energy beyond rank L
    for i in range(8):
        r = space.round_trip_residual(data[:, i])
        assert r <= truncation + 1e-9


def test_held_out_family_member(canon_cloud):
    """Leave-one-out: encode/decode of the held-out field stays accurate.

    More training instances than latent dims, so the truncation error is a
    real quantity and the held-out bound is meaningful.
    """
    rng = np.random.default_rng(4)
    all_params = [sample_params(rng) for _ in range(15)]
    fields = [cpd_register(canon_cloud, normalized_drill_cloud(p)).field
              for p in all_params]
    held = fields[-1]
    train = fields[:-1]
    space = build_latent_space(train, 7)
    train_res = max(space.round_trip_residual(f.as_vector()) for f in train)
    held_res = space.round_trip_residual(held.as_vector())
    assert held_res <= 2 * max(train_res, 1e-9)


def test_latent_dim_validation(canon_cloud):
    rng = np.random.default_rng(5)
    fields = [make_field(canon_cloud, rng.normal(size=canon_cloud.size))
              for _ in range(4)]
    with pytest.raises(LatentSpaceError):
        build_latent_space(fields, 4)  # > n-1
    with pytest.raises(LatentSpaceError):
        build_latent_space(fields[:2], 1)  # too few instances
