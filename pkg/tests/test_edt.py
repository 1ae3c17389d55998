import numpy as np
import pytest

from centaursim.edt import PointCloud, brute_force_distance, build_edt

RES = 0.05
BOUNDS = (np.zeros(3), np.array([1.0, 1.0, 1.0]))


def test_single_voxel_axis_distance():
    """Query 10 voxels away along x: distance = 10 * resolution +- res/2."""
    center = np.array([0.275, 0.525, 0.525])  # center of voxel (5,10,10)
    grid = build_edt(PointCloud(center.reshape(1, 3)), RES, BOUNDS)
    q = center + np.array([10 * RES, 0, 0])
    assert abs(grid.query_one(q) - 10 * RES) <= RES / 2


def test_inside_filled_block_negative():
    """Center of a filled 5^3 block: negative, magnitude ~2-3 voxels."""
    pts = []
    for i in range(5):
        for j in range(5):
            for k in range(5):
                pts.append([(5 + i + 0.5) * RES, (5 + j + 0.5) * RES, (5 + k + 0.5) * RES])
    grid = build_edt(PointCloud(np.array(pts)), RES, BOUNDS)
    center = np.array([(7.5) * RES, (7.5) * RES, (7.5) * RES])
    d = grid.query_one(center)
    assert d < 0
    brute = brute_force_distance(grid, center)
    assert abs(d - brute) <= RES


def test_sign_consistent_with_occupancy():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.2, 0.8, size=(60, 3))
    grid = build_edt(PointCloud(pts), RES, BOUNDS)
    occ_idx = np.argwhere(grid.occupancy)
    free_idx = np.argwhere(~grid.occupancy)
    for i in occ_idx[:20]:
        assert grid.query_one(grid.voxel_center(i)) <= 0
    rng.shuffle(free_idx)
    for i in free_idx[:20]:
        assert grid.query_one(grid.voxel_center(i)) >= 0


def test_random_queries_match_brute_force():
    """1000 random queries against the O(n) nearest-voxel oracle."""
    rng = np.random.default_rng(1)
    pts = rng.uniform(0.1, 0.9, size=(40, 3))
    grid = build_edt(PointCloud(pts), RES, BOUNDS)
    diag = np.sqrt(3) * RES
    queries = rng.uniform(0.0, 1.0, size=(1000, 3))
    got = grid.query(queries)
    for q, g in zip(queries, got):
        brute = brute_force_distance(grid, q)
        assert abs(g - brute) <= diag


def test_lipschitz_up_to_discretization():
    """|d(a) - d(b)| <= |a-b| + sqrt(3)*res over random voxel-center pairs."""
    rng = np.random.default_rng(2)
    pts = rng.uniform(0.1, 0.9, size=(50, 3))
    grid = build_edt(PointCloud(pts), RES, BOUNDS)
    shape = np.asarray(grid.shape)
    slack = np.sqrt(3) * RES
    for _ in range(500):
        ia = rng.integers(0, shape)
        ib = rng.integers(0, shape)
        a = grid.voxel_center(ia)
        b = grid.voxel_center(ib)
        da = grid.query_one(a)
        db = grid.query_one(b)
        assert abs(da - db) <= np.linalg.norm(a - b) + slack + 1e-9


def test_interpolation_continuity():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0.3, 0.7, size=(20, 3))
    grid = build_edt(PointCloud(pts), RES, BOUNDS)
    p = np.array([0.41, 0.52, 0.47])
    eps = 1e-4
    base = grid.query_one(p)
    for axis in range(3):
        dp = np.zeros(3)
        dp[axis] = eps
        assert abs(grid.query_one(p + dp) - base) < 10 * eps


def test_bad_inputs():
    cloud = PointCloud(np.array([[0.5, 0.5, 0.5]]))
    with pytest.raises(ValueError):
        build_edt(cloud, 0.0, BOUNDS)
    with pytest.raises(ValueError):
        build_edt(cloud, RES, (np.ones(3), np.zeros(3)))
    with pytest.raises(ValueError):
        build_edt(PointCloud(np.array([[5.0, 5.0, 5.0]])), RES, BOUNDS)
