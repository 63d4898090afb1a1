"""Sample-based alignment metrics: exact small-case values and invariances."""

import numpy as np
import pytest

from alignkit.metrics import (
    SampleSet,
    domain_separability,
    dp_gap,
    histogram_jsd,
    swd,
    whiten,
    whitening_transform,
)
from alignkit.rng import substream


def two_blobs(n=200, gap=3.0, dim=2, seed=0):
    rng = substream(seed, "test", "blobs")
    a = rng.normal(size=(n, dim))
    b = rng.normal(size=(n, dim)) + gap
    pts = np.concatenate([a, b])
    dom = np.repeat([0, 1], n)
    return SampleSet(pts, dom)


# ---------------------------------------------------------------------------
# containers and whitening
# ---------------------------------------------------------------------------


def test_sampleset_validation_and_views():
    s = SampleSet(np.arange(4.0), np.array([0, 0, 1, 1]))
    assert s.points.shape == (4, 1)  # 1D input becomes a column
    assert (s.n, s.dim) == (4, 1)
    got = {dom: pts.ravel().tolist() for dom, pts in s.per_domain()}
    assert got == {0: [0.0, 1.0], 1: [2.0, 3.0]}
    with pytest.raises(ValueError):
        SampleSet(np.zeros((3, 1, 1)), np.zeros(3, dtype=np.int64))
    with pytest.raises(ValueError):
        SampleSet(np.zeros((3, 1)), np.zeros(2, dtype=np.int64))
    with pytest.raises(ValueError):
        SampleSet(np.zeros((3, 1)), np.zeros(3))


def test_whitening_transform_normalizes_covariance():
    rng = substream(0, "test", "whiten")
    pts = rng.normal(size=(500, 3)) @ np.array(
        [[2.0, 0.3, 0.0], [0.0, 0.5, 0.1], [0.0, 0.0, 1.5]]
    )
    mean, transform = whitening_transform(pts)
    w = (pts - mean) @ transform
    cov = w.T @ w / w.shape[0]
    assert np.abs(cov - np.eye(3)).max() < 1e-5
    with pytest.raises(ValueError):
        whitening_transform(pts[:1])


def test_whitening_survives_rank_deficiency():
    t = np.linspace(0.0, 1.0, 50)
    pts = np.stack([t, 2.0 * t], axis=1)  # exactly collinear
    mean, transform = whitening_transform(pts)
    w = (pts - mean) @ transform
    assert np.all(np.isfinite(w))


def test_whiten_requires_two_points_per_domain():
    s = SampleSet(np.zeros((3, 1)), np.array([0, 0, 1]))
    with pytest.raises(ValueError):
        whiten(s)


def test_whiten_pools_domains():
    s = two_blobs()
    w = whiten(s)
    pooled = w.points - w.points.mean(axis=0)
    cov = pooled.T @ pooled / pooled.shape[0]
    assert np.abs(cov - np.eye(2)).max() < 1e-5
    np.testing.assert_array_equal(w.domain, s.domain)


# ---------------------------------------------------------------------------
# sliced Wasserstein
# ---------------------------------------------------------------------------


def test_swd_zero_on_identical_sets():
    rng = substream(0, "test", "swd0")
    a = rng.normal(size=(40, 3))
    assert swd(a, a.copy()) == 0.0


def test_swd_1d_shift_is_exact():
    rng = substream(0, "test", "swd-shift")
    x = rng.normal(size=(30, 1))
    assert abs(swd(x, x + 0.7, n_proj=11) - 0.7) < 1e-12


def test_swd_symmetry():
    rng = substream(0, "test", "swd-sym")
    a = rng.normal(size=(20, 2))
    b = rng.normal(size=(35, 2)) + 1.0
    assert swd(a, b, n_proj=64) == swd(b, a, n_proj=64)


def test_swd_triangle_inequality_1d():
    rng = substream(0, "test", "swd-tri")
    for _ in range(20):
        a, b, c = (rng.normal(size=(15, 1)) * rng.uniform(0.5, 2.0) for _ in range(3))
        assert swd(a, c, n_proj=5) <= swd(a, b, n_proj=5) + swd(b, c, n_proj=5) + 1e-12


def test_swd_unequal_sizes_crossing_case():
    # linear quantile functions t and 0.25 + t/2 cross at t = 1/2; the exact
    # integral of their absolute difference is two triangles of area 1/16
    a = np.array([0.0, 1.0])
    b = np.array([0.25, 0.5, 0.75])
    assert abs(swd(a, b, n_proj=9) - 0.125) < 1e-14


def test_swd_unequal_sizes_disjoint_case():
    a = np.array([0.0, 1.0])
    b = np.array([2.0, 3.0, 4.0])  # quantile gap 2 + t integrates to 2.5
    assert abs(swd(a, b, n_proj=9) - 2.5) < 1e-14


def test_swd_singleton_against_pair():
    assert abs(swd(np.array([0.0]), np.array([0.0, 1.0]), n_proj=3) - 0.5) < 1e-14


def test_swd_determinism_and_seed_sensitivity():
    rng = substream(0, "test", "swd-det")
    a = rng.normal(size=(25, 3))
    b = rng.normal(size=(25, 3)) + 0.5
    assert swd(a, b, seed=4) == swd(a, b, seed=4)
    assert swd(a, b, seed=4) != swd(a, b, seed=5)


def test_swd_validation():
    with pytest.raises(ValueError):
        swd(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        swd(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        swd(np.zeros((3, 2)), np.zeros((3, 2)), n_proj=0)


def test_whitened_swd_invariant_to_1d_affine():
    rng = substream(0, "test", "aff1")
    pts = np.concatenate([rng.normal(size=(50, 1)), rng.normal(size=(50, 1)) + 2.0])
    dom = np.repeat([0, 1], 50)
    base = whiten(SampleSet(pts, dom))
    mapped = whiten(SampleSet(-3.0 * pts + 7.0, dom))
    d0 = swd(*_split(base), n_proj=200)
    d1 = swd(*_split(mapped), n_proj=200)
    assert abs(d0 - d1) < 1e-9


def test_whitened_swd_invariant_to_scalar_scale_and_shift():
    s = two_blobs(n=100)
    base = whiten(s)
    mapped = whiten(SampleSet(s.points * 12.5 + np.array([3.0, -8.0]), s.domain))
    d0 = swd(*_split(base), n_proj=200)
    d1 = swd(*_split(mapped), n_proj=200)
    assert abs(d0 - d1) < 1e-9


def test_whitened_swd_stable_under_rotation():
    # rotating the inputs only rotates the whitened cloud, so the sliced
    # distance moves by projection noise, not by a geometry change
    s = two_blobs(n=150)
    ang = 0.9
    rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    base = whiten(s)
    mapped = whiten(SampleSet(s.points @ rot.T, s.domain))
    d0 = swd(*_split(base), n_proj=2000)
    d1 = swd(*_split(mapped), n_proj=2000)
    assert d0 > 0.2
    assert abs(d0 - d1) < 0.05


def _split(s: SampleSet):
    return s.points[s.domain == 0], s.points[s.domain == 1]


# ---------------------------------------------------------------------------
# kernel probe separability
# ---------------------------------------------------------------------------


def test_separability_near_chance_when_identical():
    rng = substream(0, "test", "sep-chance")
    pts = rng.normal(size=(600, 2))
    s = SampleSet(pts, np.repeat([0, 1], 300))
    acc = domain_separability(s)
    assert acc < 0.65


def test_separability_high_when_disjoint():
    s = two_blobs(n=150, gap=6.0)
    assert domain_separability(s) >= 0.99


def test_separability_determinism_and_validation():
    s = two_blobs(n=40, gap=1.0)
    assert domain_separability(s) == domain_separability(s)
    with pytest.raises(ValueError):
        domain_separability(SampleSet(np.zeros((6, 1)), np.zeros(6, dtype=np.int64)))
    with pytest.raises(ValueError):
        domain_separability(SampleSet(np.zeros((4, 1)), np.array([0, 0, 1, 1])))


# ---------------------------------------------------------------------------
# histogram divergence and parity gap
# ---------------------------------------------------------------------------


def test_histogram_jsd_anchors():
    rng = substream(0, "test", "hjsd")
    a = rng.normal(size=400)
    assert histogram_jsd(a, a.copy()) == 0.0
    b = rng.normal(size=400) + 100.0  # disjoint supports
    assert abs(histogram_jsd(a, b) - np.log(2.0)) < 1e-12
    assert histogram_jsd(a, b) == histogram_jsd(b, a)


def test_histogram_jsd_constant_samples():
    assert histogram_jsd(np.zeros(10), np.zeros(10)) == 0.0
    with pytest.raises(ValueError):
        histogram_jsd(np.array([]), np.zeros(3))


def test_dp_gap_values_and_validation():
    assert dp_gap([1, 1, 0, 0], [0, 0, 1, 1]) == 1.0
    assert dp_gap([1, 0, 1, 0], [0, 0, 1, 1]) == 0.0
    assert dp_gap([1, 0, 0, 0], [0, 0, 1, 1]) == 0.5
    with pytest.raises(ValueError):
        dp_gap([2, 0], [0, 1])
    with pytest.raises(ValueError):
        dp_gap([1, 0, 1], [0, 1])
    with pytest.raises(ValueError):
        dp_gap([0, 1], [0, 0])
