"""Dataset generators, the rotate-scale transform, and CSV ingestion."""

import numpy as np
import pytest

from alignkit.data import (
    CsvFormatError,
    Dataset,
    dataset_from_spec,
    load_csv,
    make_gaussians,
    make_moons,
    make_rotated_moons_pair,
    rotate_scale,
    stack_domains,
)

# (1, 0) rotated by 3 pi / 8 and scaled by (0.75, 1.25); frozen independently
ROT_X = 0.28701257427381736
ROT_Y = 1.1548494156391084


# ---------------------------------------------------------------------------
# container validation
# ---------------------------------------------------------------------------


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(x=np.zeros(3), d=np.zeros(3, dtype=np.int64))
    with pytest.raises(ValueError):
        Dataset(x=np.full((2, 1), np.inf), d=np.zeros(2, dtype=np.int64))
    with pytest.raises(ValueError):
        Dataset(x=np.zeros((2, 1)), d=np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        Dataset(x=np.zeros((2, 1)), d=np.array([1, 2]))  # must start at 0
    with pytest.raises(ValueError):
        Dataset(x=np.zeros((2, 1)), d=np.array([0, 2]))  # must be contiguous
    with pytest.raises(ValueError):
        Dataset(x=np.zeros((2, 1)), d=np.array([0, 1]), y=np.zeros(3))
    ds = Dataset(x=np.zeros((4, 2)), d=np.array([0, 1, 1, 0]))
    assert (ds.n, ds.dim, ds.n_domains) == (4, 2, 2)
    with pytest.raises(ValueError):
        ds.restore_columns(ds.x)


# ---------------------------------------------------------------------------
# moons and the rotate-scale map
# ---------------------------------------------------------------------------


def test_moons_noiseless_curve_endpoints():
    ds = make_moons(10, 0.0)
    # outer arc runs from (1, 0) to (-1, 0); inner starts at (0, 0.5)
    np.testing.assert_allclose(ds.x[0], [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(ds.x[4], [-1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(ds.x[5], [0.0, 0.5], atol=1e-15)
    np.testing.assert_array_equal(ds.y, [0] * 5 + [1] * 5)
    np.testing.assert_array_equal(ds.d, np.zeros(10))


def test_moons_requires_even_n():
    with pytest.raises(ValueError):
        make_moons(9, 0.1)


def test_moons_noise_level():
    noisy = make_moons(2000, 0.05, seed=3)
    clean = make_moons(2000, 0.0, seed=3)
    resid = (noisy.x - clean.x).ravel()
    assert 0.045 < resid.std() < 0.055


def test_moons_determinism():
    a = make_moons(100, 0.1, seed=7)
    b = make_moons(100, 0.1, seed=7)
    np.testing.assert_array_equal(a.x, b.x)
    assert np.any(a.x != make_moons(100, 0.1, seed=8).x)


def test_rotate_scale_frozen_point():
    ds = Dataset(x=np.array([[1.0, 0.0]]), d=np.zeros(1, dtype=np.int64))
    out = rotate_scale(ds, 3.0 * np.pi / 8.0, 0.75, 1.25)
    assert abs(out.x[0, 0] - ROT_X) < 1e-15
    assert abs(out.x[0, 1] - ROT_Y) < 1e-15


def test_rotate_scale_inverts():
    ds = make_moons(40, 0.1, seed=2)
    fwd = rotate_scale(ds, 0.6, 2.0, 0.5)
    back = rotate_scale(fwd, -0.6, 1.0, 1.0)
    # undo the axis scaling first, then the rotation
    unscaled = Dataset(x=fwd.x / np.array([2.0, 0.5]), d=fwd.d)
    restored = rotate_scale(unscaled, -0.6, 1.0, 1.0)
    np.testing.assert_allclose(restored.x, ds.x, atol=1e-12)
    assert back.params["theta"] == -0.6


def test_rotate_scale_needs_2d():
    ds = Dataset(x=np.zeros((3, 1)), d=np.zeros(3, dtype=np.int64))
    with pytest.raises(ValueError):
        rotate_scale(ds, 0.1, 1.0, 1.0)


# ---------------------------------------------------------------------------
# gaussian domains and stacking
# ---------------------------------------------------------------------------


def test_gaussians_layout():
    ds = make_gaussians(500, means=(5.0, -5.0), var=4.0, seed=1)
    assert ds.x.shape == (1000, 1)
    np.testing.assert_array_equal(ds.d, np.repeat([0, 1], 500))
    # domain 0 takes the smaller mean even when means arrive unsorted
    assert abs(ds.x[:500].mean() + 5.0) < 0.3
    assert abs(ds.x[500:].mean() - 5.0) < 0.3
    assert abs(ds.x[:500].std() - 2.0) < 0.2
    assert ds.params["means"] == (-5.0, 5.0)


def test_stack_domains():
    a = make_moons(10, 0.0)
    b = make_moons(6, 0.0)
    out = stack_domains([a, b])
    assert out.n == 16
    np.testing.assert_array_equal(out.d, [0] * 10 + [1] * 6)
    assert out.y.shape == (16,)
    with pytest.raises(ValueError):
        stack_domains([])
    with pytest.raises(ValueError):
        stack_domains([a, make_gaussians(5)])  # dim mismatch
    with pytest.raises(ValueError):
        stack_domains([out])  # already multi-domain


def test_rotated_moons_pair_composition():
    pair = make_rotated_moons_pair(10, 0.05, seed=4)
    assert pair.n == 20
    assert pair.n_domains == 2
    want = rotate_scale(make_moons(10, 0.05, seed=5), 3.0 * np.pi / 8.0, 0.75, 1.25)
    np.testing.assert_array_equal(pair.x[10:], want.x)
    src = make_moons(10, 0.05, seed=4)
    np.testing.assert_array_equal(pair.x[:10], src.x)


def test_rotated_moons_pair_noise_placement():
    sheared = make_rotated_moons_pair(200, 0.05, seed=0)
    upright = make_rotated_moons_pair(200, 0.05, seed=0, noise_after_transform=True)
    assert np.any(sheared.x[200:] != upright.x[200:])
    clean = rotate_scale(make_moons(200, 0.0, seed=1), 3.0 * np.pi / 8.0, 0.75, 1.25)
    resid = (upright.x[200:] - clean.x).ravel()
    assert 0.04 < resid.std() < 0.06


# ---------------------------------------------------------------------------
# text specs
# ---------------------------------------------------------------------------


def test_dataset_from_spec_round_trips():
    a = dataset_from_spec("moons:n=10,noise=0.0")
    np.testing.assert_array_equal(a.x, make_moons(10, 0.0).x)
    b = dataset_from_spec(
        "rotated-moons-pair:n_per_domain=10,noise=0.05,seed=4,noise_after_transform=true"
    )
    want = make_rotated_moons_pair(10, 0.05, seed=4, noise_after_transform=True)
    np.testing.assert_array_equal(b.x, want.x)
    c = dataset_from_spec("gaussians:n=5,mean0=-1.0,mean1=1.0")
    assert c.params["means"] == (-1.0, 1.0)


def test_dataset_from_spec_errors():
    with pytest.raises(ValueError):
        dataset_from_spec("nope:n=3")
    with pytest.raises(ValueError):
        dataset_from_spec("moons:n10")
    with pytest.raises(ValueError):
        dataset_from_spec("gaussians:means=1")


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_load_csv_zscore_and_restore(tmp_path):
    p = write_csv(
        tmp_path / "ok.csv",
        "a,b,domain,label\n1.0,10.0,5,0\n2.0,20.0,5,1\n3.0,30.0,9,0\n4.0,40.0,9,1\n",
    )
    ds = load_csv(p, domain_col="domain", label_col="label")
    assert ds.x.shape == (4, 2)
    np.testing.assert_allclose(ds.x.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(ds.x.std(axis=0), 1.0, atol=1e-12)
    np.testing.assert_array_equal(ds.d, [0, 0, 1, 1])  # 5, 9 remapped
    assert ds.params["domain_levels"] == [5.0, 9.0]
    np.testing.assert_array_equal(ds.y, [0.0, 1.0, 0.0, 1.0])
    raw = ds.restore_columns(ds.x)
    np.testing.assert_allclose(raw[:, 0], [1.0, 2.0, 3.0, 4.0], atol=1e-12)
    np.testing.assert_allclose(raw[:, 1], [10.0, 20.0, 30.0, 40.0], atol=1e-12)


def test_load_csv_constant_column(tmp_path):
    p = write_csv(tmp_path / "c.csv", "a,domain\n2.0,0\n2.0,1\n")
    ds = load_csv(p)
    assert np.all(np.isfinite(ds.x))  # std floor breaks the division by zero


def test_load_csv_error_positions(tmp_path):
    p = write_csv(tmp_path / "bad.csv", "a,domain\n1.0,0\noops,1\n")
    with pytest.raises(CsvFormatError) as err:
        load_csv(p)
    assert err.value.row == 3
    assert err.value.column == "a"
    assert "row 3" in str(err.value)

    p2 = write_csv(tmp_path / "frac.csv", "a,domain\n1.0,0.5\n2.0,1\n")
    with pytest.raises(CsvFormatError) as err2:
        load_csv(p2)
    assert err2.value.column == "domain"

    with pytest.raises(CsvFormatError):
        load_csv(write_csv(tmp_path / "empty.csv", ""))
    with pytest.raises(CsvFormatError):
        load_csv(write_csv(tmp_path / "header.csv", "a,domain\n"))
    with pytest.raises(CsvFormatError):
        load_csv(write_csv(tmp_path / "nodom.csv", "a,b\n1,2\n"))
    with pytest.raises(CsvFormatError):
        load_csv(write_csv(tmp_path / "nofeat.csv", "domain\n0\n1\n"))


def test_load_csv_short_row(tmp_path):
    p = write_csv(tmp_path / "short.csv", "a,b,domain\n1.0,2.0,0\n1.0\n")
    with pytest.raises(CsvFormatError) as err:
        load_csv(p)
    assert err.value.row == 3
