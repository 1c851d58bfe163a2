import numpy as np
import pytest

from care.dataset import (
    Dataset,
    SyntheticBVSpec,
    SyntheticDetectorSpec,
    generate_bv_synthetic,
    generate_detector_outputs,
    load_csv,
    write_csv,
)
from care.errors import DataError, ParameterError


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_lympho_shaped_file(tmp_path):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(148, 18))
    y = np.zeros(148, dtype=int)
    y[:6] = 1
    lines = [",".join(repr(float(v)) for v in row) + f",{lab}" for row, lab in zip(X, y)]
    ds = load_csv(_write(tmp_path, "\n".join(lines) + "\n"), label_column=-1)
    assert (ds.n, ds.d) == (148, 18)
    np.testing.assert_array_equal(ds.points, X)
    np.testing.assert_array_equal(ds.labels, y)


def test_minimal_file_without_labels(tmp_path):
    ds = load_csv(_write(tmp_path, "1.0\n2.0\n"))
    assert (ds.n, ds.d) == (2, 1)
    assert ds.labels is None


def test_non_numeric_cell_reports_location(tmp_path):
    p = _write(tmp_path, "1,2\n3,4\n5,abc\n")
    with pytest.raises(DataError, match=r"row 3, column 2"):
        load_csv(p)


def test_ragged_rows(tmp_path):
    with pytest.raises(DataError, match="ragged"):
        load_csv(_write(tmp_path, "1,2\n3\n"))


@pytest.mark.parametrize("cell", ["nan", "inf", "-inf"])
def test_non_finite_rejected(tmp_path, cell):
    with pytest.raises(DataError, match="non-finite"):
        load_csv(_write(tmp_path, f"1,2\n3,{cell}\n"))


def test_missing_file_named(tmp_path):
    with pytest.raises(DataError, match="nope.csv"):
        load_csv(tmp_path / "nope.csv")


def test_header_and_named_label(tmp_path):
    ds = load_csv(_write(tmp_path, "x,y,is_out\n0,1,0\n2,3,1\n4,5,0\n"), label_column="is_out")
    assert ds.feature_names == ("x", "y")
    np.testing.assert_array_equal(ds.labels, [0, 1, 0])
    np.testing.assert_array_equal(ds.points, [[0, 1], [2, 3], [4, 5]])


def test_positive_label_text(tmp_path):
    ds = load_csv(_write(tmp_path, "1,2,o\n3,4,n\n5,6,n\n"), label_column=2, positive_label="o")
    np.testing.assert_array_equal(ds.labels, [1, 0, 0])


def test_non_binary_label(tmp_path):
    with pytest.raises(DataError, match="not 0 or 1"):
        load_csv(_write(tmp_path, "1,2\n3,2\n"), label_column=1)


def test_write_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.normal(size=(7, 3)), np.array([0, 1, 0, 0, 0, 1, 0]))
    p = tmp_path / "rt.csv"
    write_csv(ds, p)
    back = load_csv(p, label_column=-1)
    np.testing.assert_array_equal(back.points, ds.points)
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.array([[1.0]]))
    with pytest.raises(DataError):
        Dataset(np.array([[1.0], [np.nan]]))
    ds = Dataset(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        ds.points[0, 0] = 1.0


# -- bias/variance generator -------------------------------------------------


def test_bv_default_shapes_and_labels():
    spec = SyntheticBVSpec()
    train, test = generate_bv_synthetic(spec)
    assert len(train) == 5 and len(test) == 10
    for ds in train:
        assert ds.points.shape == (210, 20)
        assert ds.labels.sum() == 10
    for ds in test:
        assert ds.points.shape == (1000, 20)
        assert ds.labels.sum() == spec.effective_test_outliers


def test_bv_deterministic():
    spec = SyntheticBVSpec(num_train_sets=2, num_test_sets=1, test_size=50, seed=11)
    a, b = generate_bv_synthetic(spec), generate_bv_synthetic(spec)
    for x, y in zip(a[0] + a[1], b[0] + b[1]):
        assert x.points.tobytes() == y.points.tobytes()
        assert x.labels.tobytes() == y.labels.tobytes()


def test_bv_outliers_lie_outside_inlier_bulk():
    spec = SyntheticBVSpec(num_train_sets=1, num_test_sets=1, seed=4)
    (tr,), _ = generate_bv_synthetic(spec)
    centre = tr.points[tr.labels == 0].mean(axis=0)
    dist = np.linalg.norm(tr.points - centre, axis=1)
    assert np.median(dist[tr.labels == 1]) > np.median(dist[tr.labels == 0])


def test_powerlaw_model_runs():
    spec = SyntheticBVSpec(outlier_model="powerlaw", num_train_sets=1, num_test_sets=1, test_size=100)
    (tr,), (te,) = generate_bv_synthetic(spec)
    assert np.isfinite(tr.points).all() and te.points.shape == (100, 20)


def test_bv_rejects_indefinite_covariance():
    bad = np.eye(2)
    bad[1, 1] = -1.0
    with pytest.raises(ParameterError):
        SyntheticBVSpec(dim=2, n_components=1, means=[[0.0, 0.0]], covariances=[bad.tolist()])


def test_bv_spec_from_json(tmp_path):
    p = tmp_path / "spec.json"
    p.write_text('{"dim": 3, "train_size": 40, "train_outliers": 4, "seed": 9}')
    spec = SyntheticBVSpec.from_json(p)
    assert spec.dim == 3 and spec.seed == 9
    with pytest.raises(ParameterError):
        SyntheticBVSpec.from_dict({"no_such_field": 1})


# -- synthetic detector outputs ----------------------------------------------


def test_zero_error_detector_reproduces_truth():
    spec = SyntheticDetectorSpec(n=1000, outlier_fraction=0.1, true_errors=(0.0, 0.3), trials=3)
    for truth, out in generate_detector_outputs(spec):
        assert truth.sum() == 100
        np.testing.assert_array_equal(out[0], truth)


def test_detector_error_rates_by_counting():
    spec = SyntheticDetectorSpec(trials=1000)
    err = np.array([(out != truth).mean(axis=1) for truth, out in generate_detector_outputs(spec)])
    np.testing.assert_allclose(err.mean(axis=0), spec.true_errors, atol=0.03)


def test_eleven_detector_spectrum_shapes():
    spec = SyntheticDetectorSpec(true_errors=np.linspace(0, 1, 11), trials=100)
    trials = generate_detector_outputs(spec)
    assert len(trials) == 100
    assert all(out.shape == (11, 1000) for _, out in trials)
