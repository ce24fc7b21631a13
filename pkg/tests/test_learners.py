import datetime as dt
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apm.ingest import TimeSeriesFrame
from apm.learners import ColdStart, KNNModel, LearnerSpec, fit, predict

from conftest import GOLDEN


def frame(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    weeks = [dt.date(2004, 1, 4) + dt.timedelta(weeks=i) for i in range(len(y))]
    return TimeSeriesFrame(weeks, {f"x{j}": X[:, j] for j in range(X.shape[1])}, y)


def fixture20():
    rng = np.random.default_rng(2024)
    X = rng.uniform(0, 1, size=(20, 3))
    y = np.clip(0.02 + 0.03 * X[:, 0] - 0.01 * X[:, 1] + 0.002 * rng.standard_normal(20), 0, 1)
    return frame(X, y)


def test_ols_exact_line():
    x = np.arange(6.0)
    y = (2 * x + 1) / 100  # keep targets inside [0, 1]
    model = fit(LearnerSpec("ols", feature_mask=["x0"]), frame(x, y))
    w, b = model.coefficients
    assert w[0] * 100 == pytest.approx(2, abs=1e-9)
    assert b * 100 == pytest.approx(1, abs=1e-9)


def test_ols_exact_line_unstandardized():
    x = np.arange(6.0)
    model = fit(LearnerSpec("ols", feature_mask=["x0"], standardize=False), frame(x, (2 * x + 1) / 100))
    w, b = model.coefficients
    assert (w[0] * 100, b * 100) == pytest.approx((2, 1), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(k=st.integers(1, 5), seed=st.integers(0, 10_000))
def test_ols_recovers_noiseless_coefficients(k, seed):
    rng = np.random.default_rng(seed)
    n = k + 10
    X = rng.uniform(-1, 1, size=(n, k))
    w = rng.uniform(-0.01, 0.01, size=k)
    y = 0.5 + X @ w
    model = fit(LearnerSpec("ols", feature_mask=[f"x{j}" for j in range(k)]), frame(X, y))
    got_w, got_b = model.coefficients
    np.testing.assert_allclose(got_w, w, rtol=1e-6, atol=1e-12)
    assert got_b == pytest.approx(0.5, rel=1e-6)


def test_ols_collinear_falls_back_to_ridge():
    x = np.arange(10.0)
    X = np.column_stack([x, 2 * x, x + 1])
    y = 0.01 + 0.001 * x
    model = fit(LearnerSpec("ols", feature_mask=["x0", "x1", "x2"]), frame(X, y))
    assert model.lam == 1e-6
    assert predict(model, X[3]) == pytest.approx(y[3], abs=1e-6)


def test_linear_cold_start_needs_k_plus_one_rows():
    X = np.random.default_rng(0).uniform(size=(5, 5))
    with pytest.raises(ColdStart):
        fit(LearnerSpec("ols", feature_mask=[f"x{j}" for j in range(5)]), frame(X, np.full(5, 0.02)))
    with pytest.raises(ColdStart):
        fit(LearnerSpec("knn", feature_mask=["x0"]), frame(X[:3, 0], np.full(3, 0.02)))


def test_knn_nearest_self():
    f = fixture20()
    names = ["x0", "x1", "x2"]
    model = fit(LearnerSpec("knn", {"k": 1}, names), f)
    X = f.matrix(names)
    for i in range(len(f)):
        assert predict(model, X[i]) == f.target[i]


@settings(max_examples=60, deadline=None)
@given(k=st.integers(1, 8), seed=st.integers(0, 10_000))
def test_knn_within_neighbour_range(k, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(15, 2))
    y = rng.uniform(0, 0.1, 15)
    model = fit(LearnerSpec("knn", {"k": k}, ["x0", "x1"]), frame(X, y))
    q = rng.normal(size=2)
    # brute-force neighbours on the z-scored design
    mu, sd = X.mean(0), X.std(0)
    d = (((X - mu) / sd - (q - mu) / sd) ** 2).sum(1)
    nearest = y[np.argsort(d, kind="stable")[:k]]
    p = predict(model, q)
    assert nearest.min() - 1e-15 <= p <= nearest.max() + 1e-15
    assert p == pytest.approx(nearest.mean(), abs=1e-15)


def test_mean_model():
    model = fit(LearnerSpec("mean", feature_mask=["x0"]), frame(np.arange(4.0), [0.01, 0.03, 0.01, 0.03]))
    assert predict(model, [99.0]) == pytest.approx(0.02, abs=1e-15)


def test_persistence_returns_lagged_target_column():
    spec = LearnerSpec("persistence")
    assert spec.column == "cdc_ili"
    model = fit(spec, frame(np.arange(1.0), [0.01]))
    assert predict(model, {"cdc_ili": 0.0317, "other": 5.0}) == 0.0317


def test_passthrough_returns_column_exactly():
    model = fit(LearnerSpec("passthrough", column="GP"), frame(np.arange(1.0), [0.01]))
    assert predict(model, {"GP": 0.02718}) == 0.02718


def test_passthrough_scale():
    spec = LearnerSpec("passthrough", {"scale": 1e-5}, column="United States")
    assert predict(fit(spec, frame([1.0], [0.01])), {"United States": 1500.0}) == pytest.approx(0.015)


def _best_stump_oracle(x, y, min_leaf):
    """Exhaustive single-split search in plain Python."""
    pairs = sorted(zip(x, y))
    best = (sum((v - sum(y) / len(y)) ** 2 for v in y), None)
    for i in range(min_leaf, len(pairs) - min_leaf + 1):
        if pairs[i - 1][0] == pairs[i][0]:
            continue
        left = [v for _, v in pairs[:i]]
        right = [v for _, v in pairs[i:]]
        sse = sum((v - sum(left) / len(left)) ** 2 for v in left) + \
            sum((v - sum(right) / len(right)) ** 2 for v in right)
        if sse < best[0]:
            best = (sse, (pairs[i - 1][0] + pairs[i][0]) / 2)
    return best[1]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), min_leaf=st.integers(1, 4))
def test_cart_stump_matches_exhaustive_search(seed, min_leaf):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 12, size=16).astype(float)
    y = rng.uniform(0, 0.1, 16)
    model = fit(LearnerSpec("cart", {"max_depth": 1, "min_leaf": min_leaf}, ["x0"]), frame(x, y))
    threshold = _best_stump_oracle(list(x), list(y), min_leaf)
    root = model.tree.nodes[0]
    if threshold is None:
        assert root[0] == -1
    else:
        assert root[1] == pytest.approx(threshold)


def test_cart_fits_step_function():
    x = np.arange(20.0)
    y = np.where(x < 10, 0.01, 0.05)
    model = fit(LearnerSpec("cart", feature_mask=["x0"]), frame(x, y))
    assert predict(model, [3.0]) == pytest.approx(0.01)
    assert predict(model, [15.0]) == pytest.approx(0.05)


def test_bagged_tree_golden():
    f = fixture20()
    spec = LearnerSpec("bagged_tree", feature_mask=["x0", "x1", "x2"])
    got = predict(fit(spec, f, seed=7), [0.5, 0.5, 0.5])
    golden = json.loads((GOLDEN / "bagged_tree.json").read_text())
    assert got == golden["prediction"]


@pytest.mark.parametrize("kind", ["ols", "ridge", "knn", "cart", "bagged_tree", "mean"])
def test_determinism(kind):
    f = fixture20()
    names = ["x0", "x1", "x2"]
    q = np.array([0.3, 0.6, 0.1])
    a = predict(fit(LearnerSpec(kind, feature_mask=names), f, seed=3), q)
    b = predict(fit(LearnerSpec(kind, feature_mask=names), f, seed=3), q)
    assert a == b


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(["ols", "ridge", "knn", "cart", "bagged_tree", "mean"]),
       seed=st.integers(0, 1000), scale=st.floats(0.1, 1000))
def test_predictions_clamped(kind, seed, scale):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, 2))
    y = rng.uniform(0, 1, 12)
    model = fit(LearnerSpec(kind, {"n_trees": 3} if kind == "bagged_tree" else {}, ["x0", "x1"]), frame(X, y))
    assert 0.0 <= predict(model, rng.normal(size=2) * scale) <= 1.0


def test_spec_validation():
    with pytest.raises(ValueError, match="unknown learner kind"):
        LearnerSpec("svm", feature_mask=["x"])
    with pytest.raises(ValueError, match="unknown hyperparameter"):
        LearnerSpec("knn", {"neighbours": 3}, ["x"])
    with pytest.raises(ValueError, match="nonempty feature mask"):
        LearnerSpec("ols")
    with pytest.raises(ValueError, match="designated column"):
        LearnerSpec("passthrough")
    with pytest.raises(ValueError, match="positive integer"):
        LearnerSpec("knn", {"k": 2.5}, ["x"])


def test_knn_k_larger_than_history():
    model = fit(LearnerSpec("knn", {"k": 50}, ["x0"]), frame(np.arange(4.0), [0.01, 0.02, 0.03, 0.04]))
    assert isinstance(model, KNNModel) and model.k == 4
    assert predict(model, [0.0]) == pytest.approx(0.025)
