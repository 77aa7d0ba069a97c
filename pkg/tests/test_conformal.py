"""Calibration order statistics and region construction."""

import numpy as np
import pytest
from scipy import stats

from densityband import (
    ConfigurationError,
    DegeneracyWarning,
    OracleCDE,
    Scenario,
    calibrate,
    generate,
    predict_label_set,
    predict_region_baseline,
    predict_region_cd,
    predict_region_hpd,
    threshold_region,
    unitary_partition,
)
from densityband.cde import LabelPMF, fit_knn_kernel
from densityband.conformal import NEG_INF, PredictionRegion
from densityband.datasets import Dataset
from densityband.harness import MethodRunner, MethodSpec
from densityband.rng import stream
from densityband.scores import BaselineAux


def test_cutoff_is_floor_alpha_order_statistic():
    table = calibrate(np.arange(1.0, 101.0), alpha=0.1)
    assert table.cutoff() == 10.0


def test_per_element_cutoffs():
    scores = np.arange(1.0, 101.0)
    elements = np.repeat([0, 1], 50)
    table = calibrate(scores, alpha=0.1, assignments=elements, n_elements=2)
    assert table.cutoffs[0] == 5.0 and table.cutoffs[1] == 55.0


def test_insufficient_calibration_flagged():
    with pytest.warns(DegeneracyWarning):
        table = calibrate(np.arange(9.0), alpha=0.1)
    assert "insufficient_calibration" in table.flags
    assert table.cutoff() == NEG_INF


def test_small_element_falls_back_to_global():
    scores = np.arange(1.0, 102.0)
    elements = np.concatenate([np.zeros(100, dtype=int), [1]])  # element 1 has 1 point
    table = calibrate(scores, alpha=0.1, assignments=elements, n_elements=2)
    assert "insufficient_calibration" in table.flags
    assert table.cutoffs[1] == table.cutoffs[0] == pytest.approx(
        np.sort(scores)[int(np.floor(101 * 0.1)) - 1]
    )


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.5])
def test_calibrate_rejects_bad_alpha(alpha):
    with pytest.raises(ConfigurationError):
        calibrate(np.arange(10.0), alpha=alpha)


@pytest.fixture(scope="module")
def homo_model():
    return OracleCDE(Scenario("homoscedastic", d=2))


def test_cd_region_forced_cutoff_matches_normal_hpd(homo_model):
    x = np.zeros(2)
    table = calibrate(np.full(100, stats.norm.pdf(1.6449)), alpha=0.1, kind="cd")
    region = predict_region_cd(homo_model, x, table, unitary_partition())
    assert len(region.intervals) == 1
    (lo, hi) = region.intervals[0]
    assert abs(lo + 1.6449) < 0.02 and abs(hi - 1.6449) < 0.02
    assert abs(region.size() - 2 * 1.64485) < 0.01


def test_cd_region_zero_cutoff_full_span(homo_model):
    region = threshold_region(homo_model.grid, homo_model.evaluate(np.zeros(2)).values, 0.0)
    assert region.intervals == ((homo_model.grid[0], homo_model.grid[-1]),)


def test_cd_region_bimodal_two_intervals():
    sc = Scenario("bimodal", d=2)
    model = OracleCDE(sc)
    x = np.array([1.0, 0.0])
    dens = model.evaluate(x)
    from densityband import level_quantile

    cutoff = level_quantile(dens, 0.1)
    region = threshold_region(dens.grid, dens.values, cutoff)
    assert len(region.intervals) == 2
    # independent check: brute-force mask on the same grid gives two runs
    above = dens.values >= cutoff
    runs = np.flatnonzero(np.diff(above.astype(int)) != 0)
    assert len(runs) == 4


def test_hpd_region_alpha_cutoff_is_oracle_hpd(homo_model):
    region = predict_region_hpd(homo_model, np.zeros(2), 0.1)
    (lo, hi) = region.intervals[0]
    assert abs(lo + 1.6449) < 0.02 and abs(hi - 1.6449) < 0.02


def test_hpd_region_cutoff_zero_full_span(homo_model):
    region = predict_region_hpd(homo_model, np.zeros(2), 0.0)
    assert region.intervals == ((homo_model.grid[0], homo_model.grid[-1]),)


def test_hpd_region_cutoff_one_degenerate(homo_model):
    region = predict_region_hpd(homo_model, np.zeros(2), 1.0)
    assert "degenerate_region" in region.flags
    assert region.size() <= 2 * np.max(np.diff(homo_model.grid))


def test_hpd_equals_direct_density_threshold(homo_model):
    # the level-score region is exactly a density super-level set
    x = np.array([0.7, -0.2])
    dens = homo_model.evaluate(x)
    from densityband import level_quantile

    for c in (0.05, 0.3, 0.8):
        got = predict_region_hpd(homo_model, x, c)
        want = threshold_region(dens.grid, dens.values, level_quantile(dens, c))
        assert got.intervals == want.intervals


def _toy_aux(seed=0, kinds=("reg", "local-reg", "quantile", "dist")):
    rng = stream(seed)
    X = rng.uniform(-1, 1, (300, 2))
    y = X[:, 0] + 0.3 * rng.normal(size=300)
    train = Dataset(X, y)
    sc = Scenario("homoscedastic", d=2)
    return BaselineAux(train, k=30, alpha=0.1, cde=OracleCDE(sc), kinds=kinds)


def test_reg_region_cutoff_zero_is_singleton():
    aux = _toy_aux()
    x = np.zeros(2)
    region = predict_region_baseline("reg", aux, x, 0.0)
    (lo, hi) = region.intervals[0]
    rhat = float(aux.regressor.predict(np.atleast_2d(x))[0])
    assert lo == hi == pytest.approx(rhat)


def test_dist_region_central_interval():
    aux = _toy_aux()
    region = predict_region_baseline("dist", aux, np.zeros(2), -0.45)
    (lo, hi) = region.intervals[0]
    assert abs(lo - stats.norm.ppf(0.05)) < 0.02
    assert abs(hi - stats.norm.ppf(0.95)) < 0.02


class _UnitScale:
    def predict(self, X):
        return np.ones(len(np.atleast_2d(X)))


def test_local_reg_region_reduces_to_reg():
    aux = _toy_aux(1)
    aux.scale = _UnitScale()
    rng = stream(2)
    for _ in range(100):
        x = rng.uniform(-1, 1, 2)
        c = -float(rng.random())
        a = predict_region_baseline("reg", aux, x, c)
        b = predict_region_baseline("local-reg", aux, x, c)
        assert np.allclose(np.array(a.intervals), np.array(b.intervals))


def test_quantile_region_can_empty():
    aux = _toy_aux(3, kinds=("quantile",))
    x = np.zeros(2)
    lo, hi = aux.quantiles.predict(np.atleast_2d(x))
    width = float(hi[0] - lo[0])
    region = predict_region_baseline("quantile", aux, x, width)  # cutoff > half-width
    assert region.intervals == () and "empty_region" in region.flags


class _PmfStub:
    is_discrete = True

    def __init__(self, probs):
        self._pmf = LabelPMF(np.asarray(probs))

    def evaluate(self, x):
        return self._pmf


def test_label_sets():
    table_high = calibrate(np.full(50, 0.5), alpha=0.1, kind="cd")
    model = _PmfStub([0.9, 0.1])
    region = predict_label_set(model, np.zeros(1), table_high, kind="cd")
    assert region.labels == frozenset({0})
    table_low = calibrate(np.full(50, 0.05), alpha=0.1, kind="cd")
    region = predict_label_set(model, np.zeros(1), table_low, kind="cd")
    assert region.labels == frozenset({0, 1})
    uniform = _PmfStub(np.full(7, 1 / 7))
    table = calibrate(np.full(50, 1 / 7 - 1e-9), alpha=0.1, kind="cd")
    region = predict_label_set(uniform, np.zeros(1), table, kind="cd")
    assert region.labels == frozenset(range(7))


def test_empty_label_set_flagged():
    model = _PmfStub([0.6, 0.4])
    table = calibrate(np.full(50, 0.99), alpha=0.1, kind="cd")
    region = predict_label_set(model, np.zeros(1), table, kind="cd")
    assert region.labels == frozenset() and "empty_region" in region.flags


def _run_method(runner, kind, alpha, **kw):
    spec = MethodSpec(kind=kind, label=kind, **kw)
    runner.alpha = alpha
    regions, _, _ = runner.run(spec)
    return regions


def test_nested_regions_across_alpha():
    sc = Scenario("bimodal", d=3)
    data = generate(sc, 1200, seed=55)
    test = generate(sc, 40, seed=56)
    from densityband import split_data

    train, calib = split_data(data, 0.5, seed=57)
    model = fit_knn_kernel(train, k=60, bandwidth=0.3, grid_size=500)
    for kind in ("cd", "hpd"):
        runner_a = MethodRunner(train, calib, test, model, alpha=0.1, seed=1)
        runner_b = MethodRunner(train, calib, test, model, alpha=0.2, seed=1)
        kw = {"partition": "profile-voronoi", "J": 5} if kind == "cd" else {}
        wide = _run_method(runner_a, kind, 0.1, **kw)
        narrow = _run_method(runner_b, kind, 0.2, **kw)
        for w, n_ in zip(wide, narrow):
            for lo, hi in n_.intervals:
                assert any(wl <= lo + 1e-9 and hi <= wh + 1e-9 for wl, wh in w.intervals), (
                    f"{kind}: narrow interval [{lo}, {hi}] escapes the wide region"
                )


def test_region_contains_and_size():
    r = PredictionRegion(intervals=((0.0, 1.0), (2.0, 2.5)))
    assert r.contains(1.0) and r.contains(2.0) and not r.contains(1.5)
    assert r.size() == pytest.approx(1.5)
