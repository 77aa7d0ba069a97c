"""Conformity scores: values, sign convention, uniformity, monotonicity."""

import numpy as np
import pytest
from scipy import stats

from densityband import (
    DegeneracyWarning,
    LabelPMF,
    OracleCDE,
    Scenario,
    cd_score,
    generate,
    hpd_score,
    probability_score,
)
from densityband.cde import fit_knn_kernel
from densityband.datasets import Dataset
from densityband.rng import stream
from densityband.scores import (
    BaselineAux,
    KnnRegressor,
    KnnScale,
    baseline_score,
    baseline_scores_batch,
)

KS_CRIT_1PCT = 1.6276


@pytest.fixture(scope="module")
def homo_oracle():
    return OracleCDE(Scenario("homoscedastic", d=2))


def test_cd_score_standard_normal_mode(homo_oracle):
    x = np.zeros(2)
    assert abs(cd_score(homo_oracle, x, 0.0) - 0.3989422804) < 1e-3


def test_cd_score_far_outside_grid_is_zero(homo_oracle):
    assert cd_score(homo_oracle, np.zeros(2), 1e4) == 0.0


def test_cd_score_bimodal_valley_below_mode():
    model = OracleCDE(Scenario("bimodal", d=2))
    x = np.array([1.0, 0.0])
    mode = 2 * np.sqrt(1.5)
    assert cd_score(model, x, 0.0) < cd_score(model, x, mode)


def test_hpd_score_at_mode_is_one(homo_oracle):
    assert abs(hpd_score(homo_oracle, np.zeros(2), 0.0) - 1.0) < 0.01


def test_hpd_score_tail_mass(homo_oracle):
    got = hpd_score(homo_oracle, np.zeros(2), 1.6449)
    assert abs(got - 2 * (1 - stats.norm.cdf(1.6449))) < 0.01


def test_hpd_score_discrete_sums_lower_levels():
    pmf = LabelPMF(np.array([0.5, 0.3, 0.2]))

    class Stub:
        is_discrete = True

        def evaluate(self, x):
            return pmf

    assert hpd_score(Stub(), np.zeros(1), 2) == pytest.approx(0.2)
    assert hpd_score(Stub(), np.zeros(1), 0) == pytest.approx(1.0)


def test_hpd_score_discrete_ties_included():
    pmf = LabelPMF(np.array([0.25, 0.25, 0.5]))

    class Stub:
        is_discrete = True

        def evaluate(self, x):
            return pmf

    # both 0.25 labels tie: each gets the full tied mass
    assert hpd_score(Stub(), np.zeros(1), 0) == pytest.approx(0.5)


def _toy_train(seed=0, n=200, d=2):
    rng = stream(seed)
    X = rng.uniform(-1, 1, (n, d))
    y = X[:, 0] + 0.1 * rng.normal(size=n)
    return Dataset(X, y)


def test_reg_score_maximal_at_prediction():
    train = _toy_train()
    aux = BaselineAux(train, k=20, kinds=("reg",))
    x = np.zeros(2)
    rhat = float(aux.regressor.predict(np.atleast_2d(x))[0])
    assert baseline_score("reg", aux, x, rhat) == 0.0
    assert baseline_score("reg", aux, x, rhat + 1.0) == pytest.approx(-1.0)


def test_quantile_score_positive_inside():
    train = _toy_train()
    aux = BaselineAux(train, k=50, alpha=0.2, kinds=("quantile",))
    x = np.zeros(2)
    lo, hi = aux.quantiles.predict(np.atleast_2d(x))
    mid = 0.5 * (lo[0] + hi[0])
    assert baseline_score("quantile", aux, x, mid) > 0.0
    assert baseline_score("quantile", aux, x, hi[0] + 1.0) < 0.0


def test_dist_score_maximal_at_median():
    sc = Scenario("homoscedastic", d=2)
    aux = BaselineAux(_toy_train(), k=20, cde=OracleCDE(sc), kinds=("dist",))
    x = np.zeros(2)
    # conditional median of N(0, 1) is 0
    assert abs(baseline_score("dist", aux, x, 0.0)) < 1e-3
    assert baseline_score("dist", aux, x, 2.0) < -0.4


class _UnitScale:
    def predict(self, X):
        return np.ones(len(np.atleast_2d(X)))


def test_local_reg_with_unit_scale_equals_reg():
    train = _toy_train(3)
    aux = BaselineAux(train, k=20, kinds=("reg", "local-reg"))
    aux.scale = _UnitScale()
    rng = stream(5)
    X = rng.uniform(-1, 1, (100, 2))
    ys = rng.normal(size=100)
    a = baseline_scores_batch("reg", aux, X, ys)
    b = baseline_scores_batch("local-reg", aux, X, ys)
    assert np.allclose(a, b)


def test_scale_floor_flagged():
    X = np.repeat(np.arange(5.0)[:, None], 2, axis=1)
    train = Dataset(X, np.zeros(5))  # constant targets: residuals all zero
    reg = KnnRegressor(train, k=2)
    with pytest.warns(DegeneracyWarning):
        rho = KnnScale(train, reg, k=2).predict(np.zeros((1, 2)))
    assert rho[0] == pytest.approx(1e-8)


def test_probability_score_uniform_pmf():
    model = OracleCDE(Scenario("logistic-classification", d=3))
    x = np.zeros(3)
    for label in range(7):
        assert probability_score(model, x, label) == pytest.approx(1 / 7)


def test_probability_score_equals_cd_score():
    sc = Scenario("logistic-classification", d=4)
    data = generate(sc, 400, seed=8)
    model = fit_knn_kernel(data, k=30)
    rng = stream(9)
    for _ in range(100):
        x = rng.normal(size=4)
        y = int(rng.integers(7))
        assert probability_score(model, x, y) == cd_score(model, x, y)


def test_oracle_hpd_scores_uniform():
    # with the true density, the level score is exactly U(0, 1) up to grid error
    sc = Scenario("homoscedastic", d=3)
    model = OracleCDE(sc)
    data = generate(sc, 10_000, seed=10)
    rows = model.evaluate_batch(data.X)
    from densityband.cde import batch_level_outputs

    scores = batch_level_outputs(model.grid, rows, ys=data.y)["hpd_scores"]
    stat = stats.kstest(scores, stats.uniform.cdf).statistic
    assert stat < KS_CRIT_1PCT / np.sqrt(len(scores))


def test_hpd_nondecreasing_in_cd_at_fixed_x():
    sc = Scenario("bimodal", d=2)
    model = OracleCDE(sc)
    x = np.array([0.8, -0.3])
    ys = np.linspace(-8, 8, 101)
    cd = np.array([cd_score(model, x, y) for y in ys])
    hpd = np.array([hpd_score(model, x, y) for y in ys])
    order = np.argsort(cd, kind="stable")
    assert np.all(np.diff(hpd[order]) >= -1e-9)
