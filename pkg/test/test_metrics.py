from math import log, pi

import numpy as np
import pytest
from sklearn.model_selection import GridSearchCV

from mixboost.exceptions import ValidationError
from mixboost.generators import GaussianGenerator
from mixboost.metrics import (
    KdeModel,
    coverage_c,
    default_bandwidth_grid,
    kde_fit,
    log_likelihood_l,
)


def test_likelihood_of_standard_normal(rng):
    g = GaussianGenerator([0.0], [[1.0]])
    data = rng.normal(size=10_000)
    value = log_likelihood_l(g.log_density, data)
    assert value == pytest.approx(-0.5 * (1 + log(2 * pi)), abs=0.1)


def test_likelihood_is_floored():
    def log_density(x):
        return np.full(x.shape[0], -np.inf)

    assert log_likelihood_l(log_density, np.zeros((3, 2))) == -1e10


def test_likelihood_empty():
    with pytest.raises(ValidationError):
        log_likelihood_l(lambda x: x, np.zeros((0, 2)))


def test_coverage_of_model_on_its_own_samples(rng):
    g = GaussianGenerator([0.0, 0.0], np.eye(2))
    value = coverage_c(g.log_density, g.sample(5000, rng), g.sample(5000, rng))
    assert value == pytest.approx(0.95, abs=0.02)


def test_coverage_of_missed_mode(rng):
    model = GaussianGenerator([0.0, 0.0], np.eye(2))
    far = rng.normal(loc=20.0, size=(1000, 2))
    assert coverage_c(model.log_density, model.sample(1000, rng), far) == 0.0


def test_coverage_is_invariant_to_monotone_transforms(rng):
    g = GaussianGenerator([0.0], [[1.0]])
    model_samples, data = g.sample(500, rng), rng.normal(0.5, 1.5, size=(500, 1))

    def squashed(x):
        return np.tanh(g.log_density(x) / 10)

    assert coverage_c(squashed, model_samples, data) == coverage_c(
        g.log_density, model_samples, data
    )


def test_coverage_needs_model_samples(rng):
    g = GaussianGenerator([0.0], [[1.0]])
    with pytest.raises(ValidationError):
        coverage_c(g.log_density, g.sample(99, rng), g.sample(10, rng))


def test_default_bandwidth_grid():
    grid = default_bandwidth_grid(np.array([[0.0], [2.0]]))
    assert grid.size == 20
    assert grid[0] == pytest.approx(0.01)
    assert grid[-1] == pytest.approx(2.0)


def test_kde_fit_recovers_density(rng):
    data = rng.normal(size=(2000, 1))
    model = kde_fit(data, rng=rng)
    assert isinstance(model, KdeModel)
    assert 0.05 < model.bandwidth < 1.0
    x = np.array([[0.0], [1.0]])
    true = GaussianGenerator([0.0], [[1.0]]).log_density(x)
    assert model.log_density(x) == pytest.approx(true, abs=0.1)


def test_kde_fit_duplicates_stay_in_one_fold(rng):
    # copies of a point never straddle folds, so no fold sees its own points
    base = rng.normal(size=(200, 1))
    data = np.repeat(base, 5, axis=0)
    model = kde_fit(data, rng=rng)
    assert model.bandwidth > 0.05


def test_kde_fit_max_cv_points(rng):
    data = rng.normal(size=(3000, 2))
    model = kde_fit(data, rng=rng, max_cv_points=500)
    assert model.anchors.shape == (3000, 2)


def test_kde_fit_max_cv_points_below_folds(rng):
    with pytest.raises(ValidationError):
        kde_fit(rng.normal(size=(100, 1)), folds=5, rng=rng, max_cv_points=3)


def test_kde_fit_uses_grouped_grid_search(rng, mocker):
    spy = mocker.spy(GridSearchCV, "fit")
    base = rng.normal(size=(100, 1))
    kde_fit(np.repeat(base, 3, axis=0), rng=rng)
    assert spy.call_count == 1
    groups = spy.call_args.kwargs["groups"]
    assert len(set(groups.tolist())) == 100


def test_kde_fit_too_few_distinct_points(rng):
    with pytest.raises(ValidationError):
        kde_fit(np.zeros((10, 1)), rng=rng)


@pytest.mark.parametrize("grid", [[], [0.1, 0.0], [-1.0]])
def test_kde_fit_bad_grid(rng, grid):
    with pytest.raises(ValidationError):
        kde_fit(rng.normal(size=(50, 1)), bandwidth_grid=grid, rng=rng)


def test_kde_sample(rng):
    model = KdeModel(np.array([[0.0, 0.0], [10.0, 10.0]]), 0.1)
    x = model.sample(1000, rng)
    assert x.shape == (1000, 2)
    near_anchor = np.minimum(np.linalg.norm(x, axis=1), np.linalg.norm(x - 10, axis=1))
    assert np.all(near_anchor < 1.0)


def test_coverage_of_half_covered_modes(two_modes, rng):
    model = GaussianGenerator([-5.0, 0.0], 0.25 * np.eye(2))
    value = coverage_c(model.log_density, model.sample(5000, rng), two_modes)
    assert 0.45 <= value <= 0.55
