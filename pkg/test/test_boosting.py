import numpy as np
import pytest

from mixboost.boosting import (
    BaselineVariant,
    BetaSchedule,
    LearnerConfig,
    ScheduleKind,
    baseline_history,
    choose_beta_for_ratio,
    run_adagan,
    run_baseline,
    update_training_weights,
)
from mixboost.exceptions import (
    BoostingError,
    DomainError,
    FittingError,
    MixboostWarning,
    ValidationError,
)
from mixboost.generators import (
    GaussianGenerator,
    GeneratorMixture,
    WeightedSample,
    fit_discriminator,
)


@pytest.fixture
def lopsided(rng):
    """900 points around (-5, 0) and 100 around (5, 0), with their density."""
    left = rng.normal(loc=(-5.0, 0.0), scale=0.5, size=(900, 2))
    right = rng.normal(loc=(5.0, 0.0), scale=0.5, size=(100, 2))
    density = GeneratorMixture(
        [
            GaussianGenerator([-5.0, 0.0], 0.25 * np.eye(2)),
            GaussianGenerator([5.0, 0.0], 0.25 * np.eye(2)),
        ],
        [0.9, 0.1],
    )
    return np.vstack([left, right]), density


def _positive(d, p, beta):
    return int(np.count_nonzero(update_training_weights(d, p, beta) > 0))


def test_update_training_weights(four_examples):
    d, p = four_examples
    w = update_training_weights(d, p, 0.5)
    assert w.tolist() == pytest.approx([31 / 72, 47 / 144, 35 / 144, 0], abs=1e-12)


def test_update_training_weights_order(rng):
    d = rng.uniform(0.05, 0.95, size=200)
    p = np.full(200, 1 / 200)
    w = update_training_weights(d, p, 0.3)
    assert w.sum() == pytest.approx(1.0, abs=1e-9)
    order = np.argsort(-d)
    assert np.all(np.diff(w[order]) <= 1e-15)


def test_update_training_weights_rejects(four_examples):
    d, p = four_examples
    with pytest.raises(DomainError):
        update_training_weights(d, p, 0.0)
    with pytest.raises(ValidationError):
        update_training_weights(d, p * 2, 0.5)


def test_choose_beta_for_ratio(four_examples):
    d, p = four_examples
    beta = choose_beta_for_ratio(0.75, d, p)
    assert _positive(d, p, beta) == 3
    assert 0.21 < beta < 0.72


def test_choose_beta_for_small_ratio(four_examples):
    d, p = four_examples
    beta = choose_beta_for_ratio(0.25, d, p)
    w = update_training_weights(d, p, beta)
    assert np.flatnonzero(w > 0).tolist() == [0]


@pytest.mark.parametrize("ratio", [0.0, 1.0, -0.5])
def test_choose_beta_for_ratio_domain(four_examples, ratio):
    d, p = four_examples
    with pytest.raises(DomainError):
        choose_beta_for_ratio(ratio, d, p)


def test_schedules(four_examples):
    d, p = four_examples
    assert BetaSchedule.constant(0.3).beta_at(7) == 0.3
    assert BetaSchedule.one_over_t().beta_at(4) == 0.25
    assert _positive(d, p, BetaSchedule.top_ratio(0.75).beta_at(2, d, p)) == 3
    decay = BetaSchedule.top_ratio_decay(1.5, np.log(2))
    assert _positive(d, p, decay.beta_at(2, d, p)) == 2
    threshold = BetaSchedule.ratio_from_threshold(1.5)
    assert _positive(d, p, threshold.beta_at(2, d, p)) == 3


def test_schedule_needs_discriminator():
    with pytest.raises(ValidationError):
        BetaSchedule.top_ratio(0.5).beta_at(2)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "constant"},
        {"kind": "constant", "beta": 1.5},
        {"kind": "top_ratio", "ratio": 1.0},
        {"kind": "top_ratio_decay", "c1": 1.0},
        {"kind": "ratio_from_threshold", "threshold": 0.0},
    ],
)
def test_schedule_rejects(kwargs):
    with pytest.raises(DomainError):
        BetaSchedule(**kwargs)


def test_schedule_from_string():
    schedule = BetaSchedule("constant", beta=0.5)
    assert schedule.kind is ScheduleKind.CONSTANT
    assert schedule.to_dict() == {"kind": "constant", "beta": 0.5}


def test_min_fit_size():
    assert LearnerConfig().min_fit_size(2) == 10
    assert LearnerConfig("gmm", components=5).min_fit_size(2) == 15


def test_run_adagan(lopsided, rng):
    data, density = lopsided
    run = run_adagan(
        data,
        3,
        BetaSchedule.one_over_t(),
        rng=rng,
        data_density=density,
        keep_weights=True,
    )
    assert len(run.mixture) == 3
    assert run.mixture.alphas.tolist() == pytest.approx([1 / 3] * 3)
    first, second = run.records[:2]
    assert first.beta == 1.0 and first.lam is None
    assert second.beta == 0.5 and second.lam > 0
    assert second.weights.sum() == pytest.approx(1.0)
    # the under-covered small mode gains weight
    assert second.weights[900:].mean() > second.weights[:900].mean()
    assert len(run.history) == 3
    assert len(run.mixture_at(1)) == 1


def test_run_adagan_single_round_is_vanilla(lopsided, rng):
    data, _ = lopsided
    boosted = run_adagan(data, 1, BetaSchedule.one_over_t(), rng=rng).mixture
    vanilla = run_baseline(data, BaselineVariant.vanilla(), rng=rng)
    x = data[::50]
    assert boosted.log_density(x) == pytest.approx(vanilla.log_density(x))


def test_run_adagan_rejects(lopsided, rng):
    data, _ = lopsided
    with pytest.raises(ValidationError):
        run_adagan(data, 0, BetaSchedule.one_over_t(), rng=rng)
    with pytest.raises(ValidationError):
        run_adagan(np.zeros((0, 2)), 2, BetaSchedule.one_over_t(), rng=rng)


def test_mixture_at_range(lopsided, rng):
    data, _ = lopsided
    run = run_adagan(data, 1, BetaSchedule.one_over_t(), rng=rng)
    with pytest.raises(ValidationError):
        run.mixture_at(2)


def test_run_adagan_fallback(mocker, lopsided, rng):
    data, density = lopsided
    mocker.patch.object(LearnerConfig, "min_fit_size", return_value=5000)
    with pytest.warns(MixboostWarning):
        run = run_adagan(
            data, 2, BetaSchedule.constant(0.5), rng=rng, data_density=density
        )
    assert run.records[1].fallback


def test_run_adagan_fitting_failure(mocker, lopsided, rng):
    data, density = lopsided
    component = GaussianGenerator([0.0, 0.0], np.eye(2))
    mocker.patch.object(
        LearnerConfig, "fit", side_effect=[component, FittingError("degenerate")]
    )
    with pytest.raises(BoostingError) as info:
        run_adagan(data, 3, BetaSchedule.one_over_t(), rng=rng, data_density=density)
    assert len(info.value.run.records) == 1


def test_run_adagan_classifier(two_modes, rng):
    run = run_adagan(two_modes, 2, BetaSchedule.constant(0.5), None, "classifier", rng)
    assert len(run.mixture) == 2
    assert run.records[1].lam > 0


def test_ensemble(lopsided, rng):
    data, _ = lopsided
    history = baseline_history(data, BaselineVariant.ensemble(3), rng=rng)
    assert len(history) == 3
    assert history[-1].alphas.tolist() == pytest.approx([1 / 3] * 3)


def test_ensemble_members_are_fitted_independently(two_modes, rng):
    history = baseline_history(two_modes, BaselineVariant.ensemble(10), rng=rng)
    mixture = history[-1]
    means = np.array([c.mean for c in mixture.components])
    assert len(np.unique(means.round(12), axis=0)) == 10
    vanilla = run_baseline(two_modes, BaselineVariant.vanilla(), rng=rng)
    assert np.array_equal(history[0].components[0].mean, vanilla.components[0].mean)
    x = two_modes[::25]
    assert np.max(np.abs(mixture.log_density(x) - vanilla.log_density(x))) > 1e-6


def test_top_k_last_with_full_ratio_is_ensemble(lopsided):
    data, _ = lopsided
    ensemble = run_baseline(
        data, BaselineVariant.ensemble(3), rng=np.random.default_rng(8)
    )
    top = run_baseline(
        data, BaselineVariant.top_k_last(1.0, 3), rng=np.random.default_rng(8)
    )
    x = data[::50]
    assert top.log_density(x) == pytest.approx(ensemble.log_density(x))


def test_top_k_targets_missed_mode(lopsided, rng):
    data, density = lopsided
    mixture = run_baseline(
        data, BaselineVariant.top_k(0.1, 2), rng=rng, data_density=density
    )
    assert mixture.components[1].mean[0] > 2.0


def test_best_of_t(lopsided, rng, mocker):
    data, _ = lopsided
    resample = mocker.spy(WeightedSample, "resample")
    history = baseline_history(data, BaselineVariant.best_of_t(3), rng=rng)
    assert len(history) == 3
    assert all(len(m) == 1 for m in history)
    assert resample.call_count == 3


def test_baseline_variant_rejects():
    with pytest.raises(DomainError):
        BaselineVariant.top_k(0.0, 3)
    with pytest.raises(ValidationError):
        BaselineVariant.ensemble(0)


def test_uncovered_mode_takes_the_weight(two_modes):
    density = GeneratorMixture(
        [
            GaussianGenerator([-5.0, 0.0], 0.25 * np.eye(2)),
            GaussianGenerator([5.0, 0.0], 0.25 * np.eye(2)),
        ],
        [0.5, 0.5],
    )
    model = GeneratorMixture.single(GaussianGenerator([-5.0, 0.0], 0.25 * np.eye(2)))
    disc = fit_discriminator(two_modes, model, "oracle", None, data_density=density)
    p = np.full(1000, 1 / 1000)
    w = update_training_weights(disc.predict(two_modes), p, 0.5)
    assert w[500:].sum() >= 0.8
