from math import log, pi

import numpy as np
import pytest
from scipy.special import logsumexp

from mixboost.divergence import density_ratio_from_discriminator
from mixboost.exceptions import (
    DomainError,
    FittingError,
    MixboostWarning,
    StructuralError,
    ValidationError,
)
from mixboost.generators import (
    DiscriminatorMode,
    GaussianGenerator,
    GaussianMixtureGenerator,
    GeneratorMixture,
    LogisticDiscriminator,
    OracleDiscriminator,
    WeightedSample,
    fit_discriminator,
    fit_gaussian,
    fit_gaussian_mixture_em,
    fit_logistic_discriminator,
    generator_from_dict,
    mixture_add_component,
    mixture_log_density,
    mixture_sample,
    weighted_em,
)


def _standard(dim=1):
    return GaussianGenerator(np.zeros(dim), np.eye(dim))


def test_gaussian_log_density():
    g = _standard()
    assert g.log_density(np.array([0.0])) == pytest.approx(-0.5 * log(2 * pi))
    values = g.log_density(np.array([[0.0], [1.0]]))
    assert values.shape == (2,)
    assert values[1] == pytest.approx(-0.5 * log(2 * pi) - 0.5)


def test_gaussian_wrong_dimension():
    with pytest.raises(StructuralError):
        _standard(2).log_density(np.zeros((3, 1)))


def test_gaussian_bad_covariance():
    with pytest.raises(ValidationError):
        GaussianGenerator([0.0], [[-1.0]])


def test_gaussian_sample(rng):
    g = GaussianGenerator([3.0, -1.0], np.diag([0.25, 4.0]))
    x = g.sample(20000, rng)
    assert x.shape == (20000, 2)
    assert x.mean(axis=0) == pytest.approx([3.0, -1.0], abs=0.05)
    assert x.std(axis=0) == pytest.approx([0.5, 2.0], rel=0.03)
    assert g.sample(0, rng).shape == (0, 2)


def test_mixture_add_component():
    a, b = _standard(), GaussianGenerator([4.0], [[1.0]])
    mixture = mixture_add_component(GeneratorMixture.single(a), b, 0.25)
    assert mixture.alphas.tolist() == [0.75, 0.25]
    assert len(mixture) == 2


@pytest.mark.parametrize("beta", [0.0, 1.5])
def test_mixture_add_component_domain(beta):
    with pytest.raises(DomainError):
        GeneratorMixture.single(_standard()).add_component(_standard(), beta)


def test_mixture_one_over_t_is_uniform():
    mixture = GeneratorMixture.single(_standard())
    for t in range(2, 6):
        mixture = mixture.add_component(GaussianGenerator([t], [[1.0]]), 1 / t)
    assert mixture.alphas.tolist() == pytest.approx([0.2] * 5)


def test_mixture_rejects():
    with pytest.raises(ValidationError):
        GeneratorMixture([_standard(), _standard()], [0.5, 0.6])
    with pytest.raises(StructuralError):
        GeneratorMixture([_standard(), _standard(2)], [0.5, 0.5])
    with pytest.raises(StructuralError):
        GeneratorMixture([], [])


def test_mixture_log_density():
    a, b = _standard(), GaussianGenerator([4.0], [[1.0]])
    mixture = GeneratorMixture([a, b], [0.3, 0.7])
    x = np.array([[-1.0], [2.0], [5.0]])
    terms = [log(0.3) + a.log_density(x), log(0.7) + b.log_density(x)]
    expected = logsumexp(np.column_stack(terms), axis=1)
    assert mixture_log_density(mixture, x) == pytest.approx(expected)


def test_mixture_zero_weight_component():
    a, b = _standard(), GaussianGenerator([4.0], [[1.0]])
    mixture = GeneratorMixture([a, b], [1.0, 0.0])
    x = np.array([[0.5], [4.0]])
    assert mixture.log_density(x) == pytest.approx(a.log_density(x))


def test_mixture_sample(rng):
    a, b = _standard(), GaussianGenerator([10.0], [[1.0]])
    mixture = GeneratorMixture([a, b], [0.25, 0.75])
    x, labels = mixture.sample(20000, rng, return_labels=True)
    assert np.mean(labels == 1) == pytest.approx(0.75, abs=0.02)
    assert x[labels == 1].mean() == pytest.approx(10.0, abs=0.05)
    assert mixture_sample(mixture, 7, rng).shape == (7, 1)


def test_generator_from_dict():
    inner = GaussianMixtureGenerator([[0.0], [3.0]], [[[1.0]], [[2.0]]], [0.5, 0.5])
    mixture = GeneratorMixture([inner, _standard()], [0.6, 0.4])
    rebuilt = generator_from_dict(mixture.to_dict())
    x = np.linspace(-3, 6, 10).reshape(-1, 1)
    assert rebuilt.log_density(x) == pytest.approx(mixture.log_density(x))
    assert isinstance(rebuilt.components[0], GaussianMixtureGenerator)


@pytest.mark.parametrize("doc", [{"type": "cauchy"}, {"type": "gaussian"}, {}])
def test_generator_from_dict_rejects(doc):
    with pytest.raises(ValidationError):
        generator_from_dict(doc)


def test_weighted_sample_rejects():
    with pytest.raises(ValidationError):
        WeightedSample(np.zeros((2, 1)), [0.5, 0.6])
    with pytest.raises(ValidationError):
        WeightedSample(np.zeros((2, 1)), [1.5, -0.5])
    with pytest.raises(StructuralError):
        WeightedSample(np.zeros((2, 1)), [1.0])


def test_weighted_sample_restricted_to():
    sample = WeightedSample(np.arange(8.0).reshape(4, 2))
    restricted = sample.restricted_to([1, 3])
    assert restricted.weights.tolist() == [0.0, 0.5, 0.0, 0.5]
    assert restricted.positive_count == 2
    assert restricted.dim == 2


def test_weighted_sample_resample(rng):
    sample = WeightedSample(np.arange(4.0).reshape(4, 1), [0.0, 0.0, 0.0, 1.0])
    resampled = sample.resample(rng, 10)
    assert resampled.points.ravel().tolist() == [3.0] * 10
    assert len(resampled) == 10


def test_fit_gaussian_uses_weights(two_modes):
    w = np.r_[np.zeros(500), np.full(500, 1 / 500)]
    g = fit_gaussian(WeightedSample(two_modes, w))
    assert g.mean == pytest.approx([5.0, 0.0], abs=0.1)
    assert np.diag(g.covariance) == pytest.approx([0.25, 0.25], rel=0.2)


def test_fit_gaussian_single_point_is_regularized():
    g = fit_gaussian(WeightedSample(np.ones((3, 2))))
    assert np.all(np.linalg.eigvalsh(g.covariance) > 0)


def test_fit_gaussian_not_finite():
    with pytest.raises(FittingError):
        fit_gaussian(WeightedSample(np.array([[0.0], [np.inf]])))


def test_em_two_modes(two_modes, rng):
    mixture = fit_gaussian_mixture_em(WeightedSample(two_modes), 2, 5, rng)
    means = mixture.means[np.argsort(mixture.means[:, 0])]
    assert means == pytest.approx(np.array([[-5.0, 0.0], [5.0, 0.0]]), abs=0.2)
    assert mixture.alphas == pytest.approx([0.5, 0.5], abs=0.05)


def test_em_follows_weights(two_modes, rng):
    w = np.r_[np.full(500, 1 / 500), np.zeros(500)]
    result = weighted_em(WeightedSample(two_modes, w), 1, rng)
    assert result.mixture.means[0] == pytest.approx([-5.0, 0.0], abs=0.1)
    assert result.log_likelihoods[-1] >= result.log_likelihoods[0]


def test_em_rejects(two_modes, rng):
    with pytest.raises(ValidationError):
        fit_gaussian_mixture_em(WeightedSample(two_modes), 0, 1, rng)


def test_oracle_discriminator_of_a_model_against_itself():
    model = GeneratorMixture.single(_standard(2))
    disc = OracleDiscriminator(model, model)
    d = disc.predict(np.array([[0.0, 0.0], [3.0, -1.0]]))
    assert d == pytest.approx([0.5, 0.5])
    assert disc.predict(np.array([1.0, 1.0])) == pytest.approx(0.5)


def test_oracle_discriminator_favours_data():
    data = GaussianGenerator([0.0], [[1.0]])
    model = GeneratorMixture.single(GaussianGenerator([5.0], [[1.0]]))
    disc = fit_discriminator(np.zeros((3, 1)), model, "oracle", None, data_density=data)
    d = disc.predict(np.array([[0.0], [5.0]]))
    assert d[0] > 0.99
    assert d[1] < 0.01


def test_logistic_discriminator(rng):
    positives = rng.normal(-2.0, 1.0, size=(2000, 1))
    negatives = rng.normal(2.0, 1.0, size=(2000, 1))
    disc = fit_logistic_discriminator(positives, negatives)
    assert isinstance(disc, LogisticDiscriminator)
    assert disc.converged
    d = disc.predict(np.array([[-2.0], [0.0], [2.0]]))
    assert d[0] > 0.9
    assert d[1] == pytest.approx(0.5, abs=0.1)
    assert d[2] < 0.1


def test_classifier_mode(two_modes, rng):
    model = GeneratorMixture.single(GaussianGenerator([-5.0, 0.0], 0.25 * np.eye(2)))
    disc = fit_discriminator(two_modes, model, DiscriminatorMode.CLASSIFIER, rng)
    d = disc.predict(np.array([[-5.0, 0.0], [5.0, 0.0]]))
    assert d[1] > d[0]


def test_discriminator_empty_data(rng):
    with pytest.raises(ValidationError):
        fit_discriminator(np.zeros((0, 2)), None, "oracle", rng)


def test_mixture_density_integrates_to_one(rng):
    mixture = GeneratorMixture(
        [_standard(), GaussianGenerator([4.0], [[0.25]])], [0.3, 0.7]
    )
    lo, hi = -10.0, 14.0
    x = rng.uniform(lo, hi, size=(200_000, 1))
    integral = (hi - lo) * np.mean(np.exp(mixture.log_density(x)))
    assert integral == pytest.approx(1.0, abs=0.02)


def test_em_log_likelihood_never_decreases(two_modes, rng):
    w = rng.uniform(0.5, 1.5, size=two_modes.shape[0])
    result = weighted_em(WeightedSample(two_modes, w / w.sum()), 2, rng)
    assert result.reseeded == 0
    assert len(result.log_likelihoods) > 2
    assert np.all(np.diff(result.log_likelihoods) >= -1e-8)


def test_single_component_em_is_the_gaussian_fit(two_modes, rng):
    w = np.r_[np.full(500, 0.6 / 500), np.full(500, 0.4 / 500)]
    sample = WeightedSample(two_modes, w)
    mixture = fit_gaussian_mixture_em(sample, 1, 1, rng)
    g = fit_gaussian(sample)
    assert mixture.means[0] == pytest.approx(g.mean, abs=1e-6)
    assert mixture.covariances[0] == pytest.approx(g.covariance, abs=1e-6)
    assert mixture.alphas.tolist() == [1.0]


def test_oracle_discriminator_gives_back_the_density_ratio():
    data = GaussianGenerator([0.0, 0.0], np.eye(2))
    model = GeneratorMixture.single(GaussianGenerator([0.5, -0.5], np.eye(2)))
    disc = OracleDiscriminator(data, model)
    x = np.array([[0.0, 0.0], [1.0, -1.0], [-1.0, 0.5], [2.0, 2.0]])
    h = density_ratio_from_discriminator(disc.predict(x))
    expected = np.exp(model.log_density(x) - data.log_density(x))
    assert h == pytest.approx(expected, rel=1e-6)


def test_classifier_on_matched_densities(rng):
    model = GeneratorMixture.single(_standard(2))
    data = model.sample(5000, rng)
    disc = fit_discriminator(data, model, "classifier", rng)
    assert disc.converged
    assert np.mean(np.abs(disc.predict(data) - 0.5)) <= 0.05


def test_logistic_discriminator_not_converged(rng):
    positives = rng.normal(-0.5, 1.0, size=(500, 1))
    negatives = rng.normal(0.5, 1.0, size=(500, 1))
    with pytest.warns(MixboostWarning):
        disc = fit_logistic_discriminator(positives, negatives, max_iter=1)
    assert not disc.converged
    assert disc.iterations == 1
