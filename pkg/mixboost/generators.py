from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Tuple
from warnings import catch_warnings, simplefilter, warn

import numpy as np
from scipy import linalg
from scipy.special import expit, logsumexp
from scipy.stats import multivariate_normal
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import PolynomialFeatures, StandardScaler

from mixboost.divergence import clamp_discriminator
from mixboost.exceptions import (
    DomainError,
    FittingError,
    MixboostWarning,
    StructuralError,
    ValidationError,
)
from mixboost.metrics import kde_fit


WEIGHT_ATOL = 1e-9
ALPHA_ATOL = 1e-12
RIDGE = 1e-6
EMPTY_COMPONENT_MASS = 1e-10
CLASSIFIER_PENALTY = 1e-3
CLASSIFIER_TOL = 1e-6
CLASSIFIER_MAX_ITER = 200


def as_points(points, dim=None):
    """Returns ``points`` as an (n, d) float array. A 1-d input is one point."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise StructuralError(f"Points must be a 2-d array, got shape {arr.shape}.")
    if dim is not None and arr.shape[1] != dim:
        raise StructuralError(
            f"Points have dimension {arr.shape[1]} but dimension {dim} is expected."
        )
    return arr


class WeightedSample:
    """Training points with nonnegative weights summing to one."""

    def __init__(self, points, weights=None):
        pts = as_points(points)
        if pts.shape[0] == 0:
            raise ValidationError("A weighted sample needs at least one point.")
        if weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.array(weights, dtype=float)
        if w.shape != (pts.shape[0],):
            raise StructuralError(
                f"Expected {pts.shape[0]} weights, got an array of shape {w.shape}."
            )
        if np.isnan(w).any() or (w < 0).any():
            raise ValidationError("Sample weights must be nonnegative.")
        if not abs(w.sum() - 1) <= WEIGHT_ATOL:
            raise ValidationError(f"Sample weights must sum to 1, got {w.sum()!r}.")
        pts.setflags(write=False)
        w.setflags(write=False)
        self.points = pts
        self.weights = w

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def positive_count(self):
        return int(np.count_nonzero(self.weights > 0))

    def resample(self, rng, size=None):
        """Draws ``size`` points with replacement in proportion to the weights
        and returns them with uniform weights.
        """
        size = len(self) if size is None else size
        idx = rng.choice(len(self), size=size, replace=True, p=self.weights)
        return WeightedSample(self.points[idx])

    def restricted_to(self, indices):
        """Same points, uniform weights on ``indices`` and zero elsewhere."""
        indices = np.asarray(indices)
        w = np.zeros(len(self))
        w[indices] = 1.0 / indices.size
        return WeightedSample(self.points, w)


class Generator(ABC):
    """A generative model with an analytic density."""

    dim: int

    @abstractmethod
    def sample(self, count, rng):
        pass

    @abstractmethod
    def _log_density(self, points):
        pass

    @abstractmethod
    def to_dict(self):
        pass

    def log_density(self, points):
        """Log-density at each row of ``points``; a float for a single 1-d
        point.
        """
        single = np.ndim(points) == 1
        values = self._log_density(as_points(points, self.dim))
        return float(values[0]) if single else values


class GaussianGenerator(Generator):
    def __init__(self, mean, covariance):
        self.mean = np.array(mean, dtype=float).reshape(-1)
        self.covariance = np.array(covariance, dtype=float).reshape(
            self.mean.size, self.mean.size
        )
        self.dim = self.mean.size
        try:
            self._dist = multivariate_normal(self.mean, self.covariance)
        except (ValueError, linalg.LinAlgError) as e:
            raise ValidationError(
                "The covariance of a Gaussian must be symmetric positive definite."
            ) from e

    def __repr__(self):
        return f"<GaussianGenerator mean={self.mean}>"

    def sample(self, count, rng):
        if count == 0:
            return np.empty((0, self.dim))
        return rng.multivariate_normal(self.mean, self.covariance, size=count)

    def _log_density(self, points):
        return np.atleast_1d(self._dist.logpdf(points)).reshape(points.shape[0])

    def to_dict(self):
        return {
            "type": "gaussian",
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
        }


class GeneratorMixture(Generator):
    """Σ α_i G_i, sampled by first drawing the component index from the
    multinomial distribution α.
    """

    def __init__(self, components, alphas):
        components = tuple(components)
        alphas = np.array(alphas, dtype=float)
        if len(components) == 0 or alphas.shape != (len(components),):
            raise StructuralError(
                f"A mixture needs as many weights as components, got "
                f"{len(components)} components and weights of shape {alphas.shape}."
            )
        if np.isnan(alphas).any() or (alphas < 0).any():
            raise ValidationError("Mixture weights must be nonnegative.")
        if not abs(alphas.sum() - 1) <= ALPHA_ATOL:
            raise ValidationError(
                f"Mixture weights must sum to 1, got {alphas.sum()!r}."
            )
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise StructuralError(f"Mixture components have dimensions {sorted(dims)}.")
        alphas.setflags(write=False)
        self.components = components
        self.alphas = alphas
        self.dim = dims.pop()

    @classmethod
    def single(cls, generator):
        return cls((generator,), (1.0,))

    def __len__(self):
        return len(self.components)

    def __repr__(self):
        return f"<GeneratorMixture alphas={np.array2string(self.alphas, precision=4)}>"

    def add_component(self, generator, beta):
        if not 0 < beta <= 1:
            raise DomainError(f"beta must be in (0, 1], got {beta!r}.")
        return GeneratorMixture(
            self.components + (generator,), np.append((1 - beta) * self.alphas, beta)
        )

    def sample(self, count, rng, return_labels=False):
        labels = rng.choice(len(self), size=count, p=self.alphas)
        points = np.empty((count, self.dim))
        for i, component in enumerate(self.components):
            mask = labels == i
            points[mask] = component.sample(int(mask.sum()), rng)
        if return_labels:
            return points, labels
        return points

    def _log_density(self, points):
        with np.errstate(divide="ignore"):
            log_alphas = np.log(self.alphas)
        terms = (
            np.column_stack([c.log_density(points) for c in self.components])
            + log_alphas
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            return logsumexp(terms, axis=1)

    def to_dict(self):
        return {
            "type": "mixture",
            "alphas": self.alphas.tolist(),
            "components": [c.to_dict() for c in self.components],
        }


class GaussianMixtureGenerator(GeneratorMixture):
    """A mixture of full-covariance Gaussians, the output of weighted EM."""

    def __init__(self, means, covariances, alphas):
        super().__init__(
            [GaussianGenerator(m, c) for m, c in zip(means, covariances)], alphas
        )

    def __repr__(self):
        return f"<GaussianMixtureGenerator k={len(self)}>"

    @property
    def means(self):
        return np.array([c.mean for c in self.components])

    @property
    def covariances(self):
        return np.array([c.covariance for c in self.components])

    def to_dict(self):
        return {
            "type": "gaussian_mixture",
            "alphas": self.alphas.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }


def generator_from_dict(doc):
    try:
        kind = doc["type"]
        if kind == "gaussian":
            return GaussianGenerator(doc["mean"], doc["covariance"])
        if kind == "gaussian_mixture":
            return GaussianMixtureGenerator(
                doc["means"], doc["covariances"], doc["alphas"]
            )
        if kind == "mixture":
            return GeneratorMixture(
                [generator_from_dict(c) for c in doc["components"]], doc["alphas"]
            )
    except (KeyError, TypeError) as e:
        raise ValidationError(f"Malformed generator document: {e}") from e
    raise ValidationError(f"Unknown generator type {kind!r}.")


def mixture_add_component(mixture, generator, beta):
    return mixture.add_component(generator, beta)


def mixture_sample(mixture, n, rng):
    return mixture.sample(n, rng)


def mixture_log_density(mixture, x):
    return mixture.log_density(x)


def _regularize(cov, ridge=RIDGE):
    d = cov.shape[0]
    trace = np.trace(cov)
    eps = ridge * trace / d if trace > 0 else ridge
    cov = cov + eps * np.eye(d)
    if not np.all(np.isfinite(cov)):
        raise FittingError("The weighted covariance is not finite.")
    return cov


def _weighted_moments(points, weights):
    mean = weights @ points
    diff = points - mean
    return mean, (weights[:, None] * diff).T @ diff


def fit_gaussian(sample, ridge=RIDGE):
    """Weighted maximum-likelihood Gaussian with a ridge of
    ``ridge * trace(Σ) / d`` on the diagonal.
    """
    mean, cov = _weighted_moments(sample.points, sample.weights)
    try:
        return GaussianGenerator(mean, _regularize(cov, ridge))
    except ValidationError as e:
        raise FittingError("The weighted covariance is degenerate.") from e


@dataclass(frozen=True)
class EMResult:
    mixture: GeneratorMixture
    log_likelihoods: Tuple[float, ...]
    reseeded: int


def weighted_em(sample, k, rng, max_iter=200, tol=1e-8, ridge=RIDGE):
    """A single EM run on weighted data, each point's responsibilities being
    scaled by its weight. Initial means are drawn from the points in proportion
    to their weights.
    """
    x, w = sample.points, sample.weights
    positive = np.flatnonzero(w > 0)
    start = rng.choice(
        positive,
        size=k,
        replace=positive.size < k,
        p=w[positive] / w[positive].sum(),
    )
    base_cov = fit_gaussian(sample, ridge).covariance
    means = x[start].copy()
    covs = np.repeat(base_cov[None], k, axis=0)
    alphas = np.full(k, 1.0 / k)

    history = []
    reseeded = 0
    just_reseeded = False
    for it in range(max_iter + 1):
        log_prob = np.column_stack(
            [
                multivariate_normal(means[j], covs[j]).logpdf(x).reshape(-1)
                for j in range(k)
            ]
        )
        with np.errstate(divide="ignore"):
            log_prob = log_prob + np.log(alphas)
        log_norm = logsumexp(log_prob, axis=1)
        ll = float(w @ log_norm)
        converged = bool(history) and not just_reseeded and ll - history[-1] < tol
        history.append(ll)
        if converged or it == max_iter:
            break

        wr = w[:, None] * np.exp(log_prob - log_norm[:, None])
        nk = wr.sum(axis=0)
        just_reseeded = False
        for j in range(k):
            if nk[j] <= EMPTY_COMPONENT_MASS:
                warn(
                    f"EM component {j} lost all its weight and was re-seeded from "
                    f"the highest-weight point.",
                    MixboostWarning,
                    stacklevel=2,
                )
                means[j] = x[np.argmax(w)]
                covs[j] = base_cov
                nk[j] = 1.0 / k
                reseeded += 1
                just_reseeded = True
                continue
            means[j] = wr[:, j] @ x / nk[j]
            diff = x - means[j]
            covs[j] = _regularize((wr[:, j, None] * diff).T @ diff / nk[j], ridge)
        alphas = nk / nk.sum()

    mixture = GaussianMixtureGenerator(means, covs, alphas)
    return EMResult(mixture, tuple(history), reseeded)


def fit_gaussian_mixture_em(sample, k, restarts, rng, max_iter=200, tol=1e-8):
    """Best, by weighted log-likelihood, of ``restarts`` weighted EM runs with
    ``k`` full-covariance components.
    """
    if k < 1 or restarts < 1:
        raise ValidationError(
            f"k and restarts must be at least 1, got k={k} and restarts={restarts}."
        )
    if sample.positive_count == 0:
        raise FittingError("There are no points with positive weight.")
    best = None
    for _ in range(restarts):
        result = weighted_em(sample, k, rng, max_iter=max_iter, tol=tol)
        if best is None or result.log_likelihoods[-1] > best.log_likelihoods[-1]:
            best = result
    return best.mixture


class DiscriminatorMode(Enum):
    ORACLE = "oracle"
    CLASSIFIER = "classifier"


class Discriminator(ABC):
    """Estimates dP_d / (dP_d + dP_g), clamped into (0, 1)."""

    converged = True

    @abstractmethod
    def _predict(self, points):
        pass

    def predict(self, points):
        single = np.ndim(points) == 1
        d = clamp_discriminator(self._predict(as_points(points)))
        return float(d[0]) if single else d


class OracleDiscriminator(Discriminator):
    """Plugs a density estimate of the data and the model's own density into
    the form of the optimal discriminator.
    """

    def __init__(self, data_density, model):
        self.data_density = data_density
        self.model = model

    def _predict(self, points):
        log_pd = np.asarray(self.data_density.log_density(points), dtype=float)
        log_pg = self.model.log_density(points)
        with np.errstate(invalid="ignore"):
            diff = log_pd - log_pg
        return expit(np.where(np.isnan(diff), 0.0, diff))


class LogisticDiscriminator(Discriminator):
    """A fitted logistic model on degree-2 polynomial features; class 1 is
    the data.
    """

    def __init__(self, pipeline, converged, iterations):
        self.pipeline = pipeline
        self.converged = converged
        self.iterations = iterations

    def _predict(self, points):
        return self.pipeline.predict_proba(points)[:, 1]


def fit_logistic_discriminator(
    positives,
    negatives,
    penalty=CLASSIFIER_PENALTY,
    tol=CLASSIFIER_TOL,
    max_iter=CLASSIFIER_MAX_ITER,
):
    """L2-penalised logistic regression on standardised degree-2 polynomial
    features, ``positives`` labelled 1, fitted by Newton steps (iteratively
    reweighted least squares). The penalty is on the mean log-loss and
    leaves the intercept alone.
    """
    x = np.vstack([as_points(positives), as_points(negatives)])
    y = np.r_[np.ones(len(positives)), np.zeros(len(negatives))]
    pipeline = make_pipeline(
        PolynomialFeatures(degree=2, include_bias=False),
        StandardScaler(),
        LogisticRegression(
            C=1.0 / (penalty * x.shape[0]),
            solver="newton-cholesky",
            tol=tol,
            max_iter=max_iter,
        ),
    )
    with catch_warnings(record=True) as caught:
        simplefilter("always", ConvergenceWarning)
        try:
            pipeline.fit(x, y)
        except ValueError as e:
            raise FittingError(
                f"The logistic discriminator can't be fitted: {e}"
            ) from e
    converged = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
    iterations = int(np.max(pipeline[-1].n_iter_))
    if not converged:
        warn(
            f"The logistic discriminator didn't converge in {max_iter} iterations; "
            f"using the last iterate.",
            MixboostWarning,
            stacklevel=2,
        )
    return LogisticDiscriminator(pipeline, converged, iterations)


def fit_discriminator(data, model, mode, rng, data_density=None, **kde_kwargs):
    """Discriminator between the (unweighted) data and the mixture ``model``.

    In oracle mode ``data_density`` is used when given, otherwise a KDE of the
    data is fitted. In classifier mode as many model samples as data points are
    drawn and a logistic model is trained to tell them apart.
    """
    points = data.points if isinstance(data, WeightedSample) else as_points(data)
    if points.shape[0] == 0:
        raise ValidationError("The data can't be empty.")
    mode = DiscriminatorMode(mode)
    if mode is DiscriminatorMode.ORACLE:
        if data_density is None:
            data_density = kde_fit(points, rng=rng, **kde_kwargs)
        return OracleDiscriminator(data_density, model)
    negatives = model.sample(points.shape[0], rng)
    return fit_logistic_discriminator(points, negatives)
