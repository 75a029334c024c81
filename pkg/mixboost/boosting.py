"""Boosting of weak generative learners.

Each round fits a discriminator between the data and the current mixture,
turns its outputs into example weights that favour the examples the mixture
covers worst, fits a new component on the reweighted data and adds it to the
mixture with weight β.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from math import ceil, exp
from typing import Optional, Tuple
from warnings import warn

import numpy as np

from mixboost.divergence import density_ratio_from_discriminator
from mixboost.exceptions import (
    BoostingError,
    DomainError,
    FittingError,
    MixboostWarning,
    ValidationError,
)
from mixboost.generators import (
    DiscriminatorMode,
    GeneratorMixture,
    WeightedSample,
    as_points,
    fit_discriminator,
    fit_gaussian,
    fit_gaussian_mixture_em,
)
from mixboost.metrics import coverage_c, kde_fit
from mixboost.theory import lambda_star_empirical


logger = logging.getLogger(__name__)

BETA_TOL = 1e-9
FALLBACK_MIN_SIZE = 10
VALIDATION_FRACTION = 0.2
SELECTION_SAMPLES = 2000


def _ratio_count(ratio, n):
    return min(max(int(ceil(n * ratio - 1e-9)), 1), n)


def _clamp_ratio(ratio, n):
    if n < 2:
        return 0.5
    return min(max(ratio, 1 / n), (n - 1) / n)


def _weights_and_lambda(d_values, p, beta):
    if not 0 < beta <= 1:
        raise DomainError(f"beta must be in (0, 1], got {beta!r}.")
    p = np.asarray(p, dtype=float)
    if not abs(p.sum() - 1) <= BETA_TOL:
        raise ValidationError(f"The example weights must sum to 1, got {p.sum()!r}.")
    h = np.atleast_1d(density_ratio_from_discriminator(d_values))
    lam, _ = lambda_star_empirical(beta, p, h)
    return p / beta * np.maximum(lam - (1 - beta) * h, 0.0), lam


def update_training_weights(d_values, p, beta):
    """w_i = (p_i / β)(λ* - (1 - β)h(d_i))_+ with h(d) = (1 - d) / d, λ* making
    the weights sum to one.
    """
    return _weights_and_lambda(d_values, p, beta)[0]


def _positive_count(d_values, p, beta):
    return int(np.count_nonzero(_weights_and_lambda(d_values, p, beta)[0] > 0))


def choose_beta_for_ratio(ratio, d_values, p, tol=BETA_TOL):
    """Returns a β for which ``ceil(N * ratio)`` examples get a positive weight.

    The count grows with β, so the β range giving the requested count is an
    interval, found by bisecting for both of its ends; its midpoint is
    returned. When no β gives exactly that count a warning is issued and the β
    giving the nearest count is returned.
    """
    if not 0 < ratio < 1:
        raise DomainError(f"The ratio must be in (0, 1), got {ratio!r}.")
    p = np.asarray(p, dtype=float)
    wanted = _ratio_count(ratio, p.size)

    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _positive_count(d_values, p, mid) >= wanted:
            hi = mid
        else:
            lo = mid
    first = hi

    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _positive_count(d_values, p, mid) <= wanted:
            lo = mid
        else:
            hi = mid
    last = max(lo, tol)

    if _positive_count(d_values, p, first) == wanted:
        return 0.5 * (first + min(max(last, first), 1.0))

    above = _positive_count(d_values, p, first)
    below = _positive_count(d_values, p, last)
    beta = first if above - wanted <= wanted - below else last
    warn(
        f"No beta gives exactly {wanted} positive weights; using beta={beta:.6g}, "
        f"which gives {_positive_count(d_values, p, beta)}.",
        MixboostWarning,
        stacklevel=2,
    )
    return beta


class ScheduleKind(Enum):
    CONSTANT = "constant"
    ONE_OVER_T = "one_over_t"
    TOP_RATIO = "top_ratio"
    TOP_RATIO_DECAY = "top_ratio_decay"
    RATIO_FROM_THRESHOLD = "ratio_from_threshold"


@dataclass(frozen=True)
class BetaSchedule:
    """The rule giving the weight β_t of the component added at round t."""

    kind: ScheduleKind
    beta: Optional[float] = None
    ratio: Optional[float] = None
    c1: Optional[float] = None
    c2: Optional[float] = None
    threshold: Optional[float] = None

    def __post_init__(self):
        kind = ScheduleKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ScheduleKind.CONSTANT and not (
            self.beta is not None and 0 < self.beta <= 1
        ):
            raise DomainError(f"A constant beta must be in (0, 1], got {self.beta!r}.")
        if kind is ScheduleKind.TOP_RATIO and not (
            self.ratio is not None and 0 < self.ratio < 1
        ):
            raise DomainError(f"The ratio must be in (0, 1), got {self.ratio!r}.")
        if kind is ScheduleKind.TOP_RATIO_DECAY and not (
            self.c1 is not None and self.c1 > 0 and self.c2 is not None and self.c2 > 0
        ):
            raise DomainError(
                f"c1 and c2 must be positive, got c1={self.c1!r} and c2={self.c2!r}."
            )
        if kind is ScheduleKind.RATIO_FROM_THRESHOLD and not (
            self.threshold is not None and self.threshold > 0
        ):
            raise DomainError(
                f"The threshold must be positive, got {self.threshold!r}."
            )

    @classmethod
    def constant(cls, beta):
        return cls(ScheduleKind.CONSTANT, beta=beta)

    @classmethod
    def one_over_t(cls):
        return cls(ScheduleKind.ONE_OVER_T)

    @classmethod
    def top_ratio(cls, ratio):
        return cls(ScheduleKind.TOP_RATIO, ratio=ratio)

    @classmethod
    def top_ratio_decay(cls, c1, c2):
        return cls(ScheduleKind.TOP_RATIO_DECAY, c1=c1, c2=c2)

    @classmethod
    def ratio_from_threshold(cls, threshold):
        return cls(ScheduleKind.RATIO_FROM_THRESHOLD, threshold=threshold)

    def beta_at(self, t, d_values=None, p=None):
        """β for round ``t`` (t >= 2). The ratio-driven kinds need the
        discriminator outputs and example weights of that round.
        """
        if self.kind is ScheduleKind.CONSTANT:
            return self.beta
        if self.kind is ScheduleKind.ONE_OVER_T:
            return 1 / t
        if d_values is None or p is None:
            raise ValidationError(
                f"The {self.kind.value} schedule needs discriminator outputs."
            )
        n = len(p)
        if self.kind is ScheduleKind.TOP_RATIO:
            ratio = self.ratio
        elif self.kind is ScheduleKind.TOP_RATIO_DECAY:
            ratio = self.c1 * exp(-self.c2 * t)
        else:
            h = np.atleast_1d(density_ratio_from_discriminator(d_values))
            ratio = float(np.mean(h < self.threshold))
        return choose_beta_for_ratio(_clamp_ratio(ratio, n), d_values, p)

    def to_dict(self):
        doc = {"kind": self.kind.value}
        for name in ("beta", "ratio", "c1", "c2", "threshold"):
            value = getattr(self, name)
            if value is not None:
                doc[name] = value
        return doc


class LearnerKind(Enum):
    GAUSSIAN = "gaussian"
    GMM = "gmm"


@dataclass(frozen=True)
class LearnerConfig:
    """The weak learner: a weighted Gaussian fit or weighted EM. With
    ``resample`` the learner is fitted to an unweighted resample of the data.
    """

    kind: LearnerKind = LearnerKind.GAUSSIAN
    components: int = 1
    restarts: int = 1
    resample: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", LearnerKind(self.kind))
        if self.components < 1 or self.restarts < 1:
            raise ValidationError(
                f"components and restarts must be at least 1, got "
                f"{self.components} and {self.restarts}."
            )

    def min_fit_size(self, dim):
        return max(self.components * (dim + 1), FALLBACK_MIN_SIZE)

    def fit(self, sample, rng):
        if self.resample:
            sample = sample.resample(rng)
        if self.kind is LearnerKind.GAUSSIAN:
            return fit_gaussian(sample)
        return fit_gaussian_mixture_em(sample, self.components, self.restarts, rng)


@dataclass(frozen=True)
class IterationRecord:
    t: int
    beta: float
    lam: Optional[float]
    weight_min: float
    weight_max: float
    zero_weights: int
    fallback: bool
    component: int
    weights: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {
            "t": self.t,
            "beta": self.beta,
            "lambda": self.lam,
            "weight_min": self.weight_min,
            "weight_max": self.weight_max,
            "zero_weights": self.zero_weights,
            "fallback": self.fallback,
            "component": self.component,
        }


@dataclass(frozen=True)
class AdaganRun:
    mixture: GeneratorMixture
    records: Tuple[IterationRecord, ...]

    def mixture_at(self, t):
        """The mixture after the first ``t`` rounds."""
        if not 1 <= t <= len(self.records):
            raise ValidationError(f"t must be in [1, {len(self.records)}], got {t}.")
        components = self.mixture.components
        mixture = GeneratorMixture.single(components[0])
        for record in self.records[1:t]:
            mixture = mixture.add_component(components[record.component], record.beta)
        return mixture

    @property
    def history(self):
        return [self.mixture_at(t) for t in range(1, len(self.records) + 1)]

    def to_dict(self):
        return {
            "records": [r.to_dict() for r in self.records],
            "mixture": self.mixture.to_dict(),
        }


def _record(t, beta, lam, weights, fallback, keep_weights):
    return IterationRecord(
        t=t,
        beta=float(beta),
        lam=None if lam is None else float(lam),
        weight_min=float(weights.min()),
        weight_max=float(weights.max()),
        zero_weights=int(np.count_nonzero(weights == 0)),
        fallback=fallback,
        component=t - 1,
        weights=weights.copy() if keep_weights else None,
    )


def _fit_component(learner, sample, rng, t, mixture, records):
    try:
        return learner.fit(sample, rng)
    except FittingError as e:
        partial = None if mixture is None else AdaganRun(mixture, tuple(records))
        raise BoostingError(
            f"The weak learner couldn't be fitted at round {t}: {e}", run=partial
        ) from e


def run_adagan(
    data,
    T,
    schedule,
    learner=None,
    discriminator="oracle",
    rng=None,
    data_density=None,
    keep_weights=False,
    **kde_kwargs,
):
    """Builds a mixture of ``T`` weak learners.

    Round 1 fits the learner to the uniformly weighted data. Every later round
    fits a discriminator against the current mixture, draws β from
    ``schedule``, reweights the examples with ``update_training_weights``
    (p_i = 1/N) and adds a component fitted to the weighted data. In oracle
    mode the data density is estimated once, unless ``data_density`` is given.
    """
    points = as_points(data)
    n, dim = points.shape
    if T < 1:
        raise ValidationError(f"T must be at least 1, got {T}.")
    if n == 0:
        raise ValidationError("The data can't be empty.")
    learner = LearnerConfig() if learner is None else learner
    rng = np.random.default_rng() if rng is None else rng
    mode = DiscriminatorMode(discriminator)

    p = np.full(n, 1 / n)
    component = _fit_component(learner, WeightedSample(points), rng, 1, None, [])
    mixture = GeneratorMixture.single(component)
    records = [_record(1, 1.0, None, p, False, keep_weights)]
    logger.debug("round 1: fitted %r", component)

    if T > 1 and mode is DiscriminatorMode.ORACLE and data_density is None:
        data_density = kde_fit(points, rng=rng, **kde_kwargs)
        logger.debug("data density: %r", data_density)

    for t in range(2, T + 1):
        disc = fit_discriminator(points, mixture, mode, rng, data_density=data_density)
        d = disc.predict(points)
        beta = schedule.beta_at(t, d, p)
        weights, lam = _weights_and_lambda(d, p, beta)
        sample = WeightedSample(points, weights)

        fallback = sample.positive_count < learner.min_fit_size(dim)
        if fallback:
            size = min(learner.min_fit_size(dim), n)
            warn(
                f"Only {sample.positive_count} examples have a positive weight at "
                f"round {t}; fitting to the {size} heaviest ones instead.",
                MixboostWarning,
                stacklevel=2,
            )
            sample = sample.restricted_to(np.argsort(-weights, kind="stable")[:size])

        component = _fit_component(learner, sample, rng, t, mixture, records)
        mixture = mixture.add_component(component, beta)
        records.append(_record(t, beta, lam, sample.weights, fallback, keep_weights))
        logger.debug(
            "round %d: beta=%.6g lambda=%.6g zero weights=%d fallback=%s",
            t,
            beta,
            lam,
            records[-1].zero_weights,
            fallback,
        )

    logger.info("built a mixture of %d components on %d examples", T, n)
    return AdaganRun(mixture, tuple(records))


class BaselineKind(Enum):
    VANILLA = "vanilla"
    BEST_OF_T = "best_of_t"
    ENSEMBLE = "ensemble"
    TOP_K_LAST = "top_k_last"
    TOP_K = "top_k"


@dataclass(frozen=True)
class BaselineVariant:
    kind: BaselineKind
    T: int = 1
    ratio: Optional[float] = None

    def __post_init__(self):
        kind = BaselineKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.T < 1:
            raise ValidationError(f"T must be at least 1, got {self.T}.")
        if kind in (BaselineKind.TOP_K_LAST, BaselineKind.TOP_K) and not (
            self.ratio is not None and 0 < self.ratio <= 1
        ):
            raise DomainError(f"The ratio must be in (0, 1], got {self.ratio!r}.")

    @classmethod
    def vanilla(cls):
        return cls(BaselineKind.VANILLA)

    @classmethod
    def best_of_t(cls, T):
        return cls(BaselineKind.BEST_OF_T, T)

    @classmethod
    def ensemble(cls, T):
        return cls(BaselineKind.ENSEMBLE, T)

    @classmethod
    def top_k_last(cls, ratio, T):
        return cls(BaselineKind.TOP_K_LAST, T, ratio)

    @classmethod
    def top_k(cls, ratio, T):
        return cls(BaselineKind.TOP_K, T, ratio)


def _fit_baseline(learner, sample, rng, t):
    try:
        return learner.fit(sample, rng)
    except FittingError as e:
        raise BoostingError(
            f"The weak learner couldn't be fitted at round {t}: {e}"
        ) from e


def _best_of_t_history(points, variant, learner, rng):
    n = points.shape[0]
    order = rng.permutation(n)
    held = max(int(ceil(VALIDATION_FRACTION * n)), 1)
    validation, train = points[order[:held]], WeightedSample(points[order[held:]])

    history, best, best_score = [], None, -np.inf
    for t in range(1, variant.T + 1):
        # each run sees its own bootstrap draw of the training split
        candidate = _fit_baseline(learner, train.resample(rng), rng, t)
        score = coverage_c(
            candidate.log_density, candidate.sample(SELECTION_SAMPLES, rng), validation
        )
        logger.debug("best of T: run %d has validation coverage %.4f", t, score)
        if score > best_score:
            best, best_score = candidate, score
        history.append(GeneratorMixture.single(best))
    return history


def baseline_history(
    data,
    variant,
    learner=None,
    rng=None,
    discriminator="oracle",
    data_density=None,
    **kde_kwargs,
):
    """The models a baseline holds after each of its ``T`` rounds."""
    points = as_points(data)
    n, dim = points.shape
    if n == 0:
        raise ValidationError("The data can't be empty.")
    learner = LearnerConfig() if learner is None else learner
    rng = np.random.default_rng() if rng is None else rng
    mode = DiscriminatorMode(discriminator)

    if variant.kind is BaselineKind.BEST_OF_T:
        return _best_of_t_history(points, variant, learner, rng)

    uniform = WeightedSample(points)
    components = [_fit_baseline(learner, uniform, rng, 1)]
    mixture = GeneratorMixture.single(components[0])
    history = [mixture]
    T = 1 if variant.kind is BaselineKind.VANILLA else variant.T
    keep = None if variant.ratio is None else _ratio_count(variant.ratio, n)

    for t in range(2, T + 1):
        if variant.kind is BaselineKind.ENSEMBLE or keep == n:
            sample = uniform.resample(rng)
        else:
            if mode is DiscriminatorMode.ORACLE and data_density is None:
                data_density = kde_fit(points, rng=rng, **kde_kwargs)
            against = (
                GeneratorMixture.single(components[-1])
                if variant.kind is BaselineKind.TOP_K_LAST
                else mixture
            )
            disc = fit_discriminator(
                points, against, mode, rng, data_density=data_density
            )
            h = density_ratio_from_discriminator(disc.predict(points))
            size = min(max(keep, learner.min_fit_size(dim)), n)
            sample = uniform.restricted_to(np.argsort(h, kind="stable")[:size])
        components.append(_fit_baseline(learner, sample, rng, t))
        mixture = mixture.add_component(components[-1], 1 / t)
        history.append(mixture)
    return history


def run_baseline(data, variant, learner=None, rng=None, **kwargs):
    """Final model of a baseline: a single fit (vanilla), the best by held-out
    coverage of T fits to bootstrap draws of the data, an equal-weight
    ensemble of the vanilla fit and T - 1 fits to bootstrap draws, or T fits
    each restricted to the examples worst covered by the last component (top k
    last) or by the whole mixture (top k), mixed with β_t = 1/t.
    """
    return baseline_history(data, variant, learner, rng, **kwargs)[-1]
