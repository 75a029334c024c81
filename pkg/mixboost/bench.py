"""Toy mixture benchmarks: dataset generation, repeated runs of boosting and
of the baselines, and the aggregated reports.
"""

import csv
import io
import json
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from math import sqrt
from typing import Optional, Tuple

import numpy as np

from mixboost.boosting import (
    BaselineKind,
    BaselineVariant,
    BetaSchedule,
    LearnerConfig,
    baseline_history,
    run_adagan,
    update_training_weights,
)
from mixboost.divergence import density_ratio_from_discriminator
from mixboost.exceptions import ConfigError, Error, ValidationError
from mixboost.generators import (
    DiscriminatorMode,
    GaussianGenerator,
    GeneratorMixture,
    WeightedSample,
    fit_discriminator,
)
from mixboost.metrics import coverage_c, kde_fit, log_likelihood_l


logger = logging.getLogger(__name__)

MAX_CENTER_ATTEMPTS = 10_000
SEPARATION = 6.0
DATASET_STREAM = 1
KDE_STREAM = 2
METRICS = ("coverage", "likelihood")
COVERAGE_DENSITIES = ("analytic", "kde")
FORMATS = ("csv", "json")
ADAGAN = "adagan"
VARIANTS = (ADAGAN,) + tuple(k.value for k in BaselineKind)
CSV_HEADER = (
    "algorithm",
    "modes",
    "T",
    "metric",
    "median",
    "p5",
    "p95",
    "repeats",
    "failed",
)


@dataclass(frozen=True)
class ToyDatasetSpec:
    """Isotropic Gaussian modes with equal weights, their centers drawn
    uniformly in a square and kept at least ``SEPARATION`` standard deviations
    apart. The centers only depend on ``seed``.
    """

    modes: int = 5
    square_half_width: float = 10.0
    seed: int = 0
    train_size: int = 64000
    test_size: int = 10000

    def __post_init__(self):
        if self.modes < 1:
            raise ValidationError(f"modes must be at least 1, got {self.modes}.")
        if not self.square_half_width > 0:
            raise ValidationError(
                f"square_half_width must be positive, got {self.square_half_width!r}."
            )
        if self.train_size < 1 or self.test_size < 1:
            raise ValidationError(
                f"The train and test sizes must be positive, got {self.train_size} "
                f"and {self.test_size}."
            )

    @property
    def sigma(self):
        return 5 / (2 * sqrt(self.modes))

    def centers(self):
        rng = np.random.default_rng(self.seed)
        min_distance = SEPARATION * self.sigma
        accepted = []
        for _ in range(MAX_CENTER_ATTEMPTS):
            candidate = rng.uniform(-self.square_half_width, self.square_half_width, 2)
            if all(np.linalg.norm(candidate - c) >= min_distance for c in accepted):
                accepted.append(candidate)
                if len(accepted) == self.modes:
                    return np.array(accepted)
        raise ValidationError(
            f"Couldn't place {self.modes} centers {min_distance:.3g} apart in "
            f"{MAX_CENTER_ATTEMPTS} attempts; use a larger square_half_width."
        )

    def true_density(self):
        cov = self.sigma**2 * np.eye(2)
        components = [GaussianGenerator(c, cov) for c in self.centers()]
        return GeneratorMixture(components, np.full(self.modes, 1 / self.modes))


@dataclass(frozen=True)
class ToyDataset:
    train: np.ndarray
    test: np.ndarray
    density: GeneratorMixture


def generate_toy_dataset(spec, rng=None):
    rng = np.random.default_rng([spec.seed, DATASET_STREAM]) if rng is None else rng
    density = spec.true_density()
    train = density.sample(spec.train_size, rng)
    test = density.sample(spec.test_size, rng)
    return ToyDataset(train, test, density)


@dataclass(frozen=True)
class AlgorithmSpec:
    """One benchmarked algorithm: boosting (``adagan``) or a baseline."""

    name: str
    variant: str
    T: int = 1
    schedule: Optional[BetaSchedule] = None
    ratio: Optional[float] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(
                f"Unknown variant {self.variant!r}; expected one of {VARIANTS}."
            )
        if self.T < 1:
            raise ValidationError(f"T must be at least 1, got {self.T}.")
        if self.variant == ADAGAN and self.schedule is None:
            object.__setattr__(self, "schedule", BetaSchedule.one_over_t())
        if self.variant != ADAGAN:
            BaselineVariant(BaselineKind(self.variant), self.T, self.ratio)

    @property
    def rounds(self):
        return 1 if self.variant == BaselineKind.VANILLA.value else self.T

    @property
    def needs_discriminator(self):
        if self.rounds == 1:
            return False
        if self.variant == ADAGAN:
            return True
        return self.variant in (BaselineKind.TOP_K.value, BaselineKind.TOP_K_LAST.value)

    def history(self, train, learner, discriminator, rng, data_density=None):
        """Models after each round, fitted to ``train``."""
        if self.variant == ADAGAN:
            run = run_adagan(
                train,
                self.T,
                self.schedule,
                learner,
                discriminator,
                rng,
                data_density=data_density,
            )
            return run.history
        variant = BaselineVariant(BaselineKind(self.variant), self.T, self.ratio)
        return baseline_history(
            train, variant, learner, rng, discriminator, data_density=data_density
        )


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: ToyDatasetSpec
    algorithms: Tuple[AlgorithmSpec, ...]
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    discriminator: str = "oracle"
    repeats: int = 15
    seed: int = 0
    metrics: Tuple[str, ...] = METRICS
    coverage_density: str = "analytic"
    model_samples: int = 5000
    workers: int = 1
    format: str = "csv"
    kde_max_cv_points: Optional[int] = 2000

    def __post_init__(self):
        if not self.algorithms:
            raise ValidationError("At least one algorithm is needed.")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise ValidationError(f"Algorithm names must be unique, got {names}.")
        if self.discriminator not in {m.value for m in DiscriminatorMode}:
            raise ValidationError(
                f"Unknown discriminator mode {self.discriminator!r}."
            )
        if self.repeats < 1:
            raise ValidationError(f"repeats must be at least 1, got {self.repeats}.")
        if not self.metrics or not set(self.metrics) <= set(METRICS):
            raise ValidationError(f"metrics must be a subset of {METRICS}.")
        if self.coverage_density not in COVERAGE_DENSITIES:
            raise ValidationError(
                f"coverage_density must be one of {COVERAGE_DENSITIES}."
            )
        if self.model_samples < 100:
            raise ValidationError(
                f"model_samples must be at least 100, got {self.model_samples}."
            )
        if self.workers < 1:
            raise ValidationError(f"workers must be at least 1, got {self.workers}.")
        if self.format not in FORMATS:
            raise ValidationError(f"format must be one of {FORMATS}.")

    def algorithm(self, variant=ADAGAN):
        for a in self.algorithms:
            if a.variant == variant:
                return a
        raise ConfigError(f"The configuration has no {variant!r} algorithm.")


@dataclass(frozen=True)
class ReportRow:
    algorithm: str
    modes: int
    T: int
    metric: str
    median: float
    p5: float
    p95: float
    repeats: int
    failed: int
    values: Tuple[float, ...] = ()

    def csv_fields(self):
        return [
            self.algorithm,
            str(self.modes),
            str(self.T),
            self.metric,
            f"{self.median:.6g}",
            f"{self.p5:.6g}",
            f"{self.p95:.6g}",
            str(self.repeats),
            str(self.failed),
        ]


def _write_csv(header, rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return out.getvalue()


@dataclass(frozen=True)
class ExperimentReport:
    rows: Tuple[ReportRow, ...]

    def to_csv(self):
        return _write_csv(CSV_HEADER, [r.csv_fields() for r in self.rows])

    def to_json(self):
        doc = {"rows": [asdict(r) for r in self.rows]}
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
            rows = []
            for r in doc["rows"]:
                r = dict(r)
                r["values"] = tuple(r.get("values", ()))
                rows.append(ReportRow(**r))
        except (ValueError, KeyError, TypeError) as e:
            raise ValidationError(f"Malformed experiment report: {e}") from e
        return cls(tuple(rows))

    @classmethod
    def from_csv(cls, text):
        """Reads the rows back from ``to_csv`` output; per-repeat values
        aren't part of the CSV form.
        """
        reader = csv.reader(io.StringIO(text))
        if tuple(next(reader, ())) != CSV_HEADER:
            raise ValidationError("The report doesn't start with the expected header.")
        rows = []
        try:
            for fields in reader:
                name, modes, t, metric, median, p5, p95, repeats, failed = fields
                rows.append(
                    ReportRow(
                        name,
                        int(modes),
                        int(t),
                        metric,
                        float(median),
                        float(p5),
                        float(p95),
                        int(repeats),
                        int(failed),
                    )
                )
        except ValueError as e:
            raise ValidationError(f"Malformed experiment report: {e}") from e
        return cls(tuple(rows))

    def row(self, algorithm, metric, T=None):
        matching = [
            r for r in self.rows if r.algorithm == algorithm and r.metric == metric
        ]
        if not matching:
            raise KeyError((algorithm, metric))
        if T is None:
            return max(matching, key=lambda r: r.T)
        for r in matching:
            if r.T == T:
                return r
        raise KeyError((algorithm, metric, T))


def plot_data(report):
    """Per-round median and percentile series, one row per (algorithm,
    metric, statistic) and one column per round.
    """
    if not report.rows:
        raise ValidationError("The report has no rows.")
    rounds = max(r.T for r in report.rows)
    series = {}
    for r in report.rows:
        for stat in ("median", "p5", "p95"):
            key = f"{r.algorithm}/{r.metric}/{stat}"
            series.setdefault(key, [""] * rounds)[r.T - 1] = f"{getattr(r, stat):.6g}"
    header = ["series"] + [str(t) for t in range(1, rounds + 1)]
    return _write_csv(header, [[key] + values for key, values in series.items()])


def _run_rng(config, name, repeat):
    return np.random.default_rng([config.seed, zlib.crc32(name.encode()), repeat])


def _data_density(config, train):
    mode = DiscriminatorMode(config.discriminator)
    if mode is not DiscriminatorMode.ORACLE:
        return None
    if not any(a.needs_discriminator for a in config.algorithms):
        return None
    rng = np.random.default_rng([config.seed, KDE_STREAM])
    density = kde_fit(train, rng=rng, max_cv_points=config.kde_max_cv_points)
    logger.info("data density: %r", density)
    return density


def evaluate_model(model, test, config, rng):
    values = {}
    if "coverage" in config.metrics:
        samples = model.sample(config.model_samples, rng)
        log_density = model.log_density
        if config.coverage_density == "kde":
            log_density = kde_fit(
                samples, rng=rng, max_cv_points=config.kde_max_cv_points
            ).log_density
        values["coverage"] = coverage_c(log_density, samples, test)
    if "likelihood" in config.metrics:
        values["likelihood"] = log_likelihood_l(model.log_density, test)
    return values


def _run_repeat(config, algorithm, repeat, dataset, data_density):
    rng = _run_rng(config, algorithm.name, repeat)
    try:
        history = algorithm.history(
            dataset.train, config.learner, config.discriminator, rng, data_density
        )
        per_round = [evaluate_model(m, dataset.test, config, rng) for m in history]
    except Error as e:
        logger.warning("%s repeat %d failed: %s", algorithm.name, repeat, e)
        return None
    logger.debug("%s repeat %d: %r", algorithm.name, repeat, per_round[-1])
    return per_round


def _row(config, algorithm, t, metric, results):
    values = [r[t - 1][metric] for r in results if r is not None]
    failed = len(results) - len(values)
    if values:
        median = float(np.median(values))
        p5, p95 = (float(v) for v in np.percentile(values, [5, 95]))
    else:
        median = p5 = p95 = float("nan")
    return ReportRow(
        algorithm.name,
        config.dataset.modes,
        t,
        metric,
        median,
        p5,
        p95,
        len(values),
        failed,
        tuple(float(v) for v in values),
    )


def run_experiment(config):
    """Runs every algorithm ``config.repeats`` times and reports the median
    and the 5th and 95th percentiles of each metric after each round.

    Train and test data are drawn once. Each repeat has its own random stream
    derived from the master seed, the algorithm name and the repeat index, so
    the report doesn't depend on ``workers``. Repeats that fail are counted
    and left out of the statistics.
    """
    dataset = generate_toy_dataset(
        config.dataset, np.random.default_rng([config.seed, DATASET_STREAM])
    )
    data_density = _data_density(config, dataset.train)
    jobs = [(a, r) for a in config.algorithms for r in range(config.repeats)]

    def run(job):
        algorithm, repeat = job
        return _run_repeat(config, algorithm, repeat, dataset, data_density)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(job) for job in jobs]

    rows = []
    for i, algorithm in enumerate(config.algorithms):
        results = outcomes[i * config.repeats : (i + 1) * config.repeats]
        for t in range(1, algorithm.rounds + 1):
            for metric in config.metrics:
                rows.append(_row(config, algorithm, t, metric, results))
        logger.info(
            "%s: %d of %d repeats succeeded",
            algorithm.name,
            sum(r is not None for r in results),
            config.repeats,
        )
    return ExperimentReport(tuple(rows))


def single_run(config):
    """One boosting run of the configuration's first ``adagan`` algorithm on
    its training data.
    """
    algorithm = config.algorithm(ADAGAN)
    dataset = generate_toy_dataset(
        config.dataset, np.random.default_rng([config.seed, DATASET_STREAM])
    )
    return run_adagan(
        dataset.train,
        algorithm.T,
        algorithm.schedule,
        config.learner,
        config.discriminator,
        _run_rng(config, algorithm.name, 0),
        data_density=_data_density(config, dataset.train),
    )


def weights_demo(config):
    """One reweighting round: fits a first component to the training data and
    returns, for each example, its coordinates, the discriminator output d,
    the density ratio h(d) and the weight it gets for the second round, as
    CSV.
    """
    try:
        schedule = config.algorithm(ADAGAN).schedule
    except ConfigError:
        schedule = BetaSchedule.one_over_t()
    dataset = generate_toy_dataset(
        config.dataset, np.random.default_rng([config.seed, DATASET_STREAM])
    )
    train = dataset.train
    rng = _run_rng(config, "weights-demo", 0)
    mode = DiscriminatorMode(config.discriminator)
    data_density = None
    if mode is DiscriminatorMode.ORACLE:
        data_density = kde_fit(
            train,
            rng=np.random.default_rng([config.seed, KDE_STREAM]),
            max_cv_points=config.kde_max_cv_points,
        )
    first = GeneratorMixture.single(config.learner.fit(WeightedSample(train), rng))
    disc = fit_discriminator(train, first, mode, rng, data_density=data_density)
    d = disc.predict(train)
    p = np.full(train.shape[0], 1 / train.shape[0])
    beta = schedule.beta_at(2, d, p)
    weights = update_training_weights(d, p, beta)
    h = density_ratio_from_discriminator(d)

    header = [f"x{i}" for i in range(train.shape[1])] + ["d", "h", "weight"]
    rows = (
        [f"{v:.6g}" for v in x] + [f"{di:.6g}", f"{hi:.6g}", f"{wi:.6g}"]
        for x, di, hi, wi in zip(train, d, h, weights)
    )
    return _write_csv(header, rows)
