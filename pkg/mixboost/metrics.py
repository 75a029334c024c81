"""Coverage and likelihood of a model on held-out data, and the kernel density
estimates used when a density has to be estimated from samples.
"""

import numpy as np
from sklearn.model_selection import GridSearchCV, GroupKFold
from sklearn.neighbors import KernelDensity

from mixboost.exceptions import FittingError, StructuralError, ValidationError


LOG_DENSITY_FLOOR = -1e10
COVERAGE_LEVEL = 0.95
MIN_COVERAGE_SAMPLES = 100
DEFAULT_FOLDS = 5
GRID_SIZE = 20
GRID_RANGE = (0.01, 2.0)
KDE_RTOL = 1e-8


def _points(points):
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise StructuralError(f"Points must be a 2-d array, got shape {arr.shape}.")
    return arr


class KdeModel:
    """Gaussian kernel density estimate with an isotropic bandwidth."""

    def __init__(self, anchors, bandwidth):
        if not bandwidth > 0:
            raise ValidationError(f"The bandwidth must be positive, got {bandwidth!r}.")
        self.anchors = _points(anchors)
        self.bandwidth = float(bandwidth)
        self.dim = self.anchors.shape[1]
        self._kde = KernelDensity(
            kernel="gaussian", bandwidth=self.bandwidth, rtol=KDE_RTOL
        ).fit(self.anchors)

    def __repr__(self):
        return f"<KdeModel n={self.anchors.shape[0]} bandwidth={self.bandwidth:.4g}>"

    def log_density(self, points):
        pts = _points(points)
        if pts.shape[1] != self.dim:
            raise StructuralError(
                f"Points have dimension {pts.shape[1]}, the estimate has {self.dim}."
            )
        return self._kde.score_samples(pts)

    def sample(self, count, rng):
        idx = rng.integers(self.anchors.shape[0], size=count)
        noise = rng.normal(scale=self.bandwidth, size=(count, self.dim))
        return self.anchors[idx] + noise


def default_bandwidth_grid(points):
    """Logarithmic grid over [0.01, 2] times the mean per-axis standard
    deviation of ``points``.
    """
    scale = float(np.mean(np.std(_points(points), axis=0)))
    if not scale > 0:
        scale = 1.0
    lo, hi = GRID_RANGE
    return np.logspace(np.log10(lo * scale), np.log10(hi * scale), GRID_SIZE)


def kde_fit(
    points, bandwidth_grid=None, folds=DEFAULT_FOLDS, rng=None, max_cv_points=None
):
    """Fits a Gaussian KDE to ``points``, picking the bandwidth from
    ``bandwidth_grid`` that maximises the held-out log-likelihood over
    ``folds`` cross-validation folds. Ties go to the larger bandwidth.

    Folds are made of whole groups of identical points, so copies of a point
    are always held out together. ``max_cv_points`` limits the number of
    distinct points used for the cross-validation; the returned estimate is
    built on all points.
    """
    pts = _points(points)
    rng = np.random.default_rng() if rng is None else rng
    if folds < 2:
        raise ValidationError(f"At least 2 folds are needed, got {folds}.")
    if max_cv_points is not None and max_cv_points < folds:
        raise ValidationError(
            f"max_cv_points must be at least the number of folds, got "
            f"{max_cv_points}."
        )
    grid = default_bandwidth_grid(pts) if bandwidth_grid is None else bandwidth_grid
    grid = np.sort(np.asarray(grid, dtype=float))[::-1]
    if grid.size == 0 or not np.all(grid > 0):
        raise ValidationError("The bandwidth grid must be non-empty and positive.")

    unique, inverse = np.unique(pts, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    if unique.shape[0] < folds:
        raise ValidationError(
            f"Cross-validation over {folds} folds needs at least {folds} distinct "
            f"points, got {unique.shape[0]}."
        )
    # relabelled at random so that GroupKFold breaks its ties by rng
    groups = rng.permutation(unique.shape[0])[inverse]
    rows = np.arange(pts.shape[0])
    if max_cv_points is not None and unique.shape[0] > max_cv_points:
        kept = np.zeros(unique.shape[0], dtype=bool)
        kept[rng.choice(unique.shape[0], size=max_cv_points, replace=False)] = True
        rows = rows[kept[inverse]]

    search = GridSearchCV(
        KernelDensity(kernel="gaussian", rtol=KDE_RTOL),
        {"bandwidth": grid},
        cv=GroupKFold(n_splits=folds),
        refit=False,
        error_score="raise",
    )
    try:
        search.fit(pts[rows], groups=groups[rows])
    except ValueError as e:
        raise FittingError(f"The bandwidth search failed: {e}") from e
    if not np.isfinite(search.best_score_):
        raise FittingError(
            "Every bandwidth gives a held-out log-density of -inf; try a grid with "
            "larger bandwidths."
        )
    return KdeModel(pts, search.best_params_["bandwidth"])


def coverage_c(model_log_density, model_samples, data_samples):
    """Fraction of the data lying in the model's 95% highest-density region.

    The region is {x : p_model(x) >= t}, t being the 5th percentile of the
    model density over ``model_samples``. The percentile is taken as an actual
    sample value, so the result only depends on the ordering of the densities.
    """
    model_samples, data_samples = _points(model_samples), _points(data_samples)
    if model_samples.shape[0] < MIN_COVERAGE_SAMPLES:
        raise ValidationError(
            f"At least {MIN_COVERAGE_SAMPLES} model samples are needed to place "
            f"the threshold, got {model_samples.shape[0]}."
        )
    if data_samples.shape[0] == 0:
        raise ValidationError("The data can't be empty.")
    threshold = np.percentile(
        np.asarray(model_log_density(model_samples), dtype=float),
        100 * (1 - COVERAGE_LEVEL),
        method="lower",
    )
    return float(np.mean(np.asarray(model_log_density(data_samples)) >= threshold))


def log_likelihood_l(model_log_density, data_samples):
    """Mean log-density of the data under the model, each value floored at
    ``LOG_DENSITY_FLOOR``.
    """
    data_samples = _points(data_samples)
    if data_samples.shape[0] == 0:
        raise ValidationError("The data can't be empty.")
    values = np.asarray(model_log_density(data_samples), dtype=float)
    return float(np.mean(np.maximum(values, LOG_DENSITY_FLOOR)))
