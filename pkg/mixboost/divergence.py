from dataclasses import dataclass
from enum import Enum
from math import inf, isinf
from typing import Callable

import numpy as np
from scipy.special import xlogy

from mixboost.exceptions import StructuralError, ValidationError


NORMALIZATION_ATOL = 1e-12
COMPUTED_ATOL = 1e-10
TOLERANCE = 1e-9
DISCRIMINATOR_EPS = 1e-6


class DiscreteDistribution:
    """A probability vector over an indexed finite support.

    Two distributions are comparable when they have the same number of atoms;
    atom ``i`` of one is atom ``i`` of the other. The masses are stored in a
    read-only array.
    """

    __slots__ = ("_masses",)

    def __init__(self, masses, atol=NORMALIZATION_ATOL):
        arr = np.array(masses, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise StructuralError(
                f"A distribution needs a non-empty vector of masses, got shape "
                f"{arr.shape}."
            )
        if np.isnan(arr).any():
            raise ValidationError("A distribution can't have NaN masses.")
        if (arr < 0).any():
            raise ValidationError("A distribution can't have negative masses.")
        total = arr.sum()
        if not abs(total - 1.0) <= atol:
            raise ValidationError(
                f"The masses of a distribution must sum to 1, got {total!r}."
            )
        arr.setflags(write=False)
        self._masses = arr

    @classmethod
    def from_weights(cls, weights):
        arr = np.array(weights, dtype=float)
        if np.isnan(arr).any():
            raise ValidationError("Weights can't be NaN.")
        if (arr < 0).any():
            raise ValidationError("Weights can't be negative.")
        total = arr.sum()
        if not 0 < total < inf:
            raise ValidationError(
                f"Weights must have a finite positive sum, got {total!r}."
            )
        return cls(arr / total, atol=COMPUTED_ATOL)

    @classmethod
    def uniform(cls, size):
        return cls(np.full(size, 1.0 / size), atol=COMPUTED_ATOL)

    @property
    def masses(self):
        return self._masses

    @property
    def support(self):
        return np.flatnonzero(self._masses > 0)

    def __len__(self):
        return self._masses.size

    def __getitem__(self, idx):
        return self._masses[idx]

    def __repr__(self):
        return f"<DiscreteDistribution {np.array2string(self._masses, precision=6)}>"

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return np.array_equal(self._masses, other._masses)

    def __hash__(self):
        return hash(self._masses.tobytes())

    def isclose(self, other, atol=TOLERANCE):
        check_same_support(self, other)
        return bool(np.all(np.abs(self._masses - other._masses) <= atol))

    def mix(self, other, beta):
        """Returns (1 - beta) * self + beta * other."""
        check_same_support(self, other)
        return DiscreteDistribution(
            (1 - beta) * self._masses + beta * other._masses, atol=COMPUTED_ATOL
        )


def check_same_support(*dists):
    sizes = {len(d) for d in dists}
    if len(sizes) != 1:
        raise StructuralError(
            f"The distributions must share a support, got sizes {sorted(sizes)}."
        )


@dataclass(frozen=True)
class FFunction:
    """A convex generator f with f(1) = 0, together with the boundary values
    used when one of the two densities vanishes: f(0) and f°(0), where
    f°(u) = u f(1/u). Either may be infinite.
    """

    name: str
    f: Callable
    at_zero: float
    conjugate_at_zero: float
    slope_at_one: float

    def __call__(self, u):
        return self.f(np.asarray(u, dtype=float))

    def normalized(self):
        """f₀(u) = f(u) - (u - 1) f'(1), which is nonnegative and gives the same
        divergence as f.
        """
        f, slope = self.f, self.slope_at_one
        return FFunction(
            f"{self.name}_0",
            lambda u: f(u) - slope * (u - 1),
            self.at_zero + slope,
            self.conjugate_at_zero - slope,
            0.0,
        )

    def conjugate(self):
        """f°(u) = u f(1/u), so that D_f(P‖Q) = D_f°(Q‖P)."""
        f = self.f
        return FFunction(
            f"{self.name}°",
            lambda u: u * f(1 / u),
            self.conjugate_at_zero,
            self.at_zero,
            -self.slope_at_one,
        )


def _kl(u):
    return xlogy(u, u)


def _reverse_kl(u):
    return -np.log(u)


def _js(u):
    return xlogy(u, u) - xlogy(u + 1, (u + 1) / 2)


def _tv(u):
    return np.abs(u - 1)


def _hellinger(u):
    return (np.sqrt(u) - 1) ** 2


class FDivergenceKind(Enum):
    KULLBACK_LEIBLER = "kl"
    REVERSE_KULLBACK_LEIBLER = "reverse_kl"
    JENSEN_SHANNON = "js"
    TOTAL_VARIATION = "tv"
    SQUARED_HELLINGER = "hellinger"

    @property
    def function(self):
        return _F_FUNCTIONS[self]

    @property
    def at_zero(self):
        return self.function.at_zero

    @property
    def conjugate_at_zero(self):
        return self.function.conjugate_at_zero

    @property
    def is_hilbertian(self):
        """True when the square root of the divergence is a metric."""
        return self in HILBERTIAN_KINDS

    def f(self, u):
        return self.function(u)

    def f0(self, u):
        return self.function.normalized()(u)

    def conjugate(self, u):
        return self.function.conjugate()(u)


_LN2 = float(np.log(2))

_F_FUNCTIONS = {
    FDivergenceKind.KULLBACK_LEIBLER: FFunction("kl", _kl, 0.0, inf, 1.0),
    FDivergenceKind.REVERSE_KULLBACK_LEIBLER: FFunction(
        "reverse_kl", _reverse_kl, inf, 0.0, -1.0
    ),
    FDivergenceKind.JENSEN_SHANNON: FFunction("js", _js, _LN2, _LN2, 0.0),
    # f is not differentiable at 1; 0 is a subgradient
    FDivergenceKind.TOTAL_VARIATION: FFunction("tv", _tv, 1.0, 1.0, 0.0),
    FDivergenceKind.SQUARED_HELLINGER: FFunction(
        "hellinger", _hellinger, 1.0, 1.0, 0.0
    ),
}

HILBERTIAN_KINDS = frozenset(
    (
        FDivergenceKind.JENSEN_SHANNON,
        FDivergenceKind.TOTAL_VARIATION,
        FDivergenceKind.SQUARED_HELLINGER,
    )
)


def _as_function(kind):
    if isinstance(kind, FDivergenceKind):
        return kind.function
    if isinstance(kind, FFunction):
        return kind
    raise ValidationError(f"Expected an FDivergenceKind or FFunction, got {kind!r}.")


def _boundary(constant, mass):
    # 0 * inf is taken to be 0
    if isinf(constant):
        return np.where(mass > 0, constant, 0.0)
    return constant * mass


def divergence_rows(kind, q, p):
    """Row-wise D_f(q‖p) for 2-d arrays of masses (or a 1-d array broadcast
    against a 2-d one). No validation is done on the rows.
    """
    ff = _as_function(kind)
    q, p = np.broadcast_arrays(np.atleast_2d(q), np.atleast_2d(p))
    both = (q > 0) & (p > 0)
    ratio = np.divide(q, p, out=np.ones_like(q), where=both)
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.where(both, p * ff(ratio), 0.0).sum(axis=1)
    q_missing = np.where(q == 0, p, 0.0).sum(axis=1)
    p_missing = np.where(p == 0, q, 0.0).sum(axis=1)
    total = inner + _boundary(ff.at_zero, q_missing)
    total = total + _boundary(ff.conjugate_at_zero, p_missing)
    return np.maximum(total, 0.0)


def f_divergence(kind, q, p):
    """D_f(q‖p), with zero masses handled through the extended-value
    convention: atoms where only p charges contribute f(0) times their mass,
    atoms where only q charges contribute f°(0) times theirs. The result may
    be ``inf``.
    """
    check_same_support(q, p)
    return float(divergence_rows(kind, q.masses, p.masses)[0])


def js_decomposition_check(p, q):
    """Returns the Jensen-Shannon divergence computed directly and as
    KL(Q‖M) + KL(P‖M) with M = (P + Q) / 2.
    """
    direct = f_divergence(FDivergenceKind.JENSEN_SHANNON, p, q)
    m = p.mix(q, 0.5)
    kl = FDivergenceKind.KULLBACK_LEIBLER
    return direct, f_divergence(kl, q, m) + f_divergence(kl, p, m)


def clamp_discriminator(d, eps=DISCRIMINATOR_EPS):
    d = np.asarray(d, dtype=float)
    if np.isnan(d).any():
        raise ValidationError("Discriminator outputs can't be NaN.")
    return np.clip(d, eps, 1 - eps)


def density_ratio_from_discriminator(d, eps=DISCRIMINATOR_EPS):
    """Maps the output of a Jensen-Shannon discriminator to the density ratio
    dP_model / dP_data, h(d) = (1 - d) / d, after clamping d to [eps, 1 - eps].
    Accepts a scalar or an array.
    """
    d = clamp_discriminator(d, eps)
    h = (1 - d) / d
    if h.ndim == 0:
        return float(h)
    return h
