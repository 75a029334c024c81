"""Exact optimal mixture components on finite supports.

Given the data distribution P_d, the current model P_g and a mixture weight
β, the component Q minimising D_f((1 - β)P_g + βQ ‖ P_d) has masses

    Q*_i = (λ* P_d_i - (1 - β) P_g_i)_+ / β

and the component minimising the surrogate D_f(P_g ‖ (P_d - βQ) / (1 - β)) has

    Q†_i = (P_d_i - λ† (1 - β) P_g_i)_+ / β,

the multipliers being fixed by normalisation. Neither depends on f. Both
normalisation equations are piecewise linear in the multiplier, so they are
inverted exactly over the sorted breakpoints.
"""

from dataclasses import dataclass
from math import ceil, inf, log
from typing import Optional, Tuple

import numpy as np

from mixboost.divergence import (
    COMPUTED_ATOL,
    DiscreteDistribution,
    check_same_support,
    f_divergence,
)
from mixboost.exceptions import DomainError, InfeasibleError, ValidationError


BISECTION_TOL = 1e-12


def _check_beta(beta, allow_one=True):
    upper_ok = beta <= 1 if allow_one else beta < 1
    if not (0 < beta and upper_ok):
        interval = "(0, 1]" if allow_one else "(0, 1)"
        raise DomainError(f"beta must be in {interval}, got {beta!r}.")


@dataclass(frozen=True)
class OptimalTargetResult:
    lam: float
    target: DiscreteDistribution
    active_set: Tuple[int, ...]


def g_lambda(lam, beta, p_d, p_g):
    """g(λ) = Σ_i (λ P_d_i - (1 - β) P_g_i)_+, the mass of the unnormalised
    optimal component at multiplier λ.
    """
    _check_beta(beta)
    check_same_support(p_d, p_g)
    return float(np.maximum(lam * p_d.masses - (1 - beta) * p_g.masses, 0.0).sum())


def _target(masses):
    target = DiscreteDistribution(masses, atol=COMPUTED_ATOL)
    return target, tuple(int(i) for i in np.flatnonzero(masses > 0))


def solve_lambda_star(beta, p_d, p_g):
    _check_beta(beta)
    check_same_support(p_d, p_g)
    pd, c = p_d.masses, (1 - beta) * p_g.masses

    if np.all(c <= pd):
        lam = 1.0
    else:
        # atoms outside the support of P_d never enter g
        charged = pd > 0
        breaks = c[charged] / pd[charged]
        order = np.argsort(breaks, kind="stable")
        breaks = breaks[order]
        pd_sorted, c_sorted = pd[charged][order], c[charged][order]
        cum_pd, cum_c = np.cumsum(pd_sorted), np.cumsum(c_sorted)
        g_at_breaks = breaks * cum_pd - cum_c
        k = int(np.searchsorted(g_at_breaks, beta, side="left"))
        lam = float((beta + cum_c[k - 1]) / cum_pd[k - 1])

    target, active = _target(np.maximum(lam * pd - c, 0.0) / beta)
    return OptimalTargetResult(lam, target, active)


def solve_lambda_star_bisection(beta, p_d, p_g, tol=BISECTION_TOL):
    """λ* by bisection on g(λ) = β over [0, 1]. Kept as an independent check of
    the exact solver.
    """
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g_lambda(mid, beta, p_d, p_g) < beta:
            lo = mid
        else:
            hi = mid
    return hi


def solve_lambda_dagger(beta, p_d, p_g):
    _check_beta(beta)
    check_same_support(p_d, p_g)
    pd, c = p_d.masses, (1 - beta) * p_g.masses

    delta = float(pd[p_g.masses == 0].sum())
    if not delta < beta:
        raise InfeasibleError(delta, beta)

    if np.all(c <= pd):
        lam = 1.0
    else:
        # H(λ) = Δ + Σ_{c_i > 0} (P_d_i - λ c_i)_+ decreases from 1 to Δ
        charged = c > 0
        breaks = pd[charged] / c[charged]
        order = np.argsort(-breaks, kind="stable")
        breaks = breaks[order]
        pd_sorted, c_sorted = pd[charged][order], c[charged][order]
        cum_pd, cum_c = np.cumsum(pd_sorted), np.cumsum(c_sorted)
        h_at_breaks = np.append(delta + cum_pd - breaks * cum_c, 1.0)
        j = int(np.searchsorted(h_at_breaks, beta, side="left"))
        lam = float((delta + cum_pd[j - 1] - beta) / cum_c[j - 1])

    target, active = _target(np.maximum(pd - lam * c, 0.0) / beta)
    return OptimalTargetResult(lam, target, active)


@dataclass(frozen=True)
class GreedyStep:
    step: int
    lam: float
    divergence: float
    model: DiscreteDistribution


@dataclass(frozen=True)
class GreedyTrace:
    steps: Tuple[GreedyStep, ...]

    @property
    def divergences(self):
        return np.array([s.divergence for s in self.steps])

    @property
    def lambdas(self):
        return np.array([s.lam for s in self.steps])

    def updates_to_match(self, atol=1e-12):
        """Number of updates after which the model's divergence first drops to
        ``atol`` or below, or None if it never does within the trace.
        """
        for s in self.steps:
            if s.divergence <= atol:
                return s.step - 1
        return None


def greedy_optimal_iteration(p_d, p_1, beta, steps, kind):
    """Starting from P^1 = p_1, applies ``steps`` updates
    P^{t+1} = (1 - β)P^t + βQ*_β(P^t). Record t holds P^t, its divergence to
    P_d and the λ* of the update applied to P^t.
    """
    _check_beta(beta, allow_one=False)
    check_same_support(p_d, p_1)
    if steps < 0:
        raise ValidationError(f"steps must be nonnegative, got {steps}.")

    records = []
    model = p_1
    for t in range(1, steps + 2):
        lam = solve_lambda_star(beta, p_d, model).lam
        records.append(GreedyStep(t, lam, f_divergence(kind, model, p_d), model))
        # (1 - β)P^t + βQ* equals max(λ* P_d, (1 - β)P^t) atomwise
        model = DiscreteDistribution(
            np.maximum(lam * p_d.masses, (1 - beta) * model.masses), atol=COMPUTED_ATOL
        )
    return GreedyTrace(tuple(records))


def finite_convergence_bound(p_d, p_1, beta) -> Optional[int]:
    """Upper bound on the number of greedy updates needed to reach P_d exactly,
    or None when p_1 charges an atom outside the support of P_d.
    """
    _check_beta(beta)
    check_same_support(p_d, p_1)
    pd, p1 = p_d.masses, p_1.masses
    if np.any((p1 > 0) & (pd == 0)):
        return None
    if beta == 1:
        return 1
    charged = pd > 0
    m = float(np.max((1 - beta) * p1[charged] / pd[charged]))
    return int(ceil(1 + log(max(m, 1.0)) / -log(1 - beta)))


def lambda_star_empirical(beta, p, h_values):
    """λ* for an empirical distribution with weights ``p`` and density ratios
    ``h_values`` = dP_g/dP_d at each example.

    Returns (λ*, k), k being the number of examples with positive weight.
    λ* satisfies

        λ* = β / Σ_I p_i * (1 + (1 - β) / β * Σ_I p_i h_i)

    with I the k examples of smallest h. Examples with equal h enter I
    together.
    """
    _check_beta(beta)
    p = np.asarray(p, dtype=float)
    h = np.asarray(h_values, dtype=float)
    if p.shape != h.shape or p.ndim != 1:
        raise ValidationError(
            f"p and h must be vectors of the same length, got shapes {p.shape} "
            f"and {h.shape}."
        )
    if np.isnan(p).any() or (p < 0).any():
        raise ValidationError("The example weights must be nonnegative.")
    if np.isnan(h).any() or (h < 0).any() or np.isinf(h).any():
        raise ValidationError("The density ratios must be finite and nonnegative.")

    charged = p > 0
    if not charged.any():
        raise ValidationError("At least one example weight must be positive.")
    p, h = p[charged], h[charged]

    order = np.argsort(h, kind="stable")
    p, h = p[order], h[order]
    cum_p = np.cumsum(p)
    cum_ph = np.cumsum(p * h)
    lams = (beta + (1 - beta) * cum_ph) / cum_p

    upper = np.empty_like(h)
    upper[:-1] = (1 - beta) * h[1:]
    upper[-1] = inf
    # only the ends of blocks of tied h are candidates
    block_end = np.append(h[:-1] < h[1:], True)
    stop = np.flatnonzero(block_end & (lams <= upper))
    k = int(stop[0]) + 1
    return float(lams[k - 1]), k
