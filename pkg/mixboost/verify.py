"""Randomised checks of the divergence and discrete-theory invariants.

Every property draws its own instances from ``numpy.random.default_rng([seed,
index])`` so the report doesn't depend on the order, or the thread, in which
properties run. A property's violation on an instance is the signed amount by
which the inequality it asserts is exceeded; it fails when that amount is
larger than the property's tolerance.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import isinf, sqrt
from typing import Optional, Tuple

import numpy as np

from mixboost.divergence import (
    COMPUTED_ATOL,
    HILBERTIAN_KINDS,
    TOLERANCE,
    DiscreteDistribution,
    FDivergenceKind,
    density_ratio_from_discriminator,
    divergence_rows,
    f_divergence,
    js_decomposition_check,
)
from mixboost.exceptions import ValidationError
from mixboost.theory import (
    finite_convergence_bound,
    g_lambda,
    greedy_optimal_iteration,
    lambda_star_empirical,
    solve_lambda_dagger,
    solve_lambda_star,
    solve_lambda_star_bisection,
)


logger = logging.getLogger(__name__)

DEFAULT_CANDIDATES = 10_000
ZERO_PROBABILITY = 0.25
BETA_RANGE = (0.05, 0.95)
CROSS_CHECK_TOLERANCE = 1e-10
DERIVATIVE_TOLERANCE = 1e-6
DERIVATIVE_STEP = 1e-7
GREEDY_STEPS = 20
GREEDY_BETAS = (0.1, 0.3, 0.5)
MATCH_ATOL = 1e-12
MAX_ATTEMPTS = 50

_KINDS = tuple(FDivergenceKind)
_HILBERTIAN = tuple(k for k in _KINDS if k in HILBERTIAN_KINDS)


def _excess(lhs, rhs):
    """lhs - rhs, with +inf against +inf counted as 0."""
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    with np.errstate(invalid="ignore"):
        return np.where(np.isposinf(lhs) & np.isposinf(rhs), 0.0, lhs - rhs)


def _gap(a, b):
    if isinf(a) and isinf(b) and a == b:
        return 0.0
    return abs(a - b)


def _scale(weight, value):
    # 0 * inf is taken to be 0
    return 0.0 if weight == 0 else weight * value


def _random_rows(rng, count, size, zero_probability=ZERO_PROBABILITY):
    """Rows drawn uniformly from the simplex, then with each atom zeroed with
    probability ``zero_probability`` (one atom per row is always kept).
    """
    raw = rng.exponential(size=(count, size))
    zero = rng.random((count, size)) < zero_probability
    zero[np.arange(count), rng.integers(size, size=count)] = False
    raw[zero] = 0.0
    return raw / raw.sum(axis=1, keepdims=True)


def _rows_on(rng, count, mask):
    rows = np.zeros((count, mask.size))
    rows[:, mask] = _random_rows(rng, count, int(mask.sum()))
    return rows


def _distribution(masses):
    return DiscreteDistribution(masses, atol=COMPUTED_ATOL)


def _random_distribution(rng, size):
    return _distribution(_random_rows(rng, 1, size)[0])


def _size(rng, max_support):
    return int(rng.integers(2, max_support + 1))


def _kind(rng, kinds=_KINDS):
    return kinds[int(rng.integers(len(kinds)))]


def _beta(rng):
    return float(rng.uniform(*BETA_RANGE))


def _instance(kind=None, beta=None, **dists):
    doc = {name: d.masses.tolist() for name, d in dists.items()}
    if kind is not None:
        doc["kind"] = kind.value
    if beta is not None:
        doc["beta"] = beta
    return doc


def _pair_instance(rng, max_support):
    size = _size(rng, max_support)
    return _random_distribution(rng, size), _random_distribution(rng, size)


def _feasible_instance(rng, max_support):
    """P_d, P_g and a β in (Δ, 1), Δ being the data mass the model misses."""
    while True:
        p_d, p_g = _pair_instance(rng, max_support)
        delta = float(p_d.masses[p_g.masses == 0].sum())
        if delta < 0.9:
            break
    beta = delta + (1 - delta) * float(rng.uniform(*BETA_RANGE))
    return p_d, p_g, beta


def _mixture_rows(p_g, rows, beta):
    return (1 - beta) * p_g.masses + beta * rows


def _near(rng, center, rows):
    s = 10 ** rng.uniform(-6, -1, size=(rows.shape[0], 1))
    return (1 - s) * center + s * rows


def _star_candidates(rng, count, size, center):
    local = count // 4
    rows = _random_rows(rng, count - local, size)
    return np.vstack([rows, _near(rng, center, _random_rows(rng, local, size))])


def _dagger_candidates(rng, count, p_d, beta, center):
    """Distributions Q with βQ <= P_d: random draws on the support of P_d
    shrunk toward P_d just enough, plus points near ``center``.
    """
    pd = p_d.masses
    rows = _rows_on(rng, count, pd > 0)
    excess = rows - pd
    with np.errstate(divide="ignore", invalid="ignore"):
        limits = np.where(excess > 0, (1 - beta) * pd / (beta * excess), np.inf)
    s = np.minimum(limits.min(axis=1), 1.0) * rng.random(count)
    feasible = (1 - s[:, None]) * pd + s[:, None] * rows
    local = count // 4
    return np.vstack([feasible[local:], _near(rng, center, feasible[:local])])


def _surrogate_rows(p_d, rows, beta):
    return np.maximum((p_d.masses - beta * rows) / (1 - beta), 0.0)


def _check_nonnegative(rng, max_support, candidates):
    q, p = _pair_instance(rng, max_support)
    kind = _kind(rng)
    violation = max(-f_divergence(kind, q, p), f_divergence(kind, p, p))
    return violation, _instance(kind, q=q, p=p)


def _check_normalized_identity(rng, max_support, candidates):
    q, p = _pair_instance(rng, max_support)
    kind = _kind(rng)
    f0 = kind.function.normalized()
    normalized = float(divergence_rows(f0, q.masses, p.masses)[0])
    return _gap(f_divergence(kind, q, p), normalized), _instance(kind, q=q, p=p)


def _check_conjugate_identity(rng, max_support, candidates):
    q, p = _pair_instance(rng, max_support)
    kind = _kind(rng)
    swapped = float(divergence_rows(kind.function.conjugate(), p.masses, q.masses)[0])
    return _gap(f_divergence(kind, q, p), swapped), _instance(kind, q=q, p=p)


def _check_joint_convexity(rng, max_support, candidates):
    size = _size(rng, max_support)
    q1, q2, p1, p2 = (_random_distribution(rng, size) for _ in range(4))
    kind = _kind(rng)
    t = float(rng.random())
    lhs = f_divergence(kind, q1.mix(q2, 1 - t), p1.mix(p2, 1 - t))
    rhs = _scale(t, f_divergence(kind, q1, p1)) + _scale(
        1 - t, f_divergence(kind, q2, p2)
    )
    return float(_excess(lhs, rhs)), _instance(kind, q1=q1, q2=q2, p1=p1, p2=p2)


def _check_hilbertian_triangle(rng, max_support, candidates):
    size = _size(rng, max_support)
    p, q, r = (_random_distribution(rng, size) for _ in range(3))
    kind = _kind(rng, _HILBERTIAN)
    lhs = sqrt(f_divergence(kind, p, q))
    rhs = sqrt(f_divergence(kind, p, r)) + sqrt(f_divergence(kind, r, q))
    return lhs - rhs, _instance(kind, p=p, q=q, r=r)


def _check_js_decomposition(rng, max_support, candidates):
    p, q = _pair_instance(rng, max_support)
    direct, decomposed = js_decomposition_check(p, q)
    return abs(direct - decomposed), _instance(p=p, q=q)


def _check_ratio_map_monotone(rng, max_support, candidates):
    d = np.sort(rng.uniform(1e-6, 1 - 1e-6, size=64))
    h = density_ratio_from_discriminator(d)
    at_half = density_ratio_from_discriminator(0.5)
    violation = max(float(np.max(np.diff(h))), abs(at_half - 1))
    return violation, {"d": d.tolist()}


def _star_violation(rng, kind, p_d, p_g, beta, target, candidates):
    best = f_divergence(kind, p_g.mix(target, beta), p_d)
    rows = _star_candidates(rng, candidates, len(p_d), target.masses)
    values = divergence_rows(kind, _mixture_rows(p_g, rows, beta), p_d.masses)
    return float(_excess(best, values.min()))


def _check_lambda_star_optimality(rng, max_support, candidates):
    p_d, p_g = _pair_instance(rng, max_support)
    beta, kind = _beta(rng), _kind(rng)
    target = solve_lambda_star(beta, p_d, p_g).target
    violation = _star_violation(rng, kind, p_d, p_g, beta, target, candidates)
    return violation, _instance(kind, beta, p_d=p_d, p_g=p_g)


def _check_f_independence(rng, max_support, candidates):
    p_d, p_g = _pair_instance(rng, max_support)
    beta = _beta(rng)
    result = solve_lambda_star(beta, p_d, p_g)
    violation = max(
        _star_violation(rng, kind, p_d, p_g, beta, result.target, candidates)
        for kind in _KINDS
    )
    return violation, _instance(beta=beta, p_d=p_d, p_g=p_g)


def _check_lambda_dagger_optimality(rng, max_support, candidates):
    p_d, p_g, beta = _feasible_instance(rng, max_support)
    kind = _kind(rng)
    target = solve_lambda_dagger(beta, p_d, p_g).target
    best = float(
        divergence_rows(kind, p_g.masses, _surrogate_rows(p_d, target.masses, beta))[0]
    )
    rows = _dagger_candidates(rng, candidates, p_d, beta, target.masses)
    values = divergence_rows(kind, p_g.masses, _surrogate_rows(p_d, rows, beta))
    return float(_excess(best, values.min())), _instance(kind, beta, p_d=p_d, p_g=p_g)


def _check_improvement_bound(rng, max_support, candidates):
    p_d, p_g, beta = _feasible_instance(rng, max_support)
    kind = _kind(rng)
    star = solve_lambda_star(beta, p_d, p_g).target
    dagger = solve_lambda_dagger(beta, p_d, p_g).target
    base = f_divergence(kind, p_g, p_d)
    at_star = f_divergence(kind, p_g.mix(star, beta), p_d)
    at_data = f_divergence(kind, p_g.mix(p_d, beta), p_d)
    surrogate = float(
        divergence_rows(kind, p_g.masses, _surrogate_rows(p_d, dagger.masses, beta))[0]
    )
    at_dagger = f_divergence(kind, p_g.mix(dagger, beta), p_d)
    violation = max(
        float(_excess(at_star, at_data)),
        float(_excess(at_data, _scale(1 - beta, base))),
        float(_excess(surrogate, base)),
        float(_excess(at_dagger, _scale(1 - beta, base))),
    )
    return violation, _instance(kind, beta, p_d=p_d, p_g=p_g)


def _check_refined_m_bound(rng, max_support, candidates):
    size = _size(rng, max_support)
    p_d = _random_distribution(rng, size)
    p_g = _distribution(_rows_on(rng, 1, p_d.masses > 0)[0])
    beta, kind = _beta(rng), _kind(rng)
    charged = p_d.masses > 0
    ratio = float(np.max((1 - beta) * p_g.masses[charged] / p_d.masses[charged]))
    m = ratio if ratio > 1 else 1.5
    result = solve_lambda_star(beta, p_d, p_g)
    f0 = kind.function.normalized()
    bound = float(f0(result.lam)) + float(f0(m)) * (1 - result.lam) / (m - 1)
    value = f_divergence(kind, p_g.mix(result.target, beta), p_d)
    instance = _instance(kind, beta, p_d=p_d, p_g=p_g)
    instance["M"] = m
    return value - bound, instance


def _check_lambda_one_equivalence(rng, max_support, candidates):
    p_d, p_g = _pair_instance(rng, max_support)
    # a β close to 1 makes λ* = 1 common
    beta = float(rng.choice([_beta(rng), 1 - 10 ** rng.uniform(-3, -0.5)]))
    kind = _kind(rng)
    result = solve_lambda_star(beta, p_d, p_g)
    value = f_divergence(kind, p_g.mix(result.target, beta), p_d)
    at_one = result.lam == 1.0
    dominated = bool(np.all((1 - beta) * p_g.masses <= p_d.masses))
    if at_one:
        violation = value
    else:
        violation = (1 - result.lam) if value == 0 else -value
    if dominated != at_one:
        violation = max(violation, 1.0)
    return violation, _instance(kind, beta, p_d=p_d, p_g=p_g)


def _check_solver_cross_check(rng, max_support, candidates):
    p_d, p_g = _pair_instance(rng, max_support)
    beta = _beta(rng)
    exact = solve_lambda_star(beta, p_d, p_g).lam
    bisected = solve_lambda_star_bisection(beta, p_d, p_g)
    charged = p_d.masses > 0
    h = p_g.masses[charged] / p_d.masses[charged]
    empirical, _ = lambda_star_empirical(beta, p_d.masses[charged], h)
    violation = max(abs(empirical - exact), abs(bisected - exact))
    return violation, _instance(beta=beta, p_d=p_d, p_g=p_g)


def _check_g_right_derivative(rng, max_support, candidates):
    p_d, p_g = _pair_instance(rng, max_support)
    beta = _beta(rng)
    pd, c = p_d.masses, (1 - beta) * p_g.masses
    breaks = c[pd > 0] / pd[pd > 0]
    for _ in range(MAX_ATTEMPTS):
        lam = float(rng.uniform(0, 1.5))
        if np.min(np.abs(breaks - lam)) > 1e-3:
            break
    else:
        return None
    estimate = (
        g_lambda(lam + DERIVATIVE_STEP, beta, p_d, p_g) - g_lambda(lam, beta, p_d, p_g)
    ) / DERIVATIVE_STEP
    expected = float(pd[lam * pd >= c].sum())
    instance = _instance(beta=beta, p_d=p_d, p_g=p_g)
    instance["lambda"] = lam
    return abs(estimate - expected), instance


def _check_lambda_relations(rng, max_support, candidates):
    p_d, p_g, beta = _feasible_instance(rng, max_support)
    star = solve_lambda_star(beta, p_d, p_g).lam
    dagger = solve_lambda_dagger(beta, p_d, p_g).lam
    violation = max(star - dagger, 1 - star * dagger)
    return violation, _instance(beta=beta, p_d=p_d, p_g=p_g)


def _check_mixture_upper_bounds(rng, max_support, candidates):
    p_d, p_g, beta = _feasible_instance(rng, max_support)
    kind = _kind(rng)
    q = _random_distribution(rng, len(p_d))
    mixed = f_divergence(kind, p_g.mix(q, beta), p_d)

    dagger = solve_lambda_dagger(beta, p_d, p_g).target
    surrogate = float(
        divergence_rows(kind, p_g.masses, _surrogate_rows(p_d, dagger.masses, beta))[0]
    )
    first = _scale(beta, f_divergence(kind, q, dagger)) + _scale(1 - beta, surrogate)
    violation = float(_excess(mixed, first))

    if kind in HILBERTIAN_KINDS:
        star = solve_lambda_star(beta, p_d, p_g).target
        second = (
            sqrt(beta * f_divergence(kind, q, star))
            + sqrt(f_divergence(kind, p_g.mix(star, beta), p_d))
        ) ** 2
        violation = max(violation, mixed - second)
    return violation, _instance(kind, beta, p_d=p_d, p_g=p_g, q=q)


def _check_weak_to_strong(rng, max_support, candidates):
    p_d, p_g, beta = _feasible_instance(rng, max_support)
    kind = _kind(rng)
    base = f_divergence(kind, p_g, p_d)
    if not 0 < base < float("inf"):
        return None

    def near(target):
        s = 10 ** rng.uniform(-4, 0)
        return target.mix(_random_distribution(rng, len(p_d)), s)

    dagger = solve_lambda_dagger(beta, p_d, p_g).target
    q = near(dagger)
    gamma = f_divergence(kind, q, dagger) / base
    violations = []
    if gamma <= 1:
        mixed = f_divergence(kind, p_g.mix(q, beta), p_d)
        violations.append(mixed - (1 - beta * (1 - gamma)) * base)

    if kind in HILBERTIAN_KINDS:
        star = solve_lambda_star(beta, p_d, p_g).target
        q = near(star)
        gamma = f_divergence(kind, q, star) / base
        if gamma <= 1:
            mixed = f_divergence(kind, p_g.mix(q, beta), p_d)
            violations.append(mixed - (sqrt(gamma * beta) + sqrt(1 - beta)) ** 2 * base)

    if not violations:
        return None
    return max(violations), _instance(kind, beta, p_d=p_d, p_g=p_g)


def _check_exponential_rate(rng, max_support, candidates):
    p_d, p_1 = _pair_instance(rng, max_support)
    beta = float(rng.choice(GREEDY_BETAS))
    kind = _kind(rng)
    trace = greedy_optimal_iteration(p_d, p_1, beta, GREEDY_STEPS, kind)
    divergences = trace.divergences
    first = divergences[0]
    factors = (1 - beta) ** np.arange(divergences.size)
    bounds = np.where(np.isposinf(first), np.inf, factors * first)
    violation = float(np.max(_excess(divergences, bounds)))
    return violation, _instance(kind, beta, p_d=p_d, p_1=p_1)


def _outside_mass_violation(p_d, p_1, beta, trace):
    """Relative gap between the mass each step keeps outside the support of
    P_d and (1 - β)^(t-1) p_1 there; 1.0 once any of it reaches zero.
    """
    outside = (p_d.masses == 0) & (p_1.masses > 0)
    initial = p_1.masses[outside]
    worst = 0.0
    for s in trace.steps:
        mass = s.model.masses[outside]
        if np.any(mass <= 0):
            return 1.0
        expected = (1 - beta) ** (s.step - 1) * initial
        worst = max(worst, float(np.max(np.abs(mass - expected) / expected)))
    return worst


def finite_convergence_violation(p_d, p_1, beta, kind):
    """With a finite bound, the number of greedy updates needed beyond it
    (``inf`` if the model never matches). Without one, the model can't match
    P_d, and the check is that the mass outside its support only shrinks
    geometrically.
    """
    bound = finite_convergence_bound(p_d, p_1, beta)
    steps = GREEDY_STEPS if bound is None else bound + 1
    trace = greedy_optimal_iteration(p_d, p_1, beta, steps, kind)
    if bound is None:
        return _outside_mass_violation(p_d, p_1, beta, trace)
    updates = trace.updates_to_match(MATCH_ATOL)
    if updates is None:
        return float("inf")
    return float(updates - bound)


def _check_finite_convergence(rng, max_support, candidates):
    p_d, p_1 = _pair_instance(rng, max_support)
    beta, kind = _beta(rng), _kind(rng)
    violation = finite_convergence_violation(p_d, p_1, beta, kind)
    return violation, _instance(kind, beta, p_d=p_d, p_1=p_1)


@dataclass(frozen=True)
class Property:
    property_id: str
    check: object
    tolerance: float = TOLERANCE


PROPERTIES = (
    Property("nonnegative", _check_nonnegative),
    Property("normalized_identity", _check_normalized_identity),
    Property("conjugate_identity", _check_conjugate_identity),
    Property("joint_convexity", _check_joint_convexity),
    Property("hilbertian_triangle", _check_hilbertian_triangle),
    Property("js_decomposition", _check_js_decomposition),
    Property("ratio_map_monotone", _check_ratio_map_monotone),
    Property("lambda_star_optimality", _check_lambda_star_optimality),
    Property("f_independence", _check_f_independence),
    Property("lambda_dagger_optimality", _check_lambda_dagger_optimality),
    Property("improvement_bound", _check_improvement_bound),
    Property("refined_m_bound", _check_refined_m_bound),
    Property("lambda_one_equivalence", _check_lambda_one_equivalence),
    Property("solver_cross_check", _check_solver_cross_check, CROSS_CHECK_TOLERANCE),
    Property("g_right_derivative", _check_g_right_derivative, DERIVATIVE_TOLERANCE),
    Property("lambda_relations", _check_lambda_relations),
    Property("mixture_upper_bounds", _check_mixture_upper_bounds),
    Property("weak_to_strong", _check_weak_to_strong),
    Property("exponential_rate", _check_exponential_rate),
    Property("finite_convergence", _check_finite_convergence),
)


@dataclass(frozen=True)
class PropertyResult:
    property_id: str
    instances: int
    failures: int
    worst_violation: Optional[float]
    tolerance: float
    seed: int
    failing_instance: Optional[dict] = None

    @property
    def passed(self):
        return self.failures == 0

    @property
    def excess(self):
        """Worst violation minus the tolerance; positive exactly when some
        instance failed.
        """
        if self.worst_violation is None:
            return None
        return self.worst_violation - self.tolerance

    def to_dict(self):
        return {
            "property": self.property_id,
            "instances": self.instances,
            "failures": self.failures,
            "worst_violation": self.worst_violation,
            "excess": self.excess,
            "tolerance": self.tolerance,
            "seed": self.seed,
            "failing_instance": self.failing_instance,
        }


@dataclass(frozen=True)
class VerificationReport:
    seed: int
    instances_per_property: int
    max_support: int
    results: Tuple[PropertyResult, ...]

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    @property
    def failures(self):
        return sum(r.failures for r in self.results)

    def to_dict(self):
        return {
            "seed": self.seed,
            "instances_per_property": self.instances_per_property,
            "max_support": self.max_support,
            "passed": self.passed,
            "properties": [r.to_dict() for r in self.results],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _run_property(index, prop, seed, instances, max_support, candidates):
    rng = np.random.default_rng([seed, index])
    checked, failures = 0, 0
    worst, failing, failing_violation = None, None, None
    attempts = 0
    while checked < instances and attempts < instances * MAX_ATTEMPTS:
        attempts += 1
        outcome = prop.check(rng, max_support, candidates)
        if outcome is None:
            continue
        violation, instance = outcome
        checked += 1
        if worst is None or violation > worst:
            worst = violation
        if violation > prop.tolerance:
            failures += 1
            if failing_violation is None or violation > failing_violation:
                failing, failing_violation = instance, violation
    if failures:
        logger.warning(
            "%s failed on %d of %d instances (worst violation %r)",
            prop.property_id,
            failures,
            checked,
            worst,
        )
    else:
        logger.debug("%s passed on %d instances", prop.property_id, checked)
    return PropertyResult(
        prop.property_id,
        checked,
        failures,
        None if worst is None else float(worst),
        prop.tolerance,
        seed,
        failing,
    )


def run_verification(
    seed=0,
    instances_per_property=100,
    max_support=8,
    candidates=DEFAULT_CANDIDATES,
    workers=1,
    properties=None,
):
    """Checks every property on ``instances_per_property`` random instances
    with supports of 2 to ``max_support`` atoms. ``properties`` restricts the
    run to the given property ids.
    """
    if instances_per_property < 1:
        raise ValidationError(
            f"instances_per_property must be at least 1, got {instances_per_property}."
        )
    if max_support < 2:
        raise ValidationError(f"max_support must be at least 2, got {max_support}.")
    if candidates < 4:
        raise ValidationError(f"candidates must be at least 4, got {candidates}.")

    selected = [
        (i, p)
        for i, p in enumerate(PROPERTIES)
        if properties is None or p.property_id in properties
    ]
    if properties is not None:
        unknown = set(properties) - {p.property_id for _, p in selected}
        if unknown:
            raise ValidationError(f"Unknown properties: {sorted(unknown)}.")

    def run(item):
        i, prop = item
        return _run_property(
            i, prop, seed, instances_per_property, max_support, candidates
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, selected))
    else:
        results = [run(item) for item in selected]

    report = VerificationReport(
        seed, instances_per_property, max_support, tuple(results)
    )
    logger.info(
        "verified %d properties: %d failures", len(results), report.failures
    )
    return report
