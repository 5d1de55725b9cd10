"""Monte Carlo estimators with deterministic parallelism, plus a quadrature oracle.

Every estimator consumes trials through the fixed batch layout of
:mod:`bafsim.channel`, reduces per-batch integer counts in batch order, and is
therefore bit-identical for a given (master_seed, n_trials) regardless of the
worker count.  Workers default to ``os.cpu_count()`` capped by the
``BAF_WORKERS`` environment variable.

The quadrature oracle evaluates the one-relay outage probability
Pr(U + VW/(V+W+x) < t) by nested adaptive quadrature, giving an independent
deterministic cross-check of the simulation path.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .capacity import LOG2E, c_eps_baf_k, position_grid, threshold_for
from .channel import (
    LinkVariances,
    SystemParams,
    batch_plan,
    batch_stream,
    gains_batch,
)
from .errors import ConvergenceError, InvalidParameterError
from .protocol import block_stats_batch

MIN_TRIALS = 10_000
# Above this many matrix elements the rate search streams batches per
# candidate instead of caching the draws (same values either way).
CACHE_ELEMENT_LIMIT = 64_000_000


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo statistic with normal-approximation 95% interval."""

    mean: float
    stderr: float
    n_trials: int
    ci95: tuple[float, float]


@dataclass(frozen=True)
class RateSearchResult:
    """Outcome of the empirical outage-capacity bisection."""

    rate: float
    achieved_outage: float
    iterations: int
    bracketing: tuple[float, float]


def worker_count(requested: int | None = None) -> int:
    """Effective worker count: requested (or cpu count) capped by BAF_WORKERS."""
    base = requested if requested is not None else (os.cpu_count() or 1)
    env = os.environ.get("BAF_WORKERS")
    if env is not None:
        try:
            cap = int(env)
        except ValueError:
            raise InvalidParameterError(f"BAF_WORKERS must be a positive integer, got {env!r}") from None
        if cap < 1:
            raise InvalidParameterError(f"BAF_WORKERS must be a positive integer, got {env!r}")
        base = min(base, cap)
    return max(1, int(base))


def _run_batches(worker, tasks: list, workers: int) -> list:
    """Evaluate ``worker`` over ``tasks``, results in task order."""
    if workers <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    n_workers = min(workers, len(tasks))
    chunk = max(1, len(tasks) // (4 * n_workers))
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(worker, tasks, chunksize=chunk))


def _bernoulli_estimate(count: int, n: int) -> Estimate:
    p = count / n
    se = math.sqrt(p * (1.0 - p) / n)
    return Estimate(p, se, n, (max(0.0, p - 1.96 * se), min(1.0, p + 1.96 * se)))


def _mean_estimate(total: int, total_sq: int, n: int) -> Estimate:
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * (n / (n - 1.0))
    se = math.sqrt(var / n)
    return Estimate(mean, se, n, (mean - 1.96 * se, mean + 1.96 * se))


def _check_estimator_inputs(variances: LinkVariances, params: SystemParams, n_trials: int) -> None:
    if variances.k_relays != params.k_relays:
        raise InvalidParameterError(
            f"variances describe {variances.k_relays} relays but params.k_relays={params.k_relays}"
        )
    if params.k_relays < 1:
        raise InvalidParameterError("protocol estimators require at least one relay")
    if n_trials < MIN_TRIALS:
        raise InvalidParameterError(f"n_trials must be >= {MIN_TRIALS}, got {n_trials!r}")


def _resolve_tau_quiet(rate: float, snr: float, fixed: float | None) -> float:
    # Policy duty cycle without the clamp warning; used where candidate rates
    # legitimately sweep across the clamp boundary.
    if fixed is not None:
        return fixed
    if rate == 0.0:
        return 1.0
    return min(math.sqrt(rate * snr), 1.0)


def _protocol_batch(task) -> tuple[int, int, int]:
    variances, master_seed, batch_index, rows, snr, rate, tau, k, mode = task
    gains = gains_batch(variances, master_seed, batch_index, rows)
    outage, n_used = block_stats_batch(gains, snr, rate, tau, k, mode)
    return int(outage.sum()), int(n_used.sum()), int((n_used * n_used).sum())


def _protocol_totals(
    variances: LinkVariances,
    params: SystemParams,
    n_trials: int,
    master_seed: int,
    workers: int | None,
    threshold_mode: str,
) -> tuple[int, int, int]:
    tau = _resolve_tau_quiet(params.rate, params.snr, params.tau)
    tasks = [
        (variances, master_seed, j, rows, params.snr, params.rate, tau, params.k_relays, threshold_mode)
        for j, rows in batch_plan(n_trials)
    ]
    results = _run_batches(_protocol_batch, tasks, worker_count(workers))
    outages = sum(r[0] for r in results)
    total_n = sum(r[1] for r in results)
    total_n_sq = sum(r[2] for r in results)
    return outages, total_n, total_n_sq


def estimate_outage(
    variances: LinkVariances,
    params: SystemParams,
    n_trials: int,
    master_seed: int,
    workers: int | None = None,
    threshold_mode: str = "exact",
) -> Estimate:
    """Fraction of protocol blocks ending in outage, with binomial stderr."""
    _check_estimator_inputs(variances, params, n_trials)
    outages, _, _ = _protocol_totals(variances, params, n_trials, master_seed, workers, threshold_mode)
    return _bernoulli_estimate(outages, n_trials)


def estimate_expected_n(
    variances: LinkVariances,
    params: SystemParams,
    n_trials: int,
    master_seed: int,
    workers: int | None = None,
    threshold_mode: str = "exact",
) -> Estimate:
    """Sample mean of sub-blocks consumed per message (fixed relay order)."""
    _check_estimator_inputs(variances, params, n_trials)
    _, total_n, total_n_sq = _protocol_totals(variances, params, n_trials, master_seed, workers, threshold_mode)
    return _mean_estimate(total_n, total_n_sq, n_trials)


# --- Lemma-style small-threshold ratio experiment ---------------------------


def policy_x_for_threshold(g: float) -> float:
    """x = tau/SNR consistent with the duty-cycle policy at threshold g.

    Under tau = sqrt(rate*snr), both the threshold and the offset are set by
    y = sqrt(rate/snr): g = y*(2^(2y) - 1) and x = y.  Inverts the first
    relation for y.
    """
    if not (math.isfinite(g) and g > 0.0):
        raise InvalidParameterError(f"threshold must be positive, got {g!r}")
    return float(optimize.brentq(lambda y: y * (2.0 ** (2.0 * y) - 1.0) - g, 1e-300, 64.0, rtol=1e-15))


def _lemma_batch(task) -> tuple[int, ...]:
    sigmas, master_seed, batch_index, rows, gs, xs = task
    gen = batch_stream(master_seed, batch_index)
    e = gen.standard_exponential((rows, 3)) * np.asarray(sigmas)
    u, v, w = e[:, 0], e[:, 1], e[:, 2]
    counts = []
    for g, x in zip(gs, xs):
        agg = u + v * w / (v + w + x)
        counts.append(int(np.count_nonzero(agg < g)))
    return tuple(counts)


def lemma1_ratio_experiment(
    sigma_u2: float,
    sigma_v2: float,
    sigma_w2: float,
    g_sequence,
    n_trials: int,
    master_seed: int,
    x_values=None,
    x_factor: float | None = None,
    workers: int | None = None,
) -> list[tuple[float, Estimate]]:
    """Estimate Pr(U + VW/(V+W+x) < g)/g^2 along a shrinking threshold sequence.

    ``g_sequence`` must be strictly decreasing and positive.  The offset x is
    tied to g through the duty-cycle policy by default; ``x_factor`` scales it
    as x = x_factor*g, or pass explicit ``x_values``.  The ratio means
    converge toward ``lemma1_constant`` as g -> 0.  Raises ConvergenceError
    when the smallest threshold sees fewer than 100 events.
    """
    gs = [float(g) for g in g_sequence]
    if not gs or any(g <= 0.0 for g in gs) or any(b >= a for a, b in zip(gs, gs[1:])):
        raise InvalidParameterError("g_sequence must be strictly decreasing and positive")
    if n_trials < MIN_TRIALS:
        raise InvalidParameterError(f"n_trials must be >= {MIN_TRIALS}, got {n_trials!r}")
    if x_values is not None and x_factor is not None:
        raise InvalidParameterError("give at most one of x_values and x_factor")
    if x_values is not None:
        xs = [float(x) for x in x_values]
        if len(xs) != len(gs) or any(x < 0.0 for x in xs):
            raise InvalidParameterError("x_values must be nonnegative, one per threshold")
    elif x_factor is not None:
        if x_factor < 0.0:
            raise InvalidParameterError(f"x_factor must be >= 0, got {x_factor!r}")
        xs = [x_factor * g for g in gs]
    else:
        xs = [policy_x_for_threshold(g) for g in gs]

    sigmas = (float(sigma_u2), float(sigma_v2), float(sigma_w2))
    for v in sigmas:
        if not (math.isfinite(v) and v > 0.0):
            raise InvalidParameterError(f"variances must be positive, got {v!r}")
    tasks = [
        (sigmas, master_seed, j, rows, tuple(gs), tuple(xs))
        for j, rows in batch_plan(n_trials)
    ]
    results = _run_batches(_lemma_batch, tasks, worker_count(workers))
    counts = [sum(r[i] for r in results) for i in range(len(gs))]

    if counts[-1] < 100:
        need = math.ceil(n_trials * 100 / max(counts[-1], 1))
        raise ConvergenceError(
            f"only {counts[-1]} events at the smallest threshold g={gs[-1]:g}; "
            f"increase n_trials (roughly {need} needed for 100 events)"
        )
    out = []
    for g, c in zip(gs, counts):
        p = _bernoulli_estimate(c, n_trials)
        scale = 1.0 / (g * g)
        out.append(
            (g, Estimate(p.mean * scale, p.stderr * scale, n_trials, (p.ci95[0] * scale, p.ci95[1] * scale)))
        )
    return out


# --- deterministic quadrature oracle ----------------------------------------

ORACLE_TAIL_MEANS = 40.0
ORACLE_REL_TOL = 1e-6


def quadrature_outage_oracle(variances: LinkVariances, threshold: float, x: float) -> float:
    """Pr(U + VW/(V+W+x) < t) for one relay, by deterministic quadrature.

    U is the direct-link gain (mean sigma_sd2), V and W the relay-hop gains.
    The W variable integrates in closed form: conditioned on V = v, the
    combined relay gain stays below s iff W < s*(v+x)/(v-s) (always, when
    v <= s), so

        Pr(VW/(V+W+x) < s) = 1 - int_s^inf f_V(v) exp(-s*(v+x)/((v-s)*sw2)) dv.

    The probability is the expectation of that CDF over U restricted to
    U < t, a second 1-D adaptive quadrature.  The V tail is truncated at
    ``ORACLE_TAIL_MEANS`` means beyond s (neglected mass below e-40), and a
    ConvergenceError reports the achieved tolerance if the combined error
    estimate exceeds ``ORACLE_REL_TOL`` relative to the result.
    """
    if variances.k_relays != 1:
        raise InvalidParameterError("the quadrature oracle covers the one-relay case only")
    if not (math.isfinite(threshold) and threshold >= 0.0):
        raise InvalidParameterError(f"threshold must be >= 0, got {threshold!r}")
    if not (math.isfinite(x) and x >= 0.0):
        raise InvalidParameterError(f"x must be >= 0, got {x!r}")
    if threshold == 0.0:
        return 0.0
    su2 = variances.sigma_sd2
    sv2 = variances.sigma_sr2[0]
    sw2 = variances.sigma_rd2[0]
    t = threshold
    inner_errs: list[float] = []

    def relay_cdf(s: float) -> float:
        if s <= 0.0:
            return 0.0

        def survival_density(r: float) -> float:
            # r = v - s > 0
            return math.exp(-(s + r) / sv2 - s * (s + r + x) / (r * sw2)) / sv2

        # breakpoints mark the suppression layer near r = 0 so the adaptive
        # rule resolves it even when it is microscopically thin
        upper = ORACLE_TAIL_MEANS * sv2
        layer = s * (s + x) / sw2
        peak = math.sqrt(max(s * (s + x) * sv2 / sw2, 1e-300))
        pts = sorted({min(max(v, 1e-290), 0.975 * upper) for v in (layer, peak, 10 * peak, 100 * peak)})
        tail, err = integrate.quad(
            survival_density, 0.0, upper, epsabs=0.0, epsrel=1e-11, limit=300, points=pts
        )
        inner_errs.append(err)
        return 1.0 - tail

    def outer(u: float) -> float:
        return math.exp(-u / su2) / su2 * relay_cdf(t - u)

    with warnings.catch_warnings():
        # accuracy is gated on the returned error estimates below
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        p, outer_err = integrate.quad(outer, 0.0, t, epsabs=0.0, epsrel=1e-9, limit=200)
    if p <= 0.0:
        return 0.0
    err = outer_err + (max(inner_errs) * t / su2 if inner_errs else 0.0)
    if err > ORACLE_REL_TOL * p:
        raise ConvergenceError(
            f"quadrature achieved relative tolerance {err / p:.3e}, required {ORACLE_REL_TOL:g}"
        )
    return min(p, 1.0)


# --- empirical outage capacity ----------------------------------------------


def _max_allowed_count(epsilon: float, n_trials: int) -> int:
    """Largest outage count c with c/n_trials < epsilon in float arithmetic."""
    c = min(int(epsilon * n_trials), n_trials)
    while c / n_trials >= epsilon:
        c -= 1
    while (c + 1) / n_trials < epsilon:
        c += 1
    return c


def empirical_eps_outage_capacity(
    variances: LinkVariances,
    params: SystemParams,
    n_trials: int,
    master_seed: int,
    workers: int | None = None,
    threshold_mode: str = "exact",
    rel_tol: float = 1e-4,
    max_iter: int = 60,
) -> RateSearchResult:
    """Largest rate whose simulated outage probability stays below epsilon.

    Bisection over the rate with common random numbers: every candidate rate
    is evaluated on the identical trials, which makes the empirical outage
    probability monotone nondecreasing in the rate (the per-trial outage set
    only grows with the rate under the duty-cycle policy).  The search stops
    once the bracket is narrower than ``rel_tol`` times its upper end or
    after ``max_iter`` bisection steps, and returns the achieving (lower)
    side of the bracket.  ``params.rate`` is ignored.
    """
    _check_estimator_inputs(variances, params, n_trials)
    eps = params.epsilon
    if eps * n_trials < 100:
        raise InvalidParameterError(
            f"epsilon*n_trials must be >= 100 (got {eps * n_trials:g}); increase n_trials"
        )

    k = params.k_relays
    snr = params.snr
    n_workers = worker_count(workers)
    plan = batch_plan(n_trials)

    cached = n_trials * (1 + 2 * k) <= CACHE_ELEMENT_LIMIT
    if cached:
        gains = np.concatenate(
            [gains_batch(variances, master_seed, j, rows) for j, rows in plan], axis=0
        )
        g_sd = gains[:, 0]
        g_sr = gains[:, 1 : 1 + k]
        g_rd = gains[:, 1 + k :]

        def outage_count(rate: float) -> int:
            if rate == 0.0:
                return 0
            tau = _resolve_tau_quiet(rate, snr, params.tau)
            x = tau / snr
            thr = threshold_for(rate, snr, tau, k, threshold_mode)
            agg = g_sd + (g_rd * g_sr / (g_rd + g_sr + x)).sum(axis=1)
            return int(np.count_nonzero(agg < thr))

    else:

        def outage_count(rate: float) -> int:
            if rate == 0.0:
                return 0
            tau = _resolve_tau_quiet(rate, snr, params.tau)
            tasks = [
                (variances, master_seed, j, rows, snr, rate, tau, k, threshold_mode)
                for j, rows in plan
            ]
            results = _run_batches(_protocol_batch, tasks, n_workers)
            return sum(r[0] for r in results)

    evals: dict[float, float] = {}

    def p_hat(rate: float) -> float:
        if rate not in evals:
            evals[rate] = outage_count(rate) / n_trials
        return evals[rate]

    r_lo = 0.0
    evals[0.0] = 0.0
    r_hi = max(c_eps_baf_k(variances, snr, eps), 1e-12)
    doublings = 0
    while p_hat(r_hi) < eps:
        r_lo = r_hi
        r_hi *= 2.0
        doublings += 1
        if doublings > 60:
            raise InvalidParameterError(
                "no rate with outage probability >= epsilon found after 60 bracket doublings"
            )

    steps = 0
    while (r_hi - r_lo) > rel_tol * r_hi and steps < max_iter:
        mid = 0.5 * (r_lo + r_hi)
        if p_hat(mid) < eps:
            r_lo = mid
        else:
            r_hi = mid
        steps += 1

    rates = sorted(evals)
    probs = [evals[r] for r in rates]
    if any(b < a for a, b in zip(probs, probs[1:])):
        raise RuntimeError("common-random-number outage probability is not monotone in the rate")

    return RateSearchResult(
        rate=r_lo,
        achieved_outage=evals[r_lo],
        iterations=len(evals) - 1,
        bracketing=(r_lo, r_hi),
    )


# --- empirical capacity across relay positions ------------------------------

PLACEMENT_TRIAL_LIMIT = 20_000_000


def _y_for_threshold_exact(q: float, k_relays: int) -> float:
    """Invert q = y*(2^((K+1)*y) - 1) for y > 0."""
    if q <= 0.0:
        return 0.0
    return float(
        optimize.brentq(
            lambda y: y * (2.0 ** ((k_relays + 1) * y) - 1.0) - q, 1e-300, 64.0, rtol=1e-15
        )
    )


def empirical_capacity_vs_position(
    pathloss_exponent: float,
    snr: float,
    epsilon: float,
    n_trials: int,
    master_seed: int,
    grid_points: int = 201,
    threshold_mode: str = "exact",
) -> tuple[np.ndarray, np.ndarray]:
    """Empirical one-relay outage capacity across a relay-position grid.

    Uses the same trials (common random numbers) at every grid position: the
    raw exponentials are drawn once and rescaled by the position-dependent
    variances, so the capacity curve is smooth in the position and its argmax
    is comparable across positions.  At each position the capacity is the
    epsilon-quantile order statistic of the per-trial supportable rate,
    located by a fixed point on the duty-cycle relation; this equals the
    bisection limit of ``empirical_eps_outage_capacity`` on the same trials.

    Returns (positions, capacities).
    """
    if not (math.isfinite(pathloss_exponent) and pathloss_exponent > 0.0):
        raise InvalidParameterError(f"pathloss_exponent must be > 0, got {pathloss_exponent!r}")
    if not (0.0 < epsilon < 1.0):
        raise InvalidParameterError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    if n_trials < MIN_TRIALS:
        raise InvalidParameterError(f"n_trials must be >= {MIN_TRIALS}, got {n_trials!r}")
    if n_trials > PLACEMENT_TRIAL_LIMIT:
        raise InvalidParameterError(
            f"n_trials above {PLACEMENT_TRIAL_LIMIT} would exceed the in-memory draw cache"
        )
    if epsilon * n_trials < 100:
        raise InvalidParameterError(
            f"epsilon*n_trials must be >= 100 (got {epsilon * n_trials:g}); increase n_trials"
        )

    if threshold_mode not in ("exact", "linearized"):
        raise InvalidParameterError(f"unknown threshold_mode {threshold_mode!r}")

    unit = LinkVariances(1.0, (1.0,), (1.0,))
    raw = np.concatenate(
        [gains_batch(unit, master_seed, j, rows) for j, rows in batch_plan(n_trials)], axis=0
    )
    # order statistic matching sup{R : count(R)/n < eps}
    k0 = _max_allowed_count(epsilon, n_trials)
    u = raw[:, 0]

    grid = position_grid(grid_points)
    caps = np.empty_like(grid)
    for i, d in enumerate(grid):
        v = raw[:, 1] * d**-pathloss_exponent
        w = raw[:, 2] * (1.0 - d) ** -pathloss_exponent
        y = 0.5 * math.sqrt(epsilon)  # rough starting scale
        converged = False
        for _ in range(80):
            agg = u + v * w / (v + w + y)
            q = float(np.partition(agg, k0)[k0])
            if threshold_mode == "exact":
                y_new = _y_for_threshold_exact(q, 1)
            else:
                y_new = math.sqrt(q * LOG2E / 2.0)
            if abs(y_new - y) <= 1e-13 * max(y_new, 1e-300):
                y = y_new
                converged = True
                break
            y = y_new
        if not converged:
            raise ConvergenceError(f"capacity fixed point did not converge at position {d:g}")
        caps[i] = snr * y * y
    return grid, caps
