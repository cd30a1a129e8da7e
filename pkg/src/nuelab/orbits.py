"""Birkhoff statistics, Lyapunov exponents, expansion/recurrence time
functions and Monte Carlo estimation of the nonuniformity tail |Gamma_n|.

The expansion and recurrence times quantify over all n >= N in their
definitions; here the quantifier runs to a finite cap `n_cap` and a result
of None means the condition did not settle before the cap (a finite-horizon
surrogate, reported as "unresolved").
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AtCriticalPoint
from .maps import MapSpec
from .sampling import substream
from .stats import binomial_stderr


def birkhoff_average(m: MapSpec, phi, x0, n: int) -> float:
    """(1/n) sum_{i=1..n} phi(f^i(x0)).

    Reproducible given (map, x0, n); dyadic-linear maps use the
    measure-faithful stepper so long orbits keep Lebesgue statistics.
    """
    if n < 1:
        raise ValueError("n >= 1 required")
    step = m.mc_stepper(x0) if m.family != "viana" else m.eval
    total = 0.0
    x = x0
    for _ in range(n):
        x = step(x)
        total += phi(x)
    return total / n


def _nudge_off_critical(m: MapSpec, x0: float) -> float:
    for c in m.critical_set():
        if x0 == c.location:
            return math.nextafter(x0, m.interval[1])
    return x0


def lyapunov_exponent(m: MapSpec, x0, n: int) -> float:
    """(1/n) sum_{i<n} log |Df(f^i(x0))|.

    x0 exactly on a critical point is nudged by one ulp; a later exact hit
    raises AtCriticalPoint carrying the offending index.
    """
    if n < 1:
        raise ValueError("n >= 1 required")
    x = x0 if m.family == "viana" else _nudge_off_critical(m, m._clamp(float(x0)))
    total = 0.0
    for i in range(n):
        try:
            total += m.log_abs_deriv(x)
        except AtCriticalPoint:
            raise AtCriticalPoint(f"orbit hit the critical set at step {i}", index=i) from None
        x = m.eval(x)
    return total / n


def _settle_index(running_ok: np.ndarray) -> int | None:
    """Least N (1-based) with running_ok[n-1] true for all n >= N; None if none."""
    if not running_ok[-1]:
        return None
    bad = np.nonzero(~running_ok)[0]
    return 1 if bad.size == 0 else int(bad[-1]) + 2


def expansion_time(m: MapSpec, x, lam: float, n_cap: int) -> int | None:
    """Least N <= n_cap with (1/n) sum_{i<n} log|Df(f^i(x))| >= lam/2 for all
    n in [N, n_cap]; None (unresolved) if there is no such N."""
    if lam <= 0 or n_cap < 1:
        raise ValueError("lam > 0 and n_cap >= 1 required")
    sums = np.empty(n_cap)
    total = 0.0
    pt = x if m.family == "viana" else _nudge_off_critical(m, m._clamp(float(x)))
    for i in range(n_cap):
        total += m.log_abs_deriv(pt)
        sums[i] = total
        pt = m.eval(pt)
    n = np.arange(1, n_cap + 1)
    return _settle_index(sums / n >= lam / 2.0)


def truncated_log_distance(m: MapSpec, x, delta: float) -> float:
    """-log dist_delta(x, C) with dist_delta = d if d <= delta else 1."""
    d = m.critical_distance(x)
    return -math.log(d) if d <= delta else 0.0


def recurrence_time(m: MapSpec, x, delta: float, eps_rec: float, n_cap: int) -> int | None:
    """Least N <= n_cap with (1/n) sum_{j<n} -log dist_delta(f^j(x), C)
    <= 2*eps_rec for all n in [N, n_cap]; None past the cap."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta in (0, 1) required")
    if eps_rec <= 0:
        raise ValueError("eps_rec > 0 required")
    sums = np.empty(n_cap)
    total = 0.0
    pt = x
    for j in range(n_cap):
        total += truncated_log_distance(m, pt, delta)
        sums[j] = total
        pt = m.eval(pt)
    n = np.arange(1, n_cap + 1)
    return _settle_index(sums / n <= 2.0 * eps_rec)


@dataclass(frozen=True)
class GammaTailEstimate:
    """Monte Carlo estimate of |Gamma_n| = |{x : E(x) > n or R(x) > n}|."""

    ns: np.ndarray
    estimates: np.ndarray
    stderrs: np.ndarray
    sample_size: int
    n_max: int
    unresolved_fraction: float


def _sample_point(m: MapSpec, rng) -> object:
    lo, hi = m.interval
    if m.family == "viana":
        return (rng.uniform(0.0, 1.0), rng.uniform(lo, hi))
    return rng.uniform(lo, hi)


def gamma_tail(
    m: MapSpec,
    sample_size: int,
    n_max: int,
    lam: float,
    delta: float,
    eps_rec: float,
    seed: int = 0,
    n_cap: int | None = None,
) -> GammaTailEstimate:
    """Fraction of Lebesgue-uniform samples with max(E, R) > n, n = 1..n_max.

    Samples whose expansion or recurrence time did not settle by n_cap
    (default n_max) are counted as exceeding every n.  Sample i depends only
    on (seed, i), so the estimate is independent of evaluation order.
    """
    if sample_size < 10 ** 3:
        raise ValueError("sample_size >= 1e3 required")
    cap = n_cap or n_max
    worst = np.empty(sample_size)
    for i in range(sample_size):
        x = _sample_point(m, substream(seed, i))
        e = expansion_time(m, x, lam, cap)
        r = recurrence_time(m, x, delta, eps_rec, cap)
        worst[i] = math.inf if (e is None or r is None) else max(e, r)
    ns = np.arange(1, n_max + 1)
    counts = (worst[None, :] > ns[:, None]).sum(axis=1)
    est = counts / sample_size
    return GammaTailEstimate(
        ns=ns,
        estimates=est,
        stderrs=binomial_stderr(est, sample_size),
        sample_size=sample_size,
        n_max=n_max,
        unresolved_fraction=float(np.isinf(worst).mean()),
    )
