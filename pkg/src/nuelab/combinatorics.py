"""Exact composition counting and the Stirling-type bound used by both the
escape-time and the parameter-exclusion tail arguments.

N_{k,s} counts sequences (t_1..t_s), t_i >= 1, sum t_i = k.  The closed
form is C(k-1, s-1); for k <= 20 a direct enumeration cross-checks it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import PreconditionUnsatisfiable

ENUMERATION_LIMIT = 20
CAP = 64


def _enumerate_compositions(k: int, s: int) -> int:
    if s == 1:
        return 1
    count = 0
    stack = [(k, s)]
    while stack:
        rem, parts = stack.pop()
        if parts == 1:
            count += 1 if rem >= 1 else 0
            continue
        for first in range(1, rem - parts + 2):
            stack.append((rem - first, parts - 1))
    return count


def count_compositions(k: int, s: int) -> int:
    """N_{k,s}; enumeration and the closed form C(k-1, s-1) must agree
    wherever both run (k <= 20)."""
    if not 1 <= s <= k:
        raise ValueError("need 1 <= s <= k")
    if k > CAP:
        raise OverflowError(f"k > {CAP} is outside the exact-arithmetic cap")
    closed = math.comb(k - 1, s - 1)
    if k <= ENUMERATION_LIMIT:
        enumerated = _enumerate_compositions(k, s)
        if enumerated != closed:
            raise AssertionError(
                f"enumeration {enumerated} != closed form {closed} at (k={k}, s={s})")
    return closed


def _eta_growth(eta: float) -> float:
    """(1 + eta) * eta - eta * log(eta): the Stirling-bound exponent per unit k."""
    return (1.0 + eta) * eta - eta * math.log(eta)


def solve_eta(eta_hat: float, tol: float = 1e-6) -> float:
    """Largest eta in (0, 1/2] with the growth exponent <= eta_hat.

    The exponent is increasing in eta and tends to 0 as eta -> 0, so a
    solution exists for every eta_hat > 0.
    """
    if eta_hat <= 0:
        raise PreconditionUnsatisfiable("no eta > 0 works for eta_hat <= 0")
    lo, hi = 1e-12, 0.5
    if _eta_growth(hi) <= eta_hat:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _eta_growth(mid) <= eta_hat:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return lo


@dataclass(frozen=True)
class BoundCheck:
    n_compositions: int
    binom_bound: int
    exp_bound: float
    holds: bool
    eta: float
    precondition_met: bool  # s <= eta * k for the solved eta


def check_bound(k: int, s: int, eta_hat: float) -> BoundCheck:
    """Verify N_{k,s} <= C(k+s, s) <= e^{eta_hat * k}.

    `eta` is solved from eta_hat by bisection; the asymptotic guarantee
    applies when s <= eta*k, but all three quantities are returned and the
    inequality is checked directly regardless.
    """
    n = count_compositions(k, s)
    binom = math.comb(k + s, s)
    expb = math.exp(eta_hat * k)
    eta = solve_eta(eta_hat)
    return BoundCheck(
        n_compositions=n,
        binom_bound=binom,
        exp_bound=expb,
        holds=(n <= binom <= expb),
        eta=eta,
        precondition_met=(s <= eta * k),
    )
