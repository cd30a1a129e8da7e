"""Induced Markov maps F = f^R on a base interval, return-time tail
statistics, and the tail-to-correlation-decay dictionary.

A tower is a countable list of branches (omega, R(omega)) with each f^R
mapping omega onto the base Delta.  Towers arise here three ways: brute
force first-return construction for full-branch Markov maps, the
Benedicks-Carleson construction (bc_induction module), and synthesis from a
prescribed tail (testing).
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousDecay, GcdNotOne, NotMarkov
from .maps import Branch, MapSpec
from .stats import log_linear_fit, log_log_fit

ONTO_TOL = 1e-8


@dataclass(frozen=True)
class TowerBranch:
    left: float
    right: float
    return_time: int
    orientation: int = 1
    word: tuple | None = None  # base-map branch indices, when the builder knows them

    @property
    def length(self) -> float:
        return self.right - self.left


@dataclass(frozen=True)
class InducedMarkovMap:
    """Base interval Delta with branches of the induced map F = f^R."""

    delta: tuple
    branches: tuple
    base_map: MapSpec | None = None
    deficit: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(
            sorted(self.branches, key=lambda b: b.left)))
        object.__setattr__(self, "_lefts", [b.left for b in self.branches])

    @property
    def length(self) -> float:
        return self.delta[1] - self.delta[0]

    @property
    def modeled_mass(self) -> float:
        return sum(b.length for b in self.branches)

    @property
    def return_time_gcd(self) -> int:
        g = 0
        for b in self.branches:
            g = math.gcd(g, b.return_time)
        return g

    def validate(self, tol: float = ONTO_TOL) -> None:
        """Check disjointness, mass accounting and (if a base map is
        attached) that each branch endpoint iterates onto the base boundary."""
        prev_right = -math.inf
        for b in self.branches:
            if b.left < prev_right - tol:
                raise ValueError(f"overlapping branches near {b.left}")
            if not (self.delta[0] - tol <= b.left <= b.right <= self.delta[1] + tol):
                raise ValueError(f"branch [{b.left}, {b.right}] outside the base")
            prev_right = b.right
        total = self.modeled_mass + self.deficit
        if abs(total - self.length) > tol:
            raise ValueError(
                f"branch mass {self.modeled_mass:.12g} + deficit {self.deficit:.12g}"
                f" != |Delta| {self.length:.12g}")
        if self.base_map is not None:
            # A base boundary point that is also a discontinuity of f makes
            # the final raw step branch-sensitive to rounding: accept a
            # landing near the boundary or near its one-sided images.
            targets = list(self.delta)
            for bdry in self.delta:
                for side in (math.inf, -math.inf):
                    try:
                        targets.append(self.base_map.eval(math.nextafter(bdry, side)))
                    except Exception:
                        pass
            base_branches = None
            for b in self.branches:
                for x in (b.left, b.right):
                    y = x
                    if b.word is not None:
                        # branch-aware stepping: rounding cannot leak the
                        # orbit into a neighbouring branch mid-flight
                        if base_branches is None:
                            base_branches = {br.index: br
                                             for br in self.base_map.markov_branches()}
                        for sym in b.word:
                            y = self.base_map.branch_apply(base_branches[sym], y)
                    else:
                        for _ in range(b.return_time):
                            y = self.base_map.eval(y)
                    if min(abs(y - t) for t in targets) > tol:
                        raise ValueError(
                            f"f^{b.return_time} of endpoint {x} misses the base boundary "
                            f"(landed {y})")

    # --- full-branch protocol so symbolic/folklore machinery can run on F ---

    def branches_as_markov(self) -> list:
        return [Branch(i, b.left, b.right, b.orientation)
                for i, b in enumerate(self.branches)]

    def branch_preimage(self, branch: Branch, y: float) -> float:
        tb = self.branches[branch.index]
        lo, hi = tb.left, tb.right
        if self.base_map is None:
            # synthetic tower: branches are affine onto Delta
            t = (y - self.delta[0]) / self.length
            return lo + t * (hi - lo) if tb.orientation > 0 else hi - t * (hi - lo)
        fwd = lambda x: self._apply_branch_orbit(tb, x)
        sgn = tb.orientation
        a, b = lo, hi
        fa = sgn * (fwd(a) - y)
        for _ in range(200):
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                break
            fm = sgn * (fwd(mid) - y)
            if fm == 0.0:
                return mid
            if (fa < 0) == (fm < 0):
                a, fa = mid, fm
            else:
                b = mid
        return a if abs(fa) <= abs(fwd(b) - y) else b

    def _apply_branch_orbit(self, tb: TowerBranch, x: float) -> float:
        for _ in range(tb.return_time):
            x = self.base_map.eval(x)
        return x

    def eval(self, x: float) -> float:
        """F(x) = f^{R(x)}(x); synthetic towers use their affine branches."""
        b = self.branch_of(x)
        if b is None:
            raise ValueError(f"{x} lies in the unmodelled deficit")
        if self.base_map is None:
            t = (x - b.left) / b.length
            if b.orientation < 0:
                t = 1.0 - t
            return self.delta[0] + t * self.length
        return self._apply_branch_orbit(b, x)

    def return_time_of(self, x: float) -> int | None:
        b = self.branch_of(x)
        return None if b is None else b.return_time

    def branch_of(self, x: float) -> TowerBranch | None:
        i = bisect.bisect_right(self._lefts, x) - 1
        if i < 0:
            return None
        b = self.branches[i]
        if b.left <= x < b.right or (x == b.right == self.delta[1]):
            return b
        return None

    def log_abs_deriv(self, x: float) -> float:
        if self.base_map is None:
            b = self.branch_of(x)
            return math.log(self.length / b.length)
        b = self.branch_of(x)
        total = 0.0
        for _ in range(b.return_time):
            total += self.base_map.log_abs_deriv(x)
            x = self.base_map.eval(x)
        return total

    def branch_apply(self, branch: Branch, x: float) -> float:
        return self.eval(x)

    def branch_log_abs_deriv(self, branch: Branch, x: float) -> float:
        return self.log_abs_deriv(x)

    @property
    def interval(self) -> tuple:
        return self.delta

    # ------------------------------------------------------------- serialization

    def to_json(self) -> str:
        return json.dumps({
            "delta": list(self.delta),
            "deficit": self.deficit,
            "branches": [
                {"left": b.left, "right": b.right, "R": b.return_time,
                 "orientation": b.orientation}
                for b in self.branches
            ],
        }, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "InducedMarkovMap":
        d = json.loads(text)
        return cls(
            delta=tuple(d["delta"]),
            deficit=float(d.get("deficit", 0.0)),
            branches=tuple(
                TowerBranch(b["left"], b["right"], int(b["R"]), int(b.get("orientation", 1)))
                for b in d["branches"]
            ),
        )


# ----------------------------------------------------------- first returns


def first_return_tower(m: MapSpec, delta: tuple, n_max: int,
                       max_branches: int = 200_000) -> InducedMarkovMap:
    """Brute-force first-return map to `delta` for a full-branch Markov map.

    `delta` must be a union of consecutive branch domains of `m`.  Branches
    of the return map are enumerated to return time n_max; deeper mass is
    left as the deficit.
    """
    branches = m.markov_branches()
    inside = [b for b in branches if b.left >= delta[0] - 1e-12 and b.right <= delta[1] + 1e-12]
    outside = [b for b in branches if b not in inside]
    if not inside or abs(sum(b.right - b.left for b in inside) - (delta[1] - delta[0])) > 1e-9:
        raise NotMarkov("delta must be a union of full branch domains")

    out: list[TowerBranch] = []
    # Words b0 w1...w_{k-1} with b0 inside delta, interior symbols outside,
    # and f^k landing back in delta; the branch interval is delta pulled back
    # through the word.
    frontier = [((b,), b.orientation) for b in inside]  # words as branch tuples
    for r in range(1, n_max + 1):
        new_frontier = []
        for word, sign in frontier:
            # returning piece: pull delta back through the word
            lo, hi = delta
            for br in reversed(word):
                lo, hi = _pullback_interval(m, br, lo, hi)
            out.append(TowerBranch(lo, hi, r, sign, word=tuple(b.index for b in word)))
            if r < n_max:
                for br in outside:
                    new_frontier.append((word + (br,), sign * br.orientation))
                    if len(new_frontier) > max_branches:
                        raise NotMarkov("branch budget exhausted; lower n_max")
        frontier = new_frontier
    modeled = sum(b.length for b in out)
    deficit = (delta[1] - delta[0]) - modeled
    return InducedMarkovMap(delta=tuple(delta), branches=tuple(out), base_map=m,
                            deficit=max(deficit, 0.0))


def _pullback_interval(m: MapSpec, br: Branch, lo: float, hi: float):
    a = m.branch_preimage(br, lo)
    b = m.branch_preimage(br, hi)
    return (b, a) if br.orientation < 0 else (a, b)


def tower_from_tail(tail_masses, delta=(0.0, 1.0)) -> InducedMarkovMap:
    """Synthesise a tower whose return tail reproduces `tail_masses`.

    tail_masses[n-1] = |{R > n}| for n = 1..; branches with R = n get mass
    tail[n-1] - tail[n], laid out left to right.
    """
    tail = [float(delta[1] - delta[0])] + [float(v) for v in tail_masses]
    branches = []
    x = delta[0]
    for n in range(1, len(tail)):
        mass = tail[n - 1] - tail[n]
        if mass < -1e-12:
            raise ValueError("tail must be non-increasing")
        if mass > 0:
            branches.append(TowerBranch(x, x + mass, n))
            x += mass
    # remaining mass (the tail's floor) never returns: deficit
    deficit = tail[-1]
    return InducedMarkovMap(delta=tuple(delta), branches=tuple(branches), deficit=deficit)


# ------------------------------------------------------------------ tails


@dataclass(frozen=True)
class ReturnTail:
    """|R_n| = |{x in Delta : R(x) > n}| for n = 1..n_max (deficit included),
    plus the partial sums R_hat_n = sum_{m >= n} |R_m| used by the
    slowly-varying clause."""

    ns: tuple
    masses: tuple
    hat_masses: tuple
    modeled_mass: float
    deficit: float
    gcd: int

    @classmethod
    def from_masses(cls, masses, modeled_mass=None, deficit=0.0, gcd=1) -> "ReturnTail":
        masses = tuple(float(v) for v in masses)
        hats = tuple(float(v) for v in np.cumsum(masses[::-1])[::-1])
        return cls(tuple(range(1, len(masses) + 1)), masses, hats,
                   modeled_mass if modeled_mass is not None else (masses[0] if masses else 0.0),
                   deficit, gcd)


def return_tail(tower: InducedMarkovMap, n_max: int) -> ReturnTail:
    """Exact sums over modelled branches; unmodelled mass counts as R = inf."""
    if n_max < 1:
        raise ValueError("n_max >= 1 required")
    rs = np.array([b.return_time for b in tower.branches])
    ls = np.array([b.length for b in tower.branches])
    order = np.argsort(rs, kind="stable")
    rs, ls = rs[order], ls[order]
    suffix = np.concatenate([np.cumsum(ls[::-1])[::-1], [0.0]])
    idx = np.searchsorted(rs, np.arange(1, n_max + 1), side="right")
    masses = suffix[idx] + tower.deficit
    return ReturnTail.from_masses(masses, modeled_mass=tower.modeled_mass,
                                  deficit=tower.deficit, gcd=tower.return_time_gcd)


@dataclass(frozen=True)
class IntegrabilityVerdict:
    summable: bool
    partial_sum: float
    last_decade_increment: float


def check_integrability(tail: ReturnTail) -> IntegrabilityVerdict:
    """Partial sum of integral(R) = sum_n |{R > n}| with a stabilisation
    verdict: summable when the last decade of n, (n_max/10, n_max],
    contributes < 1e-3 of the total (relative)."""
    masses = np.asarray(tail.masses) - tail.deficit  # deficit mass has R = inf
    total = float(tail.modeled_mass + np.sum(masses))
    cut = max(len(masses) // 10, 1)
    increment = float(np.sum(masses[cut:]))
    rel = increment / total if total > 0 else 0.0
    return IntegrabilityVerdict(rel < 1e-3, total, rel)


# --------------------------------------------------------------- decay classes


@dataclass(frozen=True)
class DecayClass:
    """Predicted or fitted decay class of a correlation function."""

    kind: str  # 'exponential' | 'polynomial' | 'slowly_varying' | 'log_modulus'
    rate: float | None = None  # e^{-rate*n} or n^{-rate}; modulus exponent for log_modulus
    r2: float = 1.0
    provenance: str = ""
    rate_stderr: float = 0.0


R2_CLEAN = 0.98
R2_FLOOR = 0.90


def predict_decay(tail: ReturnTail, observable_class: str = "holder",
                  log_modulus_gamma: float | None = None,
                  slowly_varying_template=None) -> DecayClass:
    """Classify the return tail and apply the tail-to-decay dictionary.

    Exponential tail (log-linear in n, fitted on the last 60% of the usable
    range) gives exponential correlation decay; polynomial tail n^-a with
    a > 1 (log-log fit on dyadic n) gives decay n^(-a+1); a supplied
    slowly-varying template rho matching R_hat_n gives decay O(rho(n)).
    Observables with a logarithmic modulus of continuity get the weaker
    polynomial-class bound regardless.
    """
    if tail.gcd != 1:
        raise GcdNotOne(f"return-time gcd is {tail.gcd}; induce with f^{tail.gcd} first")
    ns = np.asarray(tail.ns, dtype=float)
    masses = np.asarray(tail.masses, dtype=float)
    # Fit the raw tail, but only where it dominates the unresolved floor:
    # entries within a factor 2 of the deficit carry no rate information.
    usable = masses > 2.0 * tail.deficit
    if usable.sum() < 3:
        raise AmbiguousDecay("tail too short to classify")
    n_u, m_u = ns[usable], masses[usable]

    if slowly_varying_template is not None:
        # R_hat is a truncated sum; truncate the template identically before
        # comparing, otherwise a slowly varying rho never matches on a
        # finite range (rho(n_max) is comparable to rho(n) throughout).
        rho_end = slowly_varying_template(float(n_u[-1]) + 1.0)
        hats = np.asarray(tail.hat_masses, dtype=float)[usable]
        trunc = np.asarray([slowly_varying_template(float(n)) - rho_end for n in n_u])
        keep = trunc > 0
        ratios = hats[keep] / trunc[keep]
        ratios = ratios[np.isfinite(ratios) & (ratios > 0)]
        if ratios.size >= 3 and ratios.max() / ratios.min() <= 2.0:
            return DecayClass("slowly_varying", None, 1.0, "slowly-varying-tail clause")

    start = int(len(n_u) * 0.4)
    exp_fit = log_linear_fit(n_u[start:], m_u[start:])
    # dyadic n, restricted to the last 60% of the log-range so a short
    # pre-asymptotic transient does not bias the exponent (a pure power law
    # is unaffected)
    n_floor = n_u[-1] ** 0.4
    dyadic = [i for i in range(len(n_u))
              if (int(n_u[i]) & (int(n_u[i]) - 1)) == 0 and n_u[i] >= n_floor]
    if len(dyadic) < 3:
        dyadic = [i for i in range(len(n_u)) if (int(n_u[i]) & (int(n_u[i]) - 1)) == 0]
    poly_fit = log_log_fit(n_u[dyadic], m_u[dyadic])

    # Windows follow the clauses (exponential: last 60%; polynomial: dyadic
    # n), but the contest between the two fitted models is scored on the
    # union of both windows: a short late window makes any smooth tail look
    # log-linear, so own-window R^2 values are not comparable.
    union_idx = sorted(set(range(start, len(n_u))) | set(dyadic))
    log_m = np.log(m_u[union_idx])
    n_union = n_u[union_idx]

    def _score(pred):
        resid = log_m - pred
        ss_tot = float(np.sum((log_m - log_m.mean()) ** 2))
        return 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0

    candidates = []
    if exp_fit.npoints >= 3 and exp_fit.slope < 0 and exp_fit.r2 >= R2_FLOOR:
        score = _score(exp_fit.slope * n_union + exp_fit.intercept)
        candidates.append((score, 0, DecayClass("exponential", -exp_fit.slope, exp_fit.r2,
                                                "exponential-tail clause")))
    alpha = -poly_fit.slope
    if poly_fit.npoints >= 3 and alpha > 1.0 and poly_fit.r2 >= R2_FLOOR:
        score = _score(poly_fit.slope * np.log(n_union) + poly_fit.intercept)
        candidates.append((score, 1, DecayClass("polynomial", alpha - 1.0, poly_fit.r2,
                                                "polynomial-tail clause")))

    if not candidates:
        raise AmbiguousDecay(
            f"no regression reached R^2 {R2_FLOOR} (exp {exp_fit.r2:.3f}, poly {poly_fit.r2:.3f})")
    candidates.sort(key=lambda t: (-t[0], t[1]))
    best = candidates[0][2]

    if observable_class == "log_modulus":
        # weaker modulus of continuity: state only the polynomial-class bound
        return DecayClass("log_modulus", log_modulus_gamma, best.r2,
                          "log-modulus observables over " + best.provenance)
    return best
