"""Map families: interval maps with expanding, intermittent, critical or
skew-product behaviour, together with their derivatives, branch structure
and critical/singular sets.

Families
--------
circle_covering(k)      theta -> k*theta mod 1, |Df| = k
tent()                  2x on [0,1/2), 2-2x on [1/2,1]
quadratic(a)            x -> x^2 - a on the invariant interval [-a, a^2-a], a in [1,2]
lsv(alpha)              x(1 + 2^a x^a) on [0,1/2), 2x-1 on [1/2,1]; neutral fixed point at 0
gauss(r_max)            1/x mod 1 with branches r = 1..r_max on [1/(r+1), 1/r)
four_branch_nonergodic() piecewise-linear Lebesgue-preserving map whose halves are invariant
tangent_intermittent()  x + x^2 on [0, g), linear on [g, 1]; quadratic tangency at 0 (no acip)
viana(k, a, eps)        skew product (k*theta mod 1, x^2 + a + eps*sin(2*pi*theta))

Branch domains are half-open [left, right); the rightmost endpoint of phase
space belongs to the last branch.  Points outside phase space by more than
CLAMP_SLACK raise OutOfDomain; smaller excursions are clamped.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AtCriticalPoint, GaussTruncationWarning, NotMarkov, OutOfDomain

CLAMP_SLACK = 2.0 ** -40

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0  # g with g + g^2 = 1
_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class CriticalPoint:
    """A critical, singular or discontinuity point.

    `order` is the exponent ell with |Df(x)| ~ |x - c|^(ell - 1) near c; for
    kind='critical' it lies in (0, inf).  Singular points may carry a
    negative order (Gauss: ell = -1, i.e. |Df| ~ |x|^-2).  `nondeg_beta` is
    the non-degeneracy exponent kept as metadata.
    """

    location: float
    order: float
    kind: str  # 'critical' | 'singular' | 'discontinuity'
    nondeg_beta: float = 1.0


@dataclass(frozen=True)
class Branch:
    index: int
    left: float
    right: float
    orientation: int  # +1 increasing, -1 decreasing


@dataclass(frozen=True)
class MapSpec:
    """A concrete map; immutable, all operations pure."""

    family: str
    params: tuple = ()
    interval: tuple = (0.0, 1.0)
    base_interval: tuple | None = None  # Viana only: angle domain [0,1)
    critical: tuple = field(default=())

    # ---------------------------------------------------------------- helpers

    def _clamp(self, x: float) -> float:
        lo, hi = self.interval
        if x < lo:
            if lo - x > CLAMP_SLACK:
                raise OutOfDomain(f"{x} below phase space [{lo}, {hi}]")
            return lo
        if x > hi:
            if x - hi > CLAMP_SLACK:
                raise OutOfDomain(f"{x} above phase space [{lo}, {hi}]")
            return hi
        return x

    # ---------------------------------------------------------------- eval

    def eval(self, x):
        """One step of the map.  Viana takes and returns a pair (theta, x)."""
        fam = self.family
        if fam == "viana":
            return self._viana_eval(x)
        x = self._clamp(float(x))
        if fam == "circle_covering":
            k = self.params[0]
            y = math.fmod(k * x, 1.0)
            return y
        if fam == "tent":
            return 2.0 * x if x < 0.5 else 2.0 - 2.0 * x
        if fam == "quadratic":
            a = self.params[0]
            return self._clamp(x * x - a)
        if fam == "lsv":
            alpha = self.params[0]
            if x < 0.5:
                return x * (1.0 + (2.0 * x) ** alpha)
            return 2.0 * x - 1.0
        if fam == "gauss":
            if x == 0.0:
                return 0.0
            q = 1.0 / x
            r = math.floor(q)
            if q == r:  # left endpoint of branch r-1: tie-break keeps it there
                r -= 1
            return q - r
        if fam == "four_branch":
            if x < 0.25:
                return 2.0 * x
            if x < 0.5:
                return -2.0 * x + 1.0
            if x < 0.75:
                return 2.0 * x - 0.5
            return -2.0 * x + 2.5
        if fam == "tangent":
            g = _GOLDEN
            if x < g:
                return x + x * x
            return (x - g) / (1.0 - g)
        raise ValueError(f"unknown family {fam!r}")

    def _viana_eval(self, pt):
        k, a, eps = self.params
        theta, x = pt
        theta = theta % 1.0
        x = self._clamp(float(x))
        theta2 = math.fmod(k * theta, 1.0)
        x2 = x * x + a + eps * math.sin(2.0 * math.pi * theta)
        return (theta2, self._clamp(x2))

    # ---------------------------------------------------------------- deriv

    def deriv(self, x):
        """Df(x).  Viana returns the 2x2 matrix as a numpy array."""
        if self.family == "viana":
            k, a, eps = self.params
            theta, xv = x
            if xv == 0.0:
                raise AtCriticalPoint("fiber derivative vanishes at x = 0")
            return np.array(
                [[float(k), 0.0],
                 [eps * 2.0 * math.pi * math.cos(2.0 * math.pi * (theta % 1.0)), 2.0 * xv]]
            )
        x = float(x)
        for c in self.critical:
            if x == c.location:
                raise AtCriticalPoint(f"x = {x} is in the critical set")
        fam = self.family
        if fam == "circle_covering":
            return float(self.params[0])
        if fam == "tent":
            return 2.0 if x < 0.5 else -2.0
        if fam == "quadratic":
            return 2.0 * x
        if fam == "lsv":
            alpha = self.params[0]
            if x < 0.5:
                return 1.0 + (1.0 + alpha) * (2.0 ** alpha) * x ** alpha
            return 2.0
        if fam == "gauss":
            return -1.0 / (x * x)
        if fam == "four_branch":
            return 2.0 if (x < 0.25 or 0.5 <= x < 0.75) else -2.0
        if fam == "tangent":
            return 1.0 + 2.0 * x if x < _GOLDEN else 1.0 / (1.0 - _GOLDEN)
        raise ValueError(f"unknown family {fam!r}")

    def log_abs_deriv(self, x) -> float:
        """log |Df(x)| in one dimension; log of the minimal singular value for Viana.

        The Viana convention matches log ||Df^-1||^-1 summed per step.
        """
        if self.family == "viana":
            m = self.deriv(x)
            return math.log(_min_singular_2x2(m[0, 0], m[1, 0], m[1, 1]))
        return math.log(abs(self.deriv(x)))

    # ---------------------------------------------------------------- orbits

    def orbit_segment(self, x0, n: int) -> list:
        """[x0, f(x0), ..., f^n(x0)], length n + 1."""
        if n < 1:
            raise ValueError("n >= 1 required")
        out = [x0 if self.family == "viana" else self._clamp(float(x0))]
        hits = 0
        gauss_floor = None
        if self.family == "gauss":
            gauss_floor = 1.0 / (self.params[0] + 1.0)
        x = out[0]
        for _ in range(n):
            if gauss_floor is not None and 0.0 < x < gauss_floor:
                hits += 1
            x = self.eval(x)
            out.append(x)
        if hits:
            warnings.warn(
                f"orbit entered the unmodelled Gauss tail {hits} time(s)",
                GaussTruncationWarning,
                stacklevel=2,
            )
        return out

    # ---------------------------------------------------------------- vector paths

    def step_array(self, xs: np.ndarray) -> np.ndarray:
        """Vectorised eval for sampling-heavy estimators (1-d families)."""
        fam = self.family
        x = np.asarray(xs, dtype=float)
        lo, hi = self.interval
        if fam == "circle_covering":
            return (self.params[0] * x) % 1.0
        if fam == "tent":
            return np.where(x < 0.5, 2.0 * x, 2.0 - 2.0 * x)
        if fam == "quadratic":
            a = self.params[0]
            return np.clip(x * x - a, lo, hi)
        if fam == "lsv":
            alpha = self.params[0]
            return np.where(x < 0.5, x * (1.0 + (2.0 * x) ** alpha), 2.0 * x - 1.0)
        if fam == "gauss":
            with np.errstate(divide="ignore"):
                q = np.where(x > 0.0, 1.0 / np.where(x > 0.0, x, 1.0), 0.0)
            return q - np.floor(q)
        if fam == "four_branch":
            return np.select(
                [x < 0.25, x < 0.5, x < 0.75],
                [2.0 * x, -2.0 * x + 1.0, 2.0 * x - 0.5],
                -2.0 * x + 2.5,
            )
        if fam == "tangent":
            g = _GOLDEN
            return np.where(x < g, x + x * x, (x - g) / (1.0 - g))
        raise NotImplementedError(f"no vector path for {fam}")

    @property
    def dyadic_linear(self) -> bool:
        """True for maps whose float orbits collapse onto dyadic rationals.

        Slope-2^k piecewise-linear maps shift mantissa bits out, so every
        binary64 orbit reaches an exactly periodic dyadic point within ~52
        steps.  Statistical estimators must re-inject the lost low bits to
        keep orbit statistics faithful to Lebesgue-typical orbits.
        """
        return self.family in ("circle_covering", "tent", "four_branch")

    def mc_step_array(self, xs: np.ndarray, rng) -> np.ndarray:
        """One vectorised step for Monte Carlo estimators.

        For dyadic-linear families a seeded dither at scale 2^-45 (far below
        any bin width) replaces the entropy the float shift destroys; the
        perturbed process has the same invariant law and lag statistics.
        Other families step exactly.
        """
        ys = self.step_array(xs)
        if self.dyadic_linear:
            lo, hi = self.interval
            ys = ys + rng.uniform(0.0, 2.0 ** -45, ys.shape)
            ys = np.clip(ys, lo, hi)
        return ys

    def mc_stepper(self, x0: float, salt: int = 0):
        """Scalar counterpart of mc_step_array; pure function of (x0, salt).

        Returns step(x) -> x.  Dyadic-linear families get a splitmix64
        dither stream seeded from the bits of x0.
        """
        if not self.dyadic_linear:
            return self.eval
        state = (np.float64(x0).view(np.uint64).item() ^ (salt * 0x9E3779B97F4A7C15)) & _U64
        lo, hi = self.interval
        ev = self.eval

        def step(x, _s=[state]):
            s = (_s[0] + 0x9E3779B97F4A7C15) & _U64
            _s[0] = s
            z = s
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
            z ^= z >> 31
            y = ev(x) + (z >> 19) * 2.0 ** -90  # uniform-ish in [0, 2^-45)
            return y if y <= hi else hi

        return step

    def log_abs_deriv_array(self, xs: np.ndarray) -> np.ndarray:
        fam = self.family
        x = np.asarray(xs, dtype=float)
        if fam == "circle_covering":
            return np.full_like(x, math.log(self.params[0]))
        if fam == "tent" or fam == "four_branch":
            return np.full_like(x, math.log(2.0))
        if fam == "quadratic":
            return np.log(np.abs(2.0 * x))
        if fam == "lsv":
            alpha = self.params[0]
            d = np.where(x < 0.5, 1.0 + (1.0 + alpha) * (2.0 ** alpha) * np.abs(x) ** alpha, 2.0)
            return np.log(d)
        if fam == "gauss":
            return -2.0 * np.log(np.abs(x))
        if fam == "tangent":
            g = _GOLDEN
            return np.log(np.where(x < g, 1.0 + 2.0 * x, 1.0 / (1.0 - g)))
        raise NotImplementedError(f"no vector path for {fam}")

    # ---------------------------------------------------------------- structure

    def critical_set(self) -> tuple:
        return self.critical

    def critical_distance(self, x, kinds=("critical", "singular")) -> float:
        """Distance to the critical/singular set; +inf when empty.

        Slope corners and jumps (kind='discontinuity') are excluded by
        default: the derivative stays bounded away from 0 and infinity there,
        so they play no role in recurrence-time accounting.
        """
        if self.family == "viana":
            return abs(x[1])
        pts = [c for c in self.critical if c.kind in kinds]
        if not pts:
            return math.inf
        x = float(x)
        return min(abs(x - c.location) for c in pts)

    def markov_branches(self) -> list:
        """Full branches onto phase space, ordered left to right.

        Raises NotMarkov for families without the full-branch property
        (quadratic: unbounded distortion at the critical point; four-branch:
        branches cover only half the space; viana: two-dimensional).
        """
        fam = self.family
        if fam == "circle_covering":
            k = self.params[0]
            return [Branch(j, j / k, (j + 1) / k, +1) for j in range(k)]
        if fam == "tent":
            return [Branch(0, 0.0, 0.5, +1), Branch(1, 0.5, 1.0, -1)]
        if fam == "gauss":
            r_max = self.params[0]
            return [Branch(r, 1.0 / (r + 1.0), 1.0 / r, -1) for r in range(1, r_max + 1)]
        if fam == "lsv":
            return [Branch(0, 0.0, 0.5, +1), Branch(1, 0.5, 1.0, +1)]
        if fam == "tangent":
            return [Branch(0, 0.0, _GOLDEN, +1), Branch(1, _GOLDEN, 1.0, +1)]
        raise NotMarkov(f"{fam} is not a full-branch Markov map")

    def branch_apply(self, branch: Branch, x: float) -> float:
        """The branch formula extended smoothly past its domain endpoints.

        Used when stepping along a prescribed symbolic word, where rounding
        at a branch closure must not leak into the neighbouring branch.
        """
        fam = self.family
        if fam == "circle_covering":
            return self.params[0] * x - branch.index
        if fam == "tent":
            return 2.0 * x if branch.index == 0 else 2.0 - 2.0 * x
        if fam == "gauss":
            return 1.0 / x - branch.index
        if fam == "lsv":
            alpha = self.params[0]
            return x * (1.0 + (2.0 * x) ** alpha) if branch.index == 0 else 2.0 * x - 1.0
        if fam == "tangent":
            return x + x * x if branch.index == 0 else (x - _GOLDEN) / (1.0 - _GOLDEN)
        raise NotMarkov(f"{fam} has no branch formulas")

    def branch_log_abs_deriv(self, branch: Branch, x: float) -> float:
        fam = self.family
        if fam == "circle_covering":
            return math.log(self.params[0])
        if fam == "tent":
            return math.log(2.0)
        if fam == "gauss":
            return -2.0 * math.log(abs(x))
        if fam == "lsv":
            alpha = self.params[0]
            if branch.index == 0:
                return math.log(1.0 + (1.0 + alpha) * (2.0 ** alpha) * abs(x) ** alpha)
            return math.log(2.0)
        if fam == "tangent":
            if branch.index == 0:
                return math.log(1.0 + 2.0 * x)
            return -math.log(1.0 - _GOLDEN)
        raise NotMarkov(f"{fam} has no branch formulas")

    def branch_preimage(self, branch: Branch, y: float) -> float:
        """x in the branch domain with f(x) = y; closed form where available."""
        fam = self.family
        if fam == "circle_covering":
            k = self.params[0]
            return (y + branch.index) / k
        if fam == "tent":
            return y / 2.0 if branch.index == 0 else 1.0 - y / 2.0
        if fam == "gauss":
            return 1.0 / (y + branch.index)
        if fam == "lsv":
            if branch.index == 1:
                return (y + 1.0) / 2.0
            return _bisect_increasing(lambda x: self.eval(x), 0.0, 0.5, y)
        if fam == "tangent":
            if branch.index == 0:
                return (-1.0 + math.sqrt(1.0 + 4.0 * y)) / 2.0
            return y * (1.0 - _GOLDEN) + _GOLDEN
        raise NotMarkov(f"{fam} has no branch inverses")

    @property
    def modeled_deficit(self) -> float:
        """Phase-space mass outside the declared branches (Gauss truncation)."""
        if self.family == "gauss":
            return 1.0 / (self.params[0] + 1.0)
        return 0.0


def _min_singular_2x2(a, b, c) -> float:
    """Smallest singular value of [[a, 0], [b, c]]."""
    s = a * a + b * b + c * c
    det = abs(a * c)
    disc = math.sqrt(max(s * s - 4.0 * det * det, 0.0))
    lam_min = max((s - disc) / 2.0, 0.0)
    return math.sqrt(lam_min) if lam_min > 0.0 else det / math.sqrt(s)


def _bisect_increasing(f, lo, hi, target):
    """Bisect f(x) = target on [lo, hi] down to ulp adjacency."""
    a, b = lo, hi
    fa = f(a) - target
    for _ in range(200):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        fm = f(m) - target
        if fm == 0.0:
            return m
        if (fa < 0) == (fm < 0):
            a, fa = m, fm
        else:
            b = m
    return a if abs(fa) <= abs(f(b) - target) else b


# -------------------------------------------------------------------- factories


def circle_covering(k: int) -> MapSpec:
    if k < 1:
        raise ValueError("covering degree must be a positive integer")
    return MapSpec("circle_covering", (int(k),), (0.0, 1.0))


def tent() -> MapSpec:
    crit = (CriticalPoint(0.5, 1.0, "discontinuity"),)
    return MapSpec("tent", (), (0.0, 1.0), critical=crit)


def quadratic(a: float) -> MapSpec:
    if not 1.0 <= a <= 2.0:
        raise ValueError("quadratic family requires a in [1, 2]")
    crit = (CriticalPoint(0.0, 2.0, "critical"),)
    return MapSpec("quadratic", (float(a),), (-a, a * a - a), critical=crit)


def lsv(alpha: float) -> MapSpec:
    if not 0.0 < alpha < 1.0:
        raise ValueError("intermittency exponent alpha must lie in (0, 1)")
    crit = (
        CriticalPoint(0.0, 1.0, "singular"),
        CriticalPoint(0.5, 1.0, "discontinuity"),
    )
    return MapSpec("lsv", (float(alpha),), (0.0, 1.0), critical=crit)


def gauss(r_max: int = 10 ** 6) -> MapSpec:
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    crit = (CriticalPoint(0.0, -1.0, "singular", nondeg_beta=2.0),)
    return MapSpec("gauss", (int(r_max),), (0.0, 1.0), critical=crit)


def four_branch_nonergodic() -> MapSpec:
    crit = (
        CriticalPoint(0.25, 1.0, "discontinuity"),
        CriticalPoint(0.5, 1.0, "discontinuity"),
        CriticalPoint(0.75, 1.0, "discontinuity"),
    )
    return MapSpec("four_branch", (), (0.0, 1.0), critical=crit)


def tangent_intermittent() -> MapSpec:
    """Neutral fixed point with quadratic tangency (f(x) = x + x^2 near 0)."""
    crit = (
        CriticalPoint(0.0, 1.0, "singular"),
        CriticalPoint(_GOLDEN, 1.0, "discontinuity"),
    )
    return MapSpec("tangent", (), (0.0, 1.0), critical=crit)


def viana(k: int, a: float, eps: float) -> MapSpec:
    """Skew product over theta -> k*theta; fiber interval chosen invariant.

    Requires a + eps <= 1/4 and a - eps >= -B where B is the perturbed
    positive fixed point, so that the declared fiber interval maps into
    itself.
    """
    if k < 2:
        raise ValueError("base degree k must be >= 2")
    if a + eps > 0.25:
        raise ValueError("a + eps must be <= 1/4 for an invariant fiber interval")
    b = (1.0 + math.sqrt(1.0 - 4.0 * (a + eps))) / 2.0
    if a - eps < -b:
        raise ValueError("a - eps < -B: fiber interval escapes; decrease eps or raise a")
    crit = (CriticalPoint(0.0, 2.0, "critical"),)
    return MapSpec("viana", (int(k), float(a), float(eps)), (-b, b),
                   base_interval=(0.0, 1.0), critical=crit)


FAMILY_FACTORIES = {
    "circle_covering": circle_covering,
    "tent": tent,
    "quadratic": quadratic,
    "lsv": lsv,
    "gauss": gauss,
    "four_branch_nonergodic": four_branch_nonergodic,
    "tangent_intermittent": tangent_intermittent,
    "viana": viana,
}


def from_config(spec: dict) -> MapSpec:
    """Build a MapSpec from config keys: {'family': name, ...params}."""
    d = dict(spec)
    name = d.pop("family", None)
    if name not in FAMILY_FACTORIES:
        raise ValueError(f"unknown map family {name!r}; known: {sorted(FAMILY_FACTORIES)}")
    return FAMILY_FACTORIES[name](**d)
