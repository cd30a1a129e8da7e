"""Benedicks-Carleson induced-Markov-map construction for the quadratic
family at a near 2: I_r partition of the critical neighbourhood, binding
periods, escape partition, return partition and tail estimation.

Geometry: Delta = (-delta, delta) and Delta_hat = (-delta_hat, delta_hat)
with delta = e^-r_delta, delta_hat = e^-r_delta_hat (integer radii snap the
grid cells I_r = [e^-r, e^-r+1) to exact boundaries).  An interval's image
is advanced one step at a time; when it touches Delta and spans three or
more grid cells it is chopped along cell boundaries, pieces covering Delta
become Markov branches with return time R = current step, pieces landing in
deep cells open binding windows, and pieces reaching large scale escape.

Everything is binary64 with honest mass accounting: pieces below the width
floor and pieces beyond the element budget are dropped into the reported
deficit, never silently merged into branches.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceeded, ResidueTooLarge
from .maps import quadratic
from .sampling import substream
from .stats import log_linear_fit
from .tower import InducedMarkovMap, TowerBranch

log = logging.getLogger(__name__)

WIDTH_FLOOR = 1e-15
SOLVE_RESIDUAL = 1e-9


# --------------------------------------------------------------- config


@dataclass(frozen=True)
class BCConfig:
    """Constants of the construction.

    lam:   target expansion exponent, in (0, log 2)
    alpha: recurrence exponent (binding windows close at e^{-2 alpha j})
    delta: inner critical radius; the grid snaps it to e^-r_delta
    iota:  delta_hat = delta ** iota
    n_max: iteration cap for the partition constructions
    growth_c: the constant C in the hyperbolicity condition D_n >= C e^{lam n}
    subdivide_r2: refine each I_r into r^2 equal cells (the parameter
        exclusion needs this; the dynamical construction defaults to off)
    strict: enforce the full separation chain lam >> alpha >> delta_hat >>
        delta (alpha <= lam/10, delta_hat <= alpha/10, delta <= delta_hat^3).
        Off by default: the chain forces delta below any numerically
        constructible scale, so only the ordering is required.
    """

    lam: float = 0.6
    alpha: float = 0.05
    delta: float = math.exp(-2.0)
    iota: float = 0.5
    n_max: int = 1500
    growth_c: float = 0.5
    subdivide_r2: bool = False
    strict: bool = False
    max_elements: int = 250_000
    r_cap_extra: int = 12  # track cells down to r_delta + this; deeper core is deficit

    def __post_init__(self):
        if not 0.0 < self.lam < math.log(2.0):
            raise ValueError("lam must lie in (0, log 2)")
        if not 0.0 < self.alpha < self.lam:
            raise ValueError("alpha must lie in (0, lam)")
        if not 0.0 < self.delta < 1.0 or not 0.0 < self.iota <= 1.0:
            raise ValueError("delta in (0,1) and iota in (0,1] required")
        if self.r_delta_hat < 1 or self.r_delta <= self.r_delta_hat:
            raise ValueError("need integer radii 1 <= r_delta_hat < r_delta")
        if self.strict:
            if self.alpha > self.lam / 10.0:
                raise ValueError("strict chain: alpha <= lam/10")
            if self.delta_hat > self.alpha / 10.0:
                raise ValueError("strict chain: delta_hat <= alpha/10")
            if self.delta > self.delta_hat ** 3:
                raise ValueError("strict chain: delta <= delta_hat^3")

    @property
    def delta_hat(self) -> float:
        return self.delta ** self.iota

    @property
    def r_delta(self) -> int:
        return math.ceil(-math.log(self.delta) - 1e-12)

    @property
    def r_delta_hat(self) -> int:
        return math.ceil(-math.log(self.delta_hat) - 1e-12)

    # grid radii snapped to integer r
    @property
    def delta_grid(self) -> float:
        return math.exp(-self.r_delta)

    @property
    def delta_hat_grid(self) -> float:
        return math.exp(-self.r_delta_hat)


# --------------------------------------------------------- I_r partition


@dataclass(frozen=True)
class IrPartition:
    """Cells I_r = [e^-r, e^-(r-1)) and I_-r = -I_r for |r| > r_delta_hat,
    optionally subdivided into r^2 equal cells."""

    r_delta: int
    r_delta_hat: int
    subdivide_r2: bool = False

    @property
    def delta(self) -> float:
        return math.exp(-self.r_delta)

    @property
    def delta_hat(self) -> float:
        return math.exp(-self.r_delta_hat)

    def depth_of(self, x: float) -> int:
        """Signed r with x in I_r; 0 is never returned (x != 0 required)."""
        r = max(math.ceil(-math.log(abs(x))), 1)
        return r if x > 0 else -r

    def boundaries(self, r_cap: int):
        """Positive cell boundaries: delta_hat = e^-r_delta_hat down to
        e^-r_cap, with the r^2 subdivision points when enabled."""
        pts = [math.exp(-self.r_delta_hat)]
        for r in range(self.r_delta_hat + 1, r_cap + 1):
            hi, lo = math.exp(-r + 1), math.exp(-r)
            if self.subdivide_r2:
                m = r * r
                pts.extend(hi - (hi - lo) * j / m for j in range(1, m))
            pts.append(lo)
        return pts

    def _subcells_within(self, a: float, b: float) -> int:
        """Subcells met by [a, b] when both ends lie in the same base cell."""
        r = self.depth_of(a)
        hi, lo = math.exp(-r + 1), math.exp(-r)
        m = r * r
        w = (hi - lo) / m
        return int((b - a) / w) + 1

    def span_count(self, lo: float, hi: float) -> int:
        """Number of partition elements of Delta_hat met by [lo, hi]; a
        neighbourhood of 0 meets infinitely many."""
        dh = self.delta_hat
        lo, hi = max(lo, -dh), min(hi, dh)
        if lo >= hi:
            return 0
        if lo <= 0.0 <= hi:
            return 10 ** 9
        a, b = (lo, hi) if lo > 0 else (-hi, -lo)
        base = self.depth_of(a) - self.depth_of(b) + 1
        if not self.subdivide_r2:
            return base
        if base == 1:
            return self._subcells_within(a, b)
        if base == 2:
            edge = math.exp(-self.depth_of(a) + 1)
            return (self._subcells_within(a, math.nextafter(edge, 0.0))
                    + self._subcells_within(edge, b))
        return 3  # >= 3 base cells certainly span >= 3 subcells

    def interval_depth(self, lo: float, hi: float) -> int:
        """The depth rule r = max{|r| : [lo,hi] meets I_r}."""
        if lo <= 0.0 <= hi:
            return 10 ** 9
        return self.depth_of(lo) if lo > 0 else self.depth_of(hi)


# ------------------------------------------------------ critical orbit


def critical_orbit(a: float, n: int) -> np.ndarray:
    """c_j = f^j(c_0) for j = 0..n, with c_0 = f(0) = -a."""
    out = np.empty(n + 1)
    c = -a
    for j in range(n + 1):
        out[j] = c
        c = c * c - a
    return out


@dataclass(frozen=True)
class BCReport:
    hyperbolicity: bool
    slow_recurrence: bool
    first_hyperbolicity_violation: int | None
    first_recurrence_violation: int | None
    min_hyperbolicity_margin: float  # min over n of log D_n - (log C + lam n)
    min_recurrence_margin: float     # min over n of log|c_n| + alpha n


def check_bc_conditions(a: float, n_checks: int, growth_c: float | None = None,
                        cfg: BCConfig = BCConfig()) -> BCReport:
    """Verify D_n >= C e^{lam n} and |c_n| >= e^{-alpha n} for n <= n_checks.

    D_n = |Df^n(f(c))| is accumulated in log space so no overflow occurs.
    n_checks = 0 is vacuously true.
    """
    if not 1.0 <= a <= 2.0:
        raise ValueError("a must lie in [1, 2]")
    c_const = cfg.growth_c if growth_c is None else growth_c
    orbit = critical_orbit(a, n_checks)
    log_d = 0.0
    hyp_viol = rec_viol = None
    hyp_margin = rec_margin = math.inf
    for n in range(1, n_checks + 1):
        log_d += math.log(abs(2.0 * orbit[n - 1]))
        margin = log_d - (math.log(c_const) + cfg.lam * n)
        hyp_margin = min(hyp_margin, margin)
        if margin < 0 and hyp_viol is None:
            hyp_viol = n
        rmargin = math.log(abs(orbit[n])) + cfg.alpha * n
        rec_margin = min(rec_margin, rmargin)
        if rmargin < 0 and rec_viol is None:
            rec_viol = n
    return BCReport(hyp_viol is None, rec_viol is None, hyp_viol, rec_viol,
                    hyp_margin, rec_margin)


# ---------------------------------------------------------- binding


def _point_binding(a: float, x: float, alpha: float, cap: int,
                   orbit: np.ndarray | None = None) -> int:
    """p(x) = max{k : |f^{j+1}(x) - f^{j+1}(0)| <= e^{-2 alpha j}, j < k}."""
    if orbit is None:
        orbit = critical_orbit(a, cap + 1)
    y = x * x - a  # f(x)
    for j in range(cap):
        if abs(y - orbit[j]) > math.exp(-2.0 * alpha * j):
            return j
        y = y * y - a
    return cap


def binding_period(a: float, r: int, cfg: BCConfig = BCConfig(),
                   orbit: np.ndarray | None = None) -> int:
    """Binding period p(r): iterate the endpoints (and midpoint) of
    hat I_r = I_{r+1} u I_r u I_{r-1} alongside the critical orbit until
    |f^{j+1}(x) - f^{j+1}(c)| <= e^{-2 alpha j} first fails.

    Logs a diagnostic when the bound p + 1 <= 3r/lam is missed (it holds
    once r_delta is large enough).
    """
    if r < cfg.r_delta_hat:
        raise ValueError(f"r = {r} is outside Delta_hat (r_delta_hat = {cfg.r_delta_hat})")
    lo, hi = math.exp(-(r + 1)), math.exp(-r + 2)
    if orbit is None:
        orbit = critical_orbit(a, cfg.n_max + 1)
    ps = [_point_binding(a, x, cfg.alpha, cfg.n_max, orbit)
          for x in (lo, 0.5 * (lo + hi), hi)]
    p = min(ps)
    if p >= cfg.n_max:
        raise CapExceeded(f"binding inequality never failed within n_max = {cfg.n_max}")
    if p + 1 > 3.0 * r / cfg.lam:
        log.warning("binding bound missed at r=%d: p+1=%d > 3r/lam=%.2f "
                    "(r_delta too small for the asymptotic bound)", r, p + 1,
                    3.0 * r / cfg.lam)
    return p


def binding_period_generalized(m, x: float, gammas) -> int:
    """p(x) = max{p : |f^k(x) - f^k(c)| <= gamma_k |f^k(c) - c|, 1 <= k <= p-1},
    capped at len(gammas).

    gammas must be monotonically decreasing in (0, 1); summability within
    the horizon is the caller's hypothesis.  The cap is returned (not
    raised) when the inequality never fails: the horizon is the quantifier
    range.
    """
    gammas = list(gammas)
    if any(g <= 0 or g >= 1 for g in gammas):
        raise ValueError("gammas must lie in (0, 1)")
    if any(b > a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gammas must be monotonically decreasing")
    crit = [p for p in m.critical_set() if p.kind == "critical"]
    if not crit:
        raise ValueError("map has no critical point")
    c = crit[0].location
    horizon = len(gammas)
    y, z = x, c
    for k in range(1, horizon + 1):
        y, z = m.eval(y), m.eval(z)
        if abs(y - z) > gammas[k - 1] * abs(z - c):
            return k  # p = k: condition must hold for all indices <= p-1
    return horizon


# ------------------------------------------------------ escape elements


@dataclass
class EscapeElement:
    """An interval of the partition with its itinerary."""

    left: float
    right: float
    created: int = 0
    events: list = field(default_factory=list)  # (kind, time, depth, p)
    escape_time: int | None = None
    essential_depth_sum: int = 0
    escapes: int = 0
    markov: bool = False
    return_time: int | None = None
    orientation: int = 1

    @property
    def length(self) -> float:
        return self.right - self.left

    def record(self, kind: str, time: int, depth: int = 0, p: int = 0) -> None:
        self.events.append((kind, time, depth, p))
        if kind == "essential_return":
            self.essential_depth_sum += depth
        if kind == "escape":
            self.escapes += 1
            if self.escape_time is None:
                self.escape_time = time


# ------------------------------------------------------------ the engine


class _Partitioner:
    """Shared escape/return partition driver on dynamical intervals.

    mode 'escape': elements resolve at their first escape (E assigned).
    mode 'return': escapes are recorded and elements continue until a
    Markov return onto Delta.
    """

    def __init__(self, a: float, cfg: BCConfig, mode: str):
        self.a = a
        self.cfg = cfg
        self.mode = mode
        self.grid = IrPartition(cfg.r_delta, cfg.r_delta_hat, cfg.subdivide_r2)
        self.delta = cfg.delta_grid
        self.delta_hat = cfg.delta_hat_grid
        self.escape_width = (math.e - 1.0) * self.delta_hat
        self.orbit = critical_orbit(a, cfg.n_max + 2)
        self.edge_min = self.delta_hat / max(math.log(1.0 / self.delta_hat), 1.0) ** 2
        self.active: list[EscapeElement] = []
        self.images: list[tuple] = []     # (y_left, y_right) per active element
        self.bind_until: list[int] = []
        self.resolved: list[EscapeElement] = []
        self.dropped_mass = 0.0
        self.markov_fractions: list[float] = []
        self.r_cap = min(int(-math.log(WIDTH_FLOOR)), cfg.r_delta + cfg.r_cap_extra)

    # -- elementary dynamics ------------------------------------------------

    def _f(self, y: float) -> float:
        return y * y - self.a

    def _fk(self, x: float, k: int) -> float:
        a = self.a
        for _ in range(k):
            x = x * x - a
        return x

    def _solve(self, xl: float, xr: float, yl: float, yr: float,
               k: int, target: float) -> tuple:
        """(x, f^k(x)) with x in [xl, xr], f^k(x) = target up to
        SOLVE_RESIDUAL; f^k monotone on the element.

        yl, yr must equal f^k(xl), f^k(xr) under the same float composition
        (images are advanced by exactly that recurrence), so the brackets
        are consistent.  Regula falsi with a bisection safeguard.
        """
        sgn = 1.0 if yl < yr else -1.0
        a, b = xl, xr
        fa, fb = sgn * (yl - target), sgn * (yr - target)
        if fa > 0:
            return xl, yl
        if fb < 0:
            return xr, yr
        best_x, best_y, best_err = xl, yl, abs(fa)
        for it in range(120):
            if fb != fa:
                x = a - fa * (b - a) / (fb - fa)
            else:
                x = 0.5 * (a + b)
            if not (a < x < b) or it % 3 == 2:  # periodic bisection guard
                x = 0.5 * (a + b)
            if x <= a or x >= b:
                break
            y = self._fk(x, k)
            fx = sgn * (y - target)
            if abs(fx) < best_err:
                best_x, best_y, best_err = x, y, abs(fx)
            if abs(fx) <= SOLVE_RESIDUAL:
                return x, y
            if fx < 0:
                a, fa = x, fx
            else:
                b, fb = x, fx
        return best_x, best_y

    # -- element management ---------------------------------------------------

    def _push(self, el: EscapeElement, image: tuple, bind_until: int) -> None:
        if el.length < WIDTH_FLOOR:
            self.dropped_mass += max(el.length, 0.0)
            return
        self.active.append(el)
        self.images.append(image)
        self.bind_until.append(bind_until)

    def _enforce_budget(self) -> None:
        over = len(self.active) - self.cfg.max_elements
        if over <= 0:
            return
        widths = np.array([el.length for el in self.active])
        drop_idx = set(np.argpartition(widths, over)[:over].tolist())
        self.dropped_mass += float(widths[sorted(drop_idx)].sum())
        keep = [i for i in range(len(self.active)) if i not in drop_idx]
        self.active = [self.active[i] for i in keep]
        self.images = [self.images[i] for i in keep]
        self.bind_until = [self.bind_until[i] for i in keep]

    # -- seeding ------------------------------------------------------------

    def seed(self, j_lo: float, j_hi: float) -> None:
        """Pre-split J along the grid where it meets Delta_hat; cells inside
        Delta u I_{+-r_delta} open binding windows at time 0 (the root
        partition refines the binding partition into I_r)."""
        segments = []
        cuts = [j_lo]
        if j_lo < self.delta_hat and j_hi > -self.delta_hat:
            bounds = sorted({-b for b in self.grid.boundaries(self.r_cap)}
                            | set(self.grid.boundaries(self.r_cap)))
            cuts.extend(b for b in bounds if j_lo < b < j_hi)
        cuts.append(j_hi)
        cuts = sorted(set(cuts))
        deep = math.exp(-self.r_cap)
        for lo, hi in zip(cuts, cuts[1:]):
            if -deep <= lo and hi <= deep:
                self.dropped_mass += hi - lo  # unresolvable core around c
                continue
            segments.append((lo, hi))
        for lo, hi in segments:
            el = EscapeElement(lo, hi)
            mid = 0.5 * (lo + hi)
            bind_to = 0
            if abs(mid) < math.exp(-self.cfg.r_delta + 1):  # Delta u I_{+-r_delta}
                r = abs(self.grid.interval_depth(lo, hi))
                p = self._interval_binding(lo, hi, 0)
                el.record("essential_return", 0, r, p)
                bind_to = p + 1
            self._push(el, (lo, hi), bind_to)

    def _interval_binding(self, y_lo: float, y_hi: float, k: int) -> int:
        cap = max(self.cfg.n_max - k, 1)
        return min(_point_binding(self.a, y, self.cfg.alpha, cap, self.orbit)
                   for y in (y_lo, 0.5 * (y_lo + y_hi), y_hi))

    # -- the main loop --------------------------------------------------------

    def run(self) -> None:
        cfg = self.cfg
        for k in range(1, cfg.n_max + 1):
            if not self.active:
                break
            self._advance()
            self._classify(k)
            self._enforce_budget()

    def _advance(self) -> None:
        a = self.a
        ims = self.images
        for i in range(len(ims)):
            u, v = ims[i]
            ims[i] = (u * u - a, v * v - a)

    def _classify(self, k: int) -> None:
        delta, dhat = self.delta, self.delta_hat
        keep_el, keep_im, keep_bind = [], [], []
        chop_list = []
        for i, el in enumerate(self.active):
            u, v = self.images[i]
            lo, hi = (u, v) if u <= v else (v, u)
            if k < self.bind_until[i]:
                keep_el.append(el); keep_im.append((u, v)); keep_bind.append(self.bind_until[i])
                continue
            touches_delta = lo < delta and hi > -delta
            if touches_delta and self.grid.span_count(lo, hi) >= 3:
                chop_list.append((el, u, v, k))
                continue
            bind_to = self.bind_until[i]
            if touches_delta or (lo < math.exp(-self.cfg.r_delta + 1)
                                 and hi > -math.exp(-self.cfg.r_delta + 1)):
                r = self.grid.interval_depth(lo, hi)
                p = self._interval_binding(lo, hi, k)
                el.record("inessential_return", k, min(r, self.r_cap), p)
                bind_to = k + p + 1
            elif lo < dhat and hi > -dhat and max(abs(lo), abs(hi)) < dhat:
                r = self.grid.interval_depth(lo, hi)
                p = self._interval_binding(lo, hi, k)
                el.record("inessential_escape", k, min(r, self.r_cap), p)
                bind_to = k + p + 1
            elif hi - lo >= self.escape_width:
                el.record("escape", k)
                if self.mode == "escape":
                    self.resolved.append(el)
                    continue
            keep_el.append(el); keep_im.append((u, v)); keep_bind.append(bind_to)
        self.active, self.images, self.bind_until = keep_el, keep_im, keep_bind
        for el, u, v, kk in chop_list:
            self._chop(el, u, v, kk)

    # -- chopping -------------------------------------------------------------

    def _chop(self, el: EscapeElement, u: float, v: float, k: int) -> None:
        lo, hi = (u, v) if u <= v else (v, u)
        delta, dhat = self.delta, self.delta_hat
        covers = lo <= -delta and hi >= delta
        increasing = u <= v

        # grid targets inside the image
        bounds = self.grid.boundaries(self.r_cap)
        targets = sorted({b for b in bounds if lo < b < hi}
                         | {-b for b in bounds if lo < -b < hi})
        if covers:
            # everything strictly inside Delta belongs to the Markov piece
            targets = [t for t in targets if abs(t) >= delta]

        # x-positions of the image cuts; f^k is monotone on the element.
        # Each cut carries the solver's own f^k value so children inherit
        # float-consistent image endpoints.  Knots are assembled in
        # ascending-x order: for a decreasing branch that is descending
        # target order.
        solved = [self._solve(el.left, el.right, u, v, k, t) for t in targets]
        if increasing:
            knots = [(el.left, u)] + solved + [(el.right, v)]
            cuts = [lo] + targets + [hi]
        else:
            knots = [(el.left, u)] + solved[::-1] + [(el.right, v)]
            cuts = [hi] + targets[::-1] + [lo]
        # float noise can misorder hairline cuts: clamp ascending
        xs = [knots[0][0]]
        ys = [knots[0][1]]
        for x, y in knots[1:]:
            xs.append(min(max(x, xs[-1]), el.right))
            ys.append(y)
        pieces = []
        for i in range(len(xs) - 1):
            ia, ib = cuts[i], cuts[i + 1]
            plo, phi = (ia, ib) if ia <= ib else (ib, ia)
            pieces.append([plo, phi, xs[i], xs[i + 1], ys[i], ys[i + 1]])

        # glue: sub-floor slivers and under-sized outer edges join their
        # inner neighbour (never across the Markov block)
        merged = []
        for piece in pieces:
            plo, phi, xa, xb = piece[:4]
            is_markov = covers and -delta <= plo and phi <= delta
            tiny = (xb - xa) < WIDTH_FLOOR
            outer_sliver = max(abs(plo), abs(phi)) > dhat and (phi - plo) < self.edge_min
            if merged and (tiny or outer_sliver) and not is_markov:
                prev = merged[-1]
                prev_markov = covers and -delta <= prev[0] and prev[1] <= delta
                if not prev_markov:
                    merged[-1] = [min(prev[0], plo), max(prev[1], phi),
                                  prev[2], xb, prev[4], piece[5]]
                    continue
            merged.append(list(piece))

        for plo, phi, xa, xb, ya, yb in merged:
            width = xb - xa
            if width <= 0:
                continue
            if width < WIDTH_FLOOR:
                self.dropped_mass += width
                continue
            child = EscapeElement(xa, xb, created=el.created,
                                  events=list(el.events),
                                  essential_depth_sum=el.essential_depth_sum,
                                  escapes=el.escapes)
            if covers and -delta <= plo and phi <= delta:
                child.markov = True
                child.return_time = k
                child.orientation = 1 if increasing else -1
                child.record("markov_return", k)
                self.resolved.append(child)
                self.markov_fractions.append(width / el.length)
                continue
            if abs(plo) < math.exp(-self.r_cap) and abs(phi) < math.exp(-self.r_cap):
                self.dropped_mass += width  # unresolvable core around c
                continue
            depth = self.grid.interval_depth(plo, phi)
            if max(abs(plo), abs(phi)) > dhat:
                # substantial escape component beyond the large scale
                child.record("escape", k)
                if self.mode == "escape":
                    self.resolved.append(child)
                    continue
                self._push(child, (ya, yb), k)
            elif depth >= self.cfg.r_delta or min(abs(plo), abs(phi)) < delta:
                # cells I_{+-r_delta} count as returns, not escapes
                p = self._interval_binding(plo, phi, k)
                child.record("essential_return", k, min(depth, self.r_cap), p)
                self._push(child, (ya, yb), k + p + 1)
            else:
                # essential escape: the piece sits at scale delta..delta_hat
                child.record("escape", k)
                if self.mode == "escape":
                    self.resolved.append(child)
                    continue
                self._push(child, (ya, yb), k)

    @property
    def unresolved_mass(self) -> float:
        return sum(el.length for el in self.active)


# ------------------------------------------------------------- public ops


def escape_partition(a: float, j_interval: tuple, cfg: BCConfig = BCConfig()) -> list:
    """Partition J into elements carrying escape times E and itineraries.

    J must be escape-sized: |J| >= delta_hat.  Raises ResidueTooLarge when
    unresolved mass at n_max exceeds 1e-3 |J|.
    """
    j_lo, j_hi = j_interval
    if (j_hi - j_lo) < cfg.delta_hat_grid:
        raise ValueError("|J| >= delta_hat required (escape-sized start)")
    rep = check_bc_conditions(a, min(cfg.n_max, 200), cfg=cfg)
    if not (rep.hyperbolicity and rep.slow_recurrence):
        raise ValueError("parameter fails the growth/recurrence conditions")
    eng = _Partitioner(a, cfg, "escape")
    eng.seed(j_lo, j_hi)
    eng.run()
    residue = eng.unresolved_mass + eng.dropped_mass
    if residue > 1e-3 * (j_hi - j_lo):
        raise ResidueTooLarge(
            f"unresolved escape mass {residue:.3g} exceeds 1e-3 |J|")
    return eng.resolved


@dataclass(frozen=True)
class EscapeTail:
    ns: np.ndarray
    masses: np.ndarray  # |{E >= n}|
    rate: float
    r2: float


def escape_tail(elements) -> EscapeTail:
    """Masses |{E >= n}| and the fitted exponential rate of the escape tail."""
    es = np.array([el.escape_time for el in elements if el.escape_time is not None])
    ws = np.array([el.length for el in elements if el.escape_time is not None])
    if es.size == 0:
        raise ValueError("no escaped elements")
    n_hi = int(es.max())
    ns = np.arange(0, n_hi + 1)
    masses = np.array([ws[es >= n].sum() for n in ns])
    fit = log_linear_fit(ns[masses > 0], masses[masses > 0])
    return EscapeTail(ns, masses, -fit.slope, fit.r2)


@dataclass(frozen=True)
class BuildResult:
    tower: InducedMarkovMap
    xi_min: float                 # min observed Markov fraction per covering chop
    escape_counts: dict           # i -> mass of branches with exactly i escapes
    kappa_hat: float              # max (E - T0)/essential-depth-sum, fitted
    t0_hat: int                   # max first-escape time among depth-0 elements
    elements: list                # resolved Markov elements with itineraries


def build_induced_markov(a: float, cfg: BCConfig = BCConfig()) -> BuildResult:
    """Construct the induced Markov map on Delta by iterating escapes until
    Markov return.  Unresolved elements at n_max and pieces dropped at the
    width floor or the element budget are assigned to the deficit."""
    rep = check_bc_conditions(a, min(cfg.n_max, 200), cfg=cfg)
    if not (rep.hyperbolicity and rep.slow_recurrence):
        raise ValueError("parameter fails the growth/recurrence conditions")
    eng = _Partitioner(a, cfg, "return")
    delta = cfg.delta_grid
    eng.seed(-delta, delta)
    eng.run()

    branches = []
    for el in eng.resolved:
        if el.markov:
            branches.append(TowerBranch(el.left, el.right, el.return_time,
                                        el.orientation))
    total = 2.0 * delta
    modeled = sum(b.length for b in branches)
    deficit = max(total - modeled, 0.0)
    tw = InducedMarkovMap(delta=(-delta, delta), branches=tuple(branches),
                          base_map=quadratic(a), deficit=deficit)

    counts: dict[int, float] = {}
    t0 = 0
    kappa = 0.0
    for el in eng.resolved:
        if not el.markov:
            continue
        counts[el.escapes] = counts.get(el.escapes, 0.0) + el.length
        first_escape = el.escape_time or el.return_time
        if el.essential_depth_sum == 0:
            t0 = max(t0, first_escape)
    for el in eng.resolved:
        if el.markov and el.essential_depth_sum > 0:
            kappa = max(kappa, (el.return_time - t0) / el.essential_depth_sum)
    xi_min = min(eng.markov_fractions) if eng.markov_fractions else 0.0
    return BuildResult(tw, xi_min, counts, kappa, t0,
                       [el for el in eng.resolved if el.markov])


@dataclass(frozen=True)
class OutsideExpansionReport:
    trials: int
    violations_plain: int      # |Df^n(x)| >= delta e^{lam n} misses
    violations_anchored: int   # the C e^{lam n} form with the fitted C
    fitted_c: float
    worst_margin: float        # min over segments of log|Df^n| - log(delta e^{lam n})


def expansion_outside_delta(a: float, trials: int, cfg: BCConfig = BCConfig(),
                            seed: int = 0, max_len: int = 30) -> OutsideExpansionReport:
    """Sample orbit segments staying outside Delta and check the outside
    expansion estimates |Df^n(x)| >= delta e^{lam n} (and >= C e^{lam n}
    when the segment additionally starts in f(Delta_hat) or ends in
    Delta_hat), with C fitted as the worst observed prefactor."""
    if trials < 10 ** 3:
        raise ValueError("trials >= 1e3 required")
    delta = cfg.delta_grid
    dhat = cfg.delta_hat_grid
    rng = substream(seed, 0)
    worst = math.inf
    viol = 0
    anchored_ratios = []
    f_dhat = sorted((x * x - a) for x in (0.0, dhat))  # f(Delta_hat) = [-a, dhat^2-a]
    for _ in range(trials):
        x = rng.uniform(-2.0, 2.0)
        if abs(x) < delta:
            continue
        logd = 0.0
        y = x
        anchored_start = f_dhat[0] <= x <= f_dhat[1]
        for n in range(1, max_len + 1):
            logd += math.log(abs(2.0 * y))
            y = y * y - a
            margin = logd - (math.log(delta) + cfg.lam * n)
            worst = min(worst, margin)
            if margin < 0:
                viol += 1
            if abs(y) < dhat or anchored_start:
                anchored_ratios.append(logd - cfg.lam * n)
            if abs(y) < delta:
                break
    fitted_c = math.exp(min(anchored_ratios)) if anchored_ratios else 0.0
    anchored_viol = sum(1 for r in anchored_ratios if math.exp(r) < fitted_c * (1 - 1e-12))
    return OutsideExpansionReport(trials, viol, anchored_viol, fitted_c, worst)
