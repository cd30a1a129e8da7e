"""Cylinder-set machinery for full-branch Markov maps: partition refinement,
diameters, and derivative-distortion estimates.

Depth-n cylinders here are the sets {x : F^i(x) in branch a_i, 0 <= i < n},
so depth 1 reproduces the branch domains and a degree-kappa covering has
kappa^n cylinders at depth n.  Works on MapSpec families with full branches
(circle coverings, tent, truncated Gauss, the two-branch intermittent maps)
and on InducedMarkovMap via the same branch protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AtCriticalPoint, NotMarkov, TruncationLoss
from .maps import Branch, MapSpec

ENDPOINT_TOL = 1e-12
MIN_PREDICTED_DIAMETER = 1e-10


@dataclass(frozen=True)
class CylinderNode:
    """A cylinder omega_(a0...a_{n-1}) with its interval [left, right]."""

    word: tuple
    left: float
    right: float
    orientation: int  # sign of DF^n on the cylinder

    @property
    def depth(self) -> int:
        return len(self.word)

    @property
    def parent_word(self) -> tuple:
        return self.word[:-1]

    @property
    def diameter(self) -> float:
        return self.right - self.left


def _branch_model(m):
    """(domain, branches, preimage, deficit) for a MapSpec or induced map."""
    if isinstance(m, MapSpec):
        branches = m.markov_branches()
        return m.interval, branches, m.branch_preimage, m.modeled_deficit
    # induced-map protocol: delta, branches, branch_preimage
    try:
        return m.delta, m.branches_as_markov(), m.branch_preimage, m.deficit
    except AttributeError as exc:
        raise NotMarkov(f"{m!r} exposes no full-branch structure") from exc


def _pullback(preimage, branch: Branch, lo: float, hi: float):
    """Preimage of [lo, hi] under one full branch, as an ordered interval."""
    a = preimage(branch, lo)
    b = preimage(branch, hi)
    if branch.orientation < 0:
        a, b = b, a
    return a, b


def iter_cylinders(m, depth: int, max_truncation_loss: float = 1e-4):
    """Yield depth-`depth` cylinders without materialising the whole list.

    Cylinder intervals are pulled back through branch inverses (closed form
    where the family has one, bisection to 1e-12 otherwise).
    """
    if depth < 1:
        raise ValueError("depth >= 1 required")
    domain, branches, preimage, deficit = _branch_model(m)
    if deficit > max_truncation_loss:
        raise TruncationLoss(
            f"unmodelled branch mass {deficit:.3g} exceeds budget {max_truncation_loss:.3g}"
        )
    span = domain[1] - domain[0]
    shortest = min(b.right - b.left for b in branches)
    if span * (shortest / span) ** depth < MIN_PREDICTED_DIAMETER:
        raise ValueError(
            f"predicted cylinder diameter below {MIN_PREDICTED_DIAMETER}; refusing depth {depth}"
        )
    yield from _dfs_leaves(depth, branches, preimage)


def _dfs_leaves(depth, branches, preimage):
    # The interval of omega_(a0 a1...a_{n-1}) is the pullback under branch a0
    # of the interval of omega_(a1...a_{n-1}).  Growing words by *prepending*
    # a symbol therefore costs one branch-inverse per node: DFS over suffix
    # words, starting from the branch domains as the deepest suffix.
    stack = [((br.index,), br.left, br.right, br.orientation) for br in reversed(branches)]
    while stack:
        word, lo, hi, sign = stack.pop()
        if len(word) == depth:
            yield CylinderNode(word, lo, hi, sign)
            continue
        for br in reversed(branches):
            a, b = _pullback(preimage, br, lo, hi)
            stack.append(((br.index,) + word, a, b, sign * br.orientation))


def refine(m, depth: int, max_truncation_loss: float = 1e-4) -> list:
    """All depth-`depth` cylinders, ordered by position."""
    cyls = list(iter_cylinders(m, depth, max_truncation_loss))
    cyls.sort(key=lambda c: c.left)
    return cyls


def max_diameter(cylinders) -> float:
    """Maximum cylinder length; accepts any iterable of CylinderNode."""
    best = -math.inf
    for c in cylinders:
        d = c.diameter
        if d > best:
            best = d
    if best == -math.inf:
        raise ValueError("empty cylinder collection")
    return best


def lemma_tau(domain_length: float, delta_max: float, distortion_bound: float) -> float:
    """Contraction factor tau = 1 - (|Delta| - delta_max) / (|Delta| * D).

    delta_max is the largest depth-1 cylinder length and D the geometric
    distortion constant (exp of the derivative-distortion bound).
    """
    return 1.0 - (domain_length - delta_max) / (domain_length * distortion_bound)


def _word_chain_log_deriv(m, branches_by_index, word, x: float) -> float:
    """sum_i log |DF(F^i(x))| stepping with the word's own branch formulas.

    Using the raw map here would let rounding at a branch closure leak the
    orbit into a neighbouring branch and corrupt the chain; the word is the
    authority on which branch applies at each step.
    """
    total = 0.0
    for sym in word:
        br = branches_by_index[sym]
        total += m.branch_log_abs_deriv(br, x)
        x = m.branch_apply(br, x)
    return total


def distortion(m, cylinder: CylinderNode, mesh: int = 64) -> float:
    """Dist(F^n, omega): max over mesh pairs x, y of log |DF^n(x) / DF^n(y)|.

    Computed as max - min of the chain-rule sums sum_i log |DF(F^i(.))| over
    `mesh` interior points plus the two endpoints, stepping along the
    cylinder's word.  Branch derivatives are monotone on cylinders for all
    shipped families, so mesh extremes bracket the true extremes closely.
    Raises if a critical point sits in the cylinder's interior (the map must
    be differentiable there).
    """
    lo, hi = cylinder.left, cylinder.right
    if isinstance(m, MapSpec):
        for c in m.critical_set():
            if lo < c.location < hi:
                raise AtCriticalPoint(f"cylinder interior contains {c.location}")
    _, branches, _, _ = _branch_model(m)
    by_index = {b.index: b for b in branches}
    xs = np.linspace(lo, hi, mesh + 2)
    vals = [_word_chain_log_deriv(m, by_index, cylinder.word, float(x)) for x in xs]
    return max(vals) - min(vals)


@dataclass(frozen=True)
class DistortionReport:
    depths: tuple
    per_depth_max: tuple
    increments: tuple
    mesh: int
    sampled: tuple  # number of cylinders examined per depth


def distortion_profile(m, max_depth: int, mesh: int = 64, beam: int = 64,
                       branch_limit: int | None = None) -> DistortionReport:
    """Per-depth maximum distortion over a beam of the worst cylinders.

    Countable-branch maps are restricted to their first `branch_limit`
    branches; at each depth only the `beam` cylinders with the largest
    distortion are refined further, which tracks the maximising word.
    """
    domain, branches, preimage, _ = _branch_model(m)
    if branch_limit is not None:
        branches = branches[:branch_limit]
    frontier = [CylinderNode((br.index,), br.left, br.right, br.orientation) for br in branches]
    per_depth, sampled, depths = [], [], []
    for depth in range(1, max_depth + 1):
        scored = [(distortion(m, c, mesh), c) for c in frontier]
        scored.sort(key=lambda t: -t[0])
        per_depth.append(scored[0][0])
        sampled.append(len(frontier))
        depths.append(depth)
        if depth == max_depth:
            break
        keep = [c for _, c in scored[:beam]]
        frontier = []
        for br in branches:
            for inner in keep:
                a, b = _pullback(preimage, br, inner.left, inner.right)
                frontier.append(CylinderNode((br.index,) + inner.word, a, b,
                                             br.orientation * inner.orientation))
    increments = tuple(
        per_depth[i] - per_depth[i - 1] if i else per_depth[0] for i in range(len(per_depth))
    )
    return DistortionReport(tuple(depths), tuple(per_depth), increments, mesh, tuple(sampled))
