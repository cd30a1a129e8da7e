"""Invariant-density construction: pull-back measures nu_n, one-step
invariance residuals, projection of a base density through an induced map,
and the no-acip diagnostic for the quadratic-tangency neutral map.

All estimators are Monte Carlo over seeded substreams and bin into
histograms; nu_n(A) is estimated through |F^-i(A)| = Lebesgue fraction of
uniform x with F^i(x) in A.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonSummableReturns
from .maps import MapSpec
from .sampling import chunks, parallel_map, substream
from .tower import InducedMarkovMap

NORMALIZATION_TOL = 1e-9
DEFAULT_BINS = 256


@dataclass
class DensityHistogram:
    """Binned density on [lo, hi]: `masses[i]` is the probability of bin i."""

    edges: np.ndarray
    masses: np.ndarray
    normalized: bool = False

    @classmethod
    def from_counts(cls, edges, counts) -> "DensityHistogram":
        h = cls(np.asarray(edges, dtype=float), np.asarray(counts, dtype=float))
        h.normalize()
        return h

    @classmethod
    def uniform(cls, lo: float, hi: float, bins: int = DEFAULT_BINS) -> "DensityHistogram":
        edges = np.linspace(lo, hi, bins + 1)
        return cls(edges, np.full(bins, 1.0 / bins), normalized=True)

    @property
    def bins(self) -> int:
        return len(self.masses)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def normalize(self) -> None:
        total = self.masses.sum()
        if total <= 0:
            raise ValueError("cannot normalize empty histogram")
        self.masses = self.masses / total
        self.normalized = True

    def check(self) -> None:
        if self.bins < 16:
            raise ValueError("bin count >= 16 required")
        if (self.masses < 0).any():
            raise ValueError("negative bin mass")
        if self.normalized and abs(self.masses.sum() - 1.0) > NORMALIZATION_TOL:
            raise ValueError("normalization drifted")

    def density_values(self) -> np.ndarray:
        return self.masses / self.widths

    def max_density(self) -> float:
        return float(self.density_values().max())

    def tv_distance(self, other: "DensityHistogram") -> float:
        return 0.5 * float(np.abs(self.masses - other.masses).sum())

    def l1_distance_to(self, density_fn, renormalize: bool = True) -> float:
        """L1 distance between this histogram's density and a reference
        density function, both restricted (and optionally renormalised) to
        the grid window."""
        ref = np.array([density_fn(c) for c in self.centers]) * self.widths
        if renormalize:
            ref = ref / ref.sum()
        return float(np.abs(self.masses - ref).sum())

    def sup_error_to(self, density_fn) -> float:
        ref = np.array([density_fn(c) for c in self.centers])
        return float(np.abs(self.density_values() - ref).max())

    def sample(self, rng, size: int) -> np.ndarray:
        """Sample points: multinomial over bins, uniform within each bin."""
        idx = rng.choice(self.bins, size=size, p=self.masses / self.masses.sum())
        u = rng.uniform(size=size)
        return self.edges[idx] + u * self.widths[idx]


@dataclass(frozen=True)
class PullbackEstimate:
    histogram: DensityHistogram
    max_bin_density: float  # empirical counterpart of the D|A| bound
    samples: int
    n: int


def _step_fn(m):
    if isinstance(m, MapSpec):
        return m.mc_step_array
    tower = m
    lo, hi = tower.delta
    # induced maps expand strongly per step, so their float orbits lose low
    # bits just like dyadic-linear maps: dither below bin scale
    def step(xs, rng):
        out = np.empty_like(xs)
        for i, x in enumerate(xs):
            b = tower.branch_of(x)
            out[i] = tower.eval(x) if b is not None else x
        out = np.clip(out + rng.uniform(0.0, 2.0 ** -45, out.shape), lo, hi)
        return out

    return step


def _domain(m):
    return m.interval if isinstance(m, MapSpec) else m.delta


def pullback_measure(m, n: int, grid=None, samples: int = 10 ** 5,
                     seed: int = 0, threads: int = 1,
                     chunk: int = 200_000) -> PullbackEstimate:
    """Estimate nu_n(A) = (1/n) sum_{i<n} |F^-i(A)| on a histogram grid.

    Uniform starting points are iterated n-1 times and every visited point
    is binned.  `grid` is (lo, hi, bins); default covers the domain.
    """
    if n < 1 or samples < 1:
        raise ValueError("n >= 1 and samples >= 1 required")
    lo, hi = _domain(m)
    glo, ghi, bins = grid if grid is not None else (lo, hi, DEFAULT_BINS)
    edges = np.linspace(glo, ghi, bins + 1)
    step = _step_fn(m)

    def run(args):
        idx, start, stop = args
        rng = substream(seed, idx)
        xs = rng.uniform(lo, hi, stop - start)
        counts = np.zeros(bins)
        for _ in range(n):
            counts += np.histogram(xs, bins=edges)[0]
            xs = step(xs, rng)
        return counts

    parts = parallel_map(run, chunks(samples, chunk), threads)
    counts = np.sum(parts, axis=0)
    hist = DensityHistogram.from_counts(edges, counts)
    return PullbackEstimate(hist, hist.max_density(), samples, n)


def invariance_residual(m, density: DensityHistogram, samples: int = 10 ** 5,
                        seed: int = 0) -> float:
    """Total-variation distance between `density` and its one-step image.

    nu is F-invariant iff the push-forward of nu equals nu; the residual is
    TV(density, empirical push-forward of `samples` points drawn from it).
    """
    if not density.normalized:
        raise ValueError("density must be normalized")
    rng = substream(seed, 0)
    xs = density.sample(rng, samples)
    ys = _step_fn(m)(xs, rng)
    pushed = DensityHistogram.from_counts(
        density.edges, np.histogram(ys, bins=density.edges)[0])
    return density.tv_distance(pushed)


@dataclass(frozen=True)
class ProjectedMeasure:
    histogram: DensityHistogram
    mu_hat_total: float  # sum_omega R(omega) nu(omega), the mass before normalising


def project_measure(tower: InducedMarkovMap, base_density: DensityHistogram,
                    grid, samples: int = 10 ** 5, seed: int = 0) -> ProjectedMeasure:
    """Project a base density through the tower:
    mu_hat(A) = sum_omega sum_{j<R(omega)} nu_omega(f^-j(A)), estimated by
    drawing x ~ base density and binning the orbit f^j(x), j < R(omega(x)).

    Requires summable modelled return times: the largest return time's
    branch must contribute < 1e-3 of the truncated sum (else the sum has not
    stabilised at the cutoff).
    """
    if not base_density.normalized:
        raise ValueError("base density must be normalized on Delta")
    if tower.base_map is None:
        raise ValueError("projection needs the backing map")
    # stabilisation check on sum |omega| R(omega) at the branch cutoff; a
    # complete model (zero deficit) is summable outright
    contrib = sorted((b.return_time, b.length * b.return_time) for b in tower.branches)
    total = sum(c for _, c in contrib)
    if total <= 0:
        raise NonSummableReturns("no modelled branches")
    if tower.deficit > 0 and contrib[-1][1] / total > 1e-3:
        raise NonSummableReturns(
            f"last branch (R={contrib[-1][0]}) still contributes "
            f"{contrib[-1][1] / total:.2e} of sum |omega| R: not stabilised")

    glo, ghi, bins = grid
    edges = np.linspace(glo, ghi, bins + 1)
    counts = np.zeros(bins)
    rng = substream(seed, 0)
    xs = base_density.sample(rng, samples)
    mu_hat = 0.0
    kept = 0
    for x in xs:
        b = tower.branch_of(float(x))
        if b is None:  # landed in the unmodelled deficit
            continue
        kept += 1
        y = float(x)
        for _ in range(b.return_time):
            if glo <= y <= ghi:
                counts[min(int((y - glo) / (ghi - glo) * bins), bins - 1)] += 1
            y = tower.base_map.eval(y)
        mu_hat += b.return_time
    if kept == 0:
        raise NonSummableReturns("all samples fell in the deficit")
    hist = DensityHistogram.from_counts(edges, counts)
    return ProjectedMeasure(hist, mu_hat / kept)


def no_acip_diagnostic(m: MapSpec, rho: float, n: int, x0: float = None,
                       seed: int = 0) -> list:
    """Running fraction of time spent in [0, rho] at n/4, n/2, 3n/4, n.

    For the quadratic-tangency neutral map the sequence creeps towards 1
    (mass concentrates at the neutral point and no acip exists); an
    intermittent map with an acip stabilises at mu([0, rho]) < 1.
    """
    if not 0.0 < rho < 0.25:
        raise ValueError("rho in (0, 1/4) required")
    if x0 is None:
        x0 = float(substream(seed, 0).uniform(*m.interval))
    marks = {n // 4, n // 2, (3 * n) // 4, n}
    out = []
    x = x0
    hits = 0
    for i in range(1, n + 1):
        x = m.eval(x)
        if x <= rho:
            hits += 1
        if i in marks:
            out.append(hits / i)
    return out
