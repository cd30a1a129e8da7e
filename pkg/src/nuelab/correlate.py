"""Empirical correlation functions C_n(phi, psi), observable classes, and
decay-model fitting, cross-checked against tower predictions.

C_n(phi, psi) = |int psi (phi o f^n) dmu - int psi dmu int phi dmu|, with
the absolute value taken last.  Two estimators: a single long orbit with
lag products (Birkhoff), or a density-weighted ensemble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousDecay, InsufficientSignal, NoAcipAvailable
from .maps import MapSpec
from .sampling import substream
from .stats import linear_fit
from .tower import DecayClass

DEFAULT_BURN_IN = 10 ** 4
NOISE_SIGMAS = 3.0
R2_FLOOR = 0.90


@dataclass(frozen=True)
class Observable:
    """A bounded observable with regularity metadata.

    regularity: ('holder', exponent, constant) | ('log_modulus', gamma)
               | ('indicator', lo, hi) | ('bounded_variation',)
    """

    name: str
    fn: object
    regularity: tuple = ("holder", 1.0, 1.0)

    def __call__(self, x):
        return self.fn(x)


def cos_wave(k: int = 1) -> Observable:
    return Observable(f"cos(2pi*{k}x)", lambda x: np.cos(2.0 * np.pi * k * x),
                      ("holder", 1.0, 2.0 * math.pi * k))


def indicator(lo: float, hi: float) -> Observable:
    return Observable(f"1_[{lo},{hi})",
                      lambda x: ((x >= lo) & (x < hi)).astype(float)
                      if isinstance(x, np.ndarray) else float(lo <= x < hi),
                      ("indicator", lo, hi))


def identity_obs() -> Observable:
    return Observable("x", lambda x: x, ("holder", 1.0, 1.0))


def log_modulus_obs(center: float, gamma: float) -> Observable:
    """psi(x) = (1 + |log|x - center||)^-gamma: continuous with logarithmic
    modulus of continuity gamma at `center`."""

    def fn(x):
        d = np.abs(np.asarray(x, dtype=float) - center)
        with np.errstate(divide="ignore"):
            v = (1.0 + np.abs(np.log(np.where(d > 0, d, 1e-300)))) ** -gamma
        return v if isinstance(x, np.ndarray) else float(v)

    return Observable(f"logmod(gamma={gamma})", fn, ("log_modulus", gamma))


@dataclass(frozen=True)
class CorrelationSeries:
    ns: np.ndarray
    values: np.ndarray          # |C_n|
    signed_values: np.ndarray   # C_n before the absolute value
    stderrs: np.ndarray
    method: str
    samples: int

    def __post_init__(self):
        if (self.stderrs < 0).any():
            raise ValueError("negative standard errors")


def correlation_function(m: MapSpec, phi: Observable, psi: Observable,
                         n_max: int, samples: int, method: str = "ensemble",
                         density=None, seed: int = 0,
                         burn_in: int = DEFAULT_BURN_IN) -> CorrelationSeries:
    """Estimate C_n for n = 0..n_max.

    single-orbit: lag products along one orbit of length `samples` after
    burn-in (map must admit an acip for orbit averages to converge).
    ensemble: x0 ~ density (a DensityHistogram; required), C_n estimated by
    Monte Carlo over initial points.
    """
    if method == "single-orbit":
        return _single_orbit(m, phi, psi, n_max, samples, seed, burn_in)
    if method == "ensemble":
        if density is None:
            raise NoAcipAvailable("ensemble method needs a density estimate")
        return _ensemble(m, phi, psi, n_max, samples, density, seed)
    raise ValueError(f"unknown method {method!r}")


def _single_orbit(m, phi, psi, n_max, samples, seed, burn_in):
    x = float(substream(seed, 0).uniform(*m.interval))
    step = m.mc_stepper(x, salt=1)
    for _ in range(burn_in):
        x = step(x)
    orbit = np.empty(samples)
    for i in range(samples):
        orbit[i] = x
        x = step(x)
    phis = np.asarray(phi(orbit), dtype=float)
    psis = np.asarray(psi(orbit), dtype=float)
    nblocks = 32
    vals, errs = np.empty(n_max + 1), np.empty(n_max + 1)
    for n in range(n_max + 1):
        a = psis[: samples - n]
        b = phis[n:]
        prod = a * b
        c = prod.mean() - a.mean() * b.mean()
        vals[n] = c
        bs = np.array_split(prod - a.mean() * b.mean(), nblocks)
        block_means = np.array([blk.mean() for blk in bs])
        errs[n] = block_means.std(ddof=1) / math.sqrt(nblocks)
    return CorrelationSeries(np.arange(n_max + 1), np.abs(vals), vals, errs,
                             "single-orbit", samples)


def _ensemble(m, phi, psi, n_max, samples, density, seed, chunk=2_000_000):
    # chunked accumulation of sum(psi*phi_n), sum(psi), sum(phi_n),
    # sum((psi*phi_n)^2); chunks are seeded substreams combined in fixed
    # order, so the estimate is independent of scheduling
    sp = np.zeros(n_max + 1)
    spp = np.zeros(n_max + 1)
    s_psi = 0.0
    s_phi = np.zeros(n_max + 1)
    done = 0
    idx = 0
    while done < samples:
        size = min(chunk, samples - done)
        rng = substream(seed, idx)
        xs = density.sample(rng, size)
        psis = np.asarray(psi(xs), dtype=float)
        s_psi += psis.sum()
        for n in range(n_max + 1):
            if n > 0:
                xs = m.mc_step_array(xs, rng)
            phis = np.asarray(phi(xs), dtype=float)
            prod = psis * phis
            sp[n] += prod.sum()
            spp[n] += (prod ** 2).sum()
            s_phi[n] += phis.sum()
        done += size
        idx += 1
    mean_psi = s_psi / samples
    vals = sp / samples - mean_psi * (s_phi / samples)
    var_prod = spp / samples - (sp / samples) ** 2
    errs = np.sqrt(np.maximum(var_prod, 0.0) / samples)
    return CorrelationSeries(np.arange(n_max + 1), np.abs(vals), vals, errs,
                             "ensemble", samples)


def fit_decay(series: CorrelationSeries) -> DecayClass:
    """Best of exponential / polynomial / logarithmic regressions on the
    values standing at least NOISE_SIGMAS above their standard error.

    Values below the noise floor are censored, not fitted.
    """
    usable = series.values > NOISE_SIGMAS * series.stderrs
    if usable.sum() < 10:
        raise InsufficientSignal(
            f"only {int(usable.sum())} values exceed {NOISE_SIGMAS}x their stderr")
    n = series.ns[usable].astype(float)
    v = series.values[usable]
    logv = np.log(v)
    fits = []
    exp_fit = linear_fit(n, logv)
    if exp_fit.slope < 0:
        fits.append(("exponential", exp_fit.r2, -exp_fit.slope, _slope_err(n, logv, exp_fit)))
    pos = n >= 1  # polynomial and logarithmic models are undefined at n = 0
    if pos.sum() >= 3:
        poly_fit = linear_fit(np.log(n[pos]), logv[pos])
        if poly_fit.slope < 0:
            fits.append(("polynomial", poly_fit.r2, -poly_fit.slope,
                         _slope_err(np.log(n[pos]), logv[pos], poly_fit)))
    big = n >= 2
    if big.sum() >= 3:
        log_fit = linear_fit(np.log(np.log(n[big])), logv[big])
        if log_fit.slope < 0:
            fits.append(("logarithmic", log_fit.r2, -log_fit.slope,
                         _slope_err(np.log(np.log(n[big])), logv[big], log_fit)))
    fits = [f for f in fits if f[1] >= R2_FLOOR]
    if not fits:
        raise AmbiguousDecay("no decay regression reached R^2 0.9")
    fits.sort(key=lambda f: -f[1])
    kind, r2, rate, rerr = fits[0]
    kind = {"logarithmic": "log_modulus"}.get(kind, kind)
    return DecayClass(kind, rate, r2, "fit", rate_stderr=rerr)


def _slope_err(x, y, fit) -> float:
    resid = y - fit.predict(x)
    dof = max(len(x) - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    return math.sqrt(float(np.sum(resid ** 2)) / dof / sxx) if sxx > 0 else 0.0


@dataclass(frozen=True)
class CrossCheck:
    consistent: bool
    reason: str


_SPEED = {"exponential": 2, "polynomial": 1, "slowly_varying": 0, "log_modulus": 1}


def cross_check(predicted: DecayClass, fitted: DecayClass) -> CrossCheck:
    """Consistent if the fitted decay matches the predicted class within
    two combined uncertainties, or is faster (predictions are upper bounds)."""
    if predicted.kind == fitted.kind:
        if predicted.rate is None or fitted.rate is None:
            return CrossCheck(True, "same class")
        tol = 2.0 * (predicted.rate_stderr + fitted.rate_stderr)
        if abs(predicted.rate - fitted.rate) <= tol or fitted.rate >= predicted.rate:
            return CrossCheck(True, "same class, rate within tolerance or faster")
        return CrossCheck(False,
                          f"fitted rate {fitted.rate:.3g} slower than predicted "
                          f"{predicted.rate:.3g} beyond 2 sigma")
    if _SPEED.get(fitted.kind, 0) > _SPEED.get(predicted.kind, 0):
        return CrossCheck(True, f"fitted {fitted.kind} is faster than predicted "
                                f"{predicted.kind} (upper-bound semantics)")
    return CrossCheck(False, f"fitted {fitted.kind} is slower than predicted {predicted.kind}")
