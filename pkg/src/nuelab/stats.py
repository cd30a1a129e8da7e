"""Small regression helpers used by tail/decay classification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r2: float
    npoints: int

    def predict(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept


def linear_fit(x, y) -> FitResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        return FitResult(0.0, float(y[0]) if y.size else 0.0, 0.0, int(x.size))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return FitResult(float(slope), float(intercept), r2, int(x.size))


def log_linear_fit(n, v) -> FitResult:
    """Fit log v vs n over the entries with v > 0."""
    n = np.asarray(n, dtype=float)
    v = np.asarray(v, dtype=float)
    keep = v > 0
    return linear_fit(n[keep], np.log(v[keep]))


def log_log_fit(n, v) -> FitResult:
    """Fit log v vs log n over entries with n > 0 and v > 0."""
    n = np.asarray(n, dtype=float)
    v = np.asarray(v, dtype=float)
    keep = (v > 0) & (n > 0)
    return linear_fit(np.log(n[keep]), np.log(v[keep]))


def binomial_stderr(p_hat, size):
    p = np.clip(np.asarray(p_hat, dtype=float), 0.0, 1.0)
    return np.sqrt(p * (1.0 - p) / max(int(size), 1))
