"""Exact sampling from the Polya-gamma distribution PG(b, c) for integer b.

A PG(1, c) variate is drawn with Devroye's alternating-series rejection
sampler on the exponential / truncated inverse-Gaussian mixture proposal
(Polson, Scott and Windle, 2013).  Integer shapes are handled by summing
independent PG(1, c) draws, which is exact.

All routines are vectorised over the tilting parameter: rejections are
resolved by redrawing only the rejected entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

__all__ = ["PgParams", "TRUNCATION", "pg_sample", "pg_mean", "sample_pg1", "sample_pg"]

#: Crossing point of the two series representations of the Jacobi density.
TRUNCATION = 0.64

_HALF_PI = 0.5 * np.pi
_MAX_SERIES_TERMS = 200


@dataclass(frozen=True)
class PgParams:
    """Shape ``b`` (a positive integer) and tilting ``c`` of PG(b, c)."""

    b: int
    c: float

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 1:
            raise ValueError(f"PG shape must be a positive integer, got {self.b!r}")
        if not np.isfinite(self.c):
            raise ValueError(f"PG tilting parameter must be finite, got {self.c!r}")


def pg_mean(b, c):
    """E[PG(b, c)] = b / (2c) * tanh(c / 2), with limit b / 4 at c = 0."""
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-6
    safe = np.where(small, 1.0, c)
    out = np.where(small, b / 4.0 * (1.0 - c**2 / 12.0), b / (2.0 * safe) * np.tanh(safe / 2.0))
    return out[()] if out.ndim == 0 else out


def _series_coef(n, x, t=TRUNCATION):
    """n-th coefficient of the piecewise alternating series for J*(1, 0)."""
    k = (n + 0.5) * np.pi
    out = np.zeros_like(x)
    right = x > t
    out[right] = k * np.exp(-0.5 * k * k * x[right])
    left = (~right) & (x > 0)
    xl = x[left]
    out[left] = np.exp(
        -1.5 * (np.log(_HALF_PI) + np.log(xl)) + np.log(k) - 2.0 * (n + 0.5) ** 2 / xl
    )
    return out


def _exponential_mass(z, t=TRUNCATION):
    """Probability of proposing from the exponential (right) piece."""
    fz = np.pi**2 / 8.0 + 0.5 * z * z
    b = np.sqrt(1.0 / t) * (t * z - 1.0)
    a = -np.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = np.log(fz) + fz * t
    xb = x0 - z + log_ndtr(b)
    xa = x0 + z + log_ndtr(a)
    q_over_p = 4.0 / np.pi * (np.exp(xb) + np.exp(xa))
    return 1.0 / (1.0 + q_over_p)


def _truncated_inverse_gaussian(z, rng, t=TRUNCATION):
    """Draw IG(mean 1/z, shape 1) truncated to (0, t), elementwise in ``z``."""
    z = np.abs(z)
    out = np.empty_like(z)

    # mean above the truncation point: truncated Levy proposal, tilt by exp(-z^2 x / 2)
    lo = np.flatnonzero(z < 1.0 / t)
    pending = lo
    while pending.size:
        m = pending.size
        e1 = rng.standard_exponential(m)
        e2 = rng.standard_exponential(m)
        bad = np.flatnonzero(e1 * e1 > 2.0 * e2 / t)
        while bad.size:
            e1[bad] = rng.standard_exponential(bad.size)
            e2[bad] = rng.standard_exponential(bad.size)
            bad = bad[e1[bad] * e1[bad] > 2.0 * e2[bad] / t]
        x = t / (1.0 + e1 * t) ** 2
        alpha = np.exp(-0.5 * z[pending] ** 2 * x)
        keep = rng.random(m) <= alpha
        out[pending[keep]] = x[keep]
        pending = pending[~keep]

    # mean below the truncation point: plain IG draws, reject those beyond t
    pending = np.flatnonzero(z >= 1.0 / t)
    while pending.size:
        m = pending.size
        mu = 1.0 / z[pending]
        y = rng.standard_normal(m) ** 2
        mu_y = mu * y
        x = mu + 0.5 * mu * mu_y - 0.5 * mu * np.sqrt(4.0 * mu_y + mu_y * mu_y)
        flip = rng.random(m) > mu / (mu + x)
        x[flip] = mu[flip] ** 2 / x[flip]
        keep = x < t
        out[pending[keep]] = x[keep]
        pending = pending[~keep]
    return out


def sample_pg1(c, rng):
    """Draw PG(1, c) for every entry of ``c`` (any shape)."""
    c = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(c)):
        raise ValueError("PG tilting parameter must be finite")
    z = np.abs(c.ravel()) * 0.5
    fz = np.pi**2 / 8.0 + 0.5 * z * z
    w = _exponential_mass(z)
    out = np.empty_like(z)

    pending = np.arange(z.size)
    while pending.size:
        m = pending.size
        zp = z[pending]
        x = np.empty(m)
        right = rng.random(m) < w[pending]
        x[right] = TRUNCATION + rng.standard_exponential(int(right.sum())) / fz[pending][right]
        left = ~right
        if left.any():
            x[left] = _truncated_inverse_gaussian(zp[left], rng)

        s = _series_coef(0, x)
        y = rng.random(m) * s
        decided = np.zeros(m, dtype=bool)
        accepted = np.zeros(m, dtype=bool)
        for n in range(1, _MAX_SERIES_TERMS):
            live = np.flatnonzero(~decided)
            if not live.size:
                break
            s[live] += (-1.0) ** n * _series_coef(n, x[live])
            if n % 2:
                hit = live[y[live] <= s[live]]
                accepted[hit] = True
                decided[hit] = True
            else:
                decided[live[y[live] > s[live]]] = True
        out[pending[accepted]] = 0.25 * x[accepted]
        pending = pending[~accepted]
    return out.reshape(c.shape)


def sample_pg(b, c, rng):
    """Draw PG(b, c) elementwise for integer ``b`` >= 1 broadcast against ``c``.

    Each draw is the sum of ``b`` independent PG(1, c) draws.
    """
    b, c = np.broadcast_arrays(np.asarray(b), np.asarray(c, dtype=float))
    if np.any(b < 1) or np.any(np.asarray(b) != np.round(b)):
        raise ValueError("PG shape must be a positive integer")
    b = b.astype(np.int64).ravel()
    flat_c = c.ravel()
    owner = np.repeat(np.arange(flat_c.size), b)
    draws = sample_pg1(flat_c[owner], rng)
    out = np.bincount(owner, weights=draws, minlength=flat_c.size)
    return out.reshape(c.shape)


def pg_sample(params: PgParams, rng) -> float:
    """Draw a single PG(b, c) variate."""
    return float(sample_pg(params.b, params.c, rng))
