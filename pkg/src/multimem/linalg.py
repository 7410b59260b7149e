"""Small dense linear-algebra helpers shared by the samplers."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular


class NumericalError(FloatingPointError):
    """A factorisation or normalisation failed inside a sampler step."""


def cholesky(a, what="matrix"):
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NumericalError(f"{what} is not positive definite") from None


def spd_inverse(a, what="matrix"):
    L = cholesky(a, what)
    inv = cho_solve((L, True), np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def sample_mvn_precision(precision, rhs, rng, what="precision matrix"):
    """Draw from N(P^{-1} b, P^{-1}) given precision ``P`` and ``b``."""
    L = cholesky(precision, what)
    mean = cho_solve((L, True), rhs)
    return mean + solve_triangular(L.T, rng.standard_normal(rhs.shape[0]), lower=False)


def sample_mvn(mean, cov, rng, what="covariance"):
    L = cholesky(cov, what)
    return mean + L @ rng.standard_normal(np.shape(mean)[0])


def sample_inv_wishart(df, scale, rng):
    """Draw from the inverse-Wishart with ``df`` degrees of freedom and scale matrix ``scale``.

    Uses the Bartlett decomposition of ``W ~ Wishart(df, scale^{-1})`` and
    returns ``W^{-1}``; the mean is ``scale / (df - dim - 1)``.
    """
    scale = np.atleast_2d(scale)
    k = scale.shape[0]
    if not df > k - 1:
        raise ValueError(f"inverse-Wishart needs df > {k - 1}, got {df}")
    # W^{-1} = (C A A^T C^T)^{-1} with C C^T = scale^{-1}; write scale = U U^T with U = chol(scale)
    # then C = U^{-T}, and W^{-1} = U A^{-T} A^{-1} U^T.
    U = cholesky(scale, "inverse-Wishart scale")
    A = np.zeros((k, k))
    A[np.diag_indices(k)] = np.sqrt(rng.chisquare(df - np.arange(k)))
    low = np.tril_indices(k, -1)
    A[low] = rng.standard_normal(len(low[0]))
    # U^{-T}-free form: W^{-1} = (U^{-T} A)^{-T} (U^{-T} A)^{-1} = U A^{-T} A^{-1} U^T
    M = U @ solve_triangular(A, np.eye(k), lower=True).T
    out = M @ M.T
    return 0.5 * (out + out.T)
