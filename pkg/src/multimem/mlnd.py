"""Multivariate logistic normal distribution on a product of simplices.

A point of ``S_{H_1} x ... x S_{H_G}`` is stored as the concatenation of its
group blocks.  Within each block the last category is the reference: the
latent coordinates are ``log(x_h / x_{H_g})`` for ``h < H_g``.

Functions accept arrays with arbitrary leading (batch) dimensions; the last
axis indexes the concatenated simplex or latent coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag, solve_triangular

__all__ = [
    "GroupShape",
    "MlndParams",
    "to_simplex",
    "to_logits",
    "logpdf",
    "sample",
    "compound_params",
    "linear_transform",
    "transform_points",
    "log_odds_mean",
    "odds_ratio_mean",
    "clip_simplex",
]

CLIP_EPS = 1e-12


@dataclass(frozen=True)
class GroupShape:
    """Simplex sizes ``H_1 .. H_G`` (each at least 2)."""

    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(h) for h in np.atleast_1d(self.sizes))
        if not sizes or any(h < 2 for h in sizes):
            raise ValueError(f"every simplex needs at least 2 categories, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def n_groups(self) -> int:
        return len(self.sizes)

    @property
    def latent_dim(self) -> int:
        return sum(h - 1 for h in self.sizes)

    @property
    def simplex_dim(self) -> int:
        return sum(self.sizes)

    def latent_slices(self):
        start = 0
        for h in self.sizes:
            yield slice(start, start + h - 1)
            start += h - 1

    def simplex_slices(self):
        start = 0
        for h in self.sizes:
            yield slice(start, start + h)
            start += h


@dataclass(frozen=True)
class MlndParams:
    shape: GroupShape
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        k = self.shape.latent_dim
        if mu.shape != (k,) or sigma.shape != (k, k):
            raise ValueError(f"expected mu of length {k} and a {k} x {k} covariance")
        if not np.allclose(sigma, sigma.T, atol=1e-10, rtol=0):
            raise ValueError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ValueError("covariance must be positive definite") from None
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "_chol", chol)

    @property
    def chol(self) -> np.ndarray:
        return self._chol

    def block(self, g: int, g2: int | None = None) -> np.ndarray:
        """Covariance block ``Sigma^{(g)}`` or cross block ``Sigma^{(g, g2)}``."""
        sl = list(self.shape.latent_slices())
        return self.sigma[sl[g], sl[g if g2 is None else g2]]


def to_simplex(y, shape: GroupShape) -> np.ndarray:
    """Blockwise softmax with the last category of each block as reference."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != shape.latent_dim:
        raise ValueError(f"latent vector has length {y.shape[-1]}, expected {shape.latent_dim}")
    blocks = []
    for sl in shape.latent_slices():
        yb = y[..., sl]
        top = np.maximum(yb.max(axis=-1, keepdims=True), 0.0)
        e = np.exp(yb - top)
        ref = np.exp(-top)
        denom = ref + e.sum(axis=-1, keepdims=True)
        blocks.append(np.concatenate([e, ref], axis=-1) / denom)
    return np.concatenate(blocks, axis=-1)


def _check_simplex(x, shape: GroupShape):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != shape.simplex_dim:
        raise ValueError(f"simplex point has length {x.shape[-1]}, expected {shape.simplex_dim}")
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise ValueError("simplex point on the boundary (a coordinate is 0 or 1)")
    return x


def to_logits(x, shape: GroupShape) -> np.ndarray:
    """Inverse of :func:`to_simplex`; boundary points raise ``ValueError``."""
    x = _check_simplex(x, shape)
    out = []
    for sl in shape.simplex_slices():
        xb = np.log(x[..., sl])
        out.append(xb[..., :-1] - xb[..., -1:])
    return np.concatenate(out, axis=-1)


def clip_simplex(x, shape: GroupShape, eps: float = CLIP_EPS) -> np.ndarray:
    """Clip user-supplied points into the interior and renormalise each block."""
    x = np.clip(np.asarray(x, dtype=float), eps, 1.0 - eps)
    for sl in shape.simplex_slices():
        x[..., sl] /= x[..., sl].sum(axis=-1, keepdims=True)
    return x


def logpdf(x, params: MlndParams) -> np.ndarray:
    """Log density: Gaussian log density of the logits minus the log-Jacobian."""
    x = _check_simplex(x, params.shape)
    diff = to_logits(x, params.shape) - params.mu
    k = params.shape.latent_dim
    w = solve_triangular(params.chol, diff.reshape(-1, k).T, lower=True).T.reshape(diff.shape)
    log_det = 2.0 * np.log(np.diag(params.chol)).sum()
    gauss = -0.5 * (w**2).sum(axis=-1) - 0.5 * k * np.log(2 * np.pi) - 0.5 * log_det
    return gauss - np.log(x).sum(axis=-1)


def sample(params: MlndParams, rng, size=None) -> np.ndarray:
    """Draw ``Y ~ N(mu, Sigma)`` by Cholesky and map it onto the simplices."""
    shape = () if size is None else np.atleast_1d(size)
    eps = rng.standard_normal((*shape, params.shape.latent_dim))
    y = params.mu + eps @ params.chol.T
    return to_simplex(y, params.shape)


def compound_params(mu0, Sigma0, group_sigmas, shape: GroupShape | None = None) -> MlndParams:
    """Marginal law when ``mu ~ N(mu0, Sigma0)`` and groups are independent logistic normals.

    The result is ``MLND(mu0, Sigma0 + blockdiag(group_sigmas))``.
    """
    group_sigmas = [np.atleast_2d(np.asarray(s, dtype=float)) for s in group_sigmas]
    if shape is None:
        shape = GroupShape(tuple(s.shape[0] + 1 for s in group_sigmas))
    if len(group_sigmas) != shape.n_groups or any(
        s.shape != (h - 1, h - 1) for s, h in zip(group_sigmas, shape.sizes)
    ):
        raise ValueError("group covariance blocks do not match the group shape")
    Sigma0 = np.atleast_2d(np.asarray(Sigma0, dtype=float))
    if Sigma0.shape != (shape.latent_dim, shape.latent_dim):
        raise ValueError("Sigma0 does not match the latent dimension")
    return MlndParams(shape, np.asarray(mu0, dtype=float), Sigma0 + block_diag(*group_sigmas))


def _check_blocks(blocks, shape: GroupShape):
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    if len(blocks) != shape.n_groups:
        raise ValueError(f"need {shape.n_groups} blocks, got {len(blocks)}")
    for g, (b, h) in enumerate(zip(blocks, shape.sizes)):
        if b.shape[1] != h - 1:
            raise ValueError(f"block {g} has {b.shape[1]} columns, expected {h - 1}")
    return blocks


def linear_transform(params: MlndParams, blocks) -> MlndParams:
    """Law of the group-preserving transform defined by blockwise matrices ``B^{(g)}``.

    ``blocks[g]`` has shape ``(q_g, H_g - 1)``; the result lives on simplices
    of sizes ``q_g + 1`` with parameters ``(B mu, B Sigma B^T)``.
    """
    blocks = _check_blocks(blocks, params.shape)
    B = block_diag(*blocks)
    new_shape = GroupShape(tuple(b.shape[0] + 1 for b in blocks))
    sigma = B @ params.sigma @ B.T
    return MlndParams(new_shape, B @ params.mu, 0.5 * (sigma + sigma.T))


def transform_points(x, shape: GroupShape, blocks) -> np.ndarray:
    """Apply the same transform directly to simplex points (power-ratio form)."""
    blocks = _check_blocks(blocks, shape)
    y = to_logits(x, shape)
    new_y = np.concatenate([y[..., sl] @ b.T for sl, b in zip(shape.latent_slices(), blocks)], axis=-1)
    return to_simplex(new_y, GroupShape(tuple(b.shape[0] + 1 for b in blocks)))


def _latent_index(params: MlndParams, h: int, g: int) -> int:
    if not 0 <= g < params.shape.n_groups:
        raise IndexError(f"group index {g} out of range")
    if not 0 <= h < params.shape.sizes[g] - 1:
        raise IndexError(f"category index {h} out of range for group {g} (reference excluded)")
    return sum(s - 1 for s in params.shape.sizes[:g]) + h


def log_odds_mean(params: MlndParams, h: int, g: int, h2: int, g2: int) -> float:
    """Mean log of the ratio of category-``h`` odds in group ``g`` to category-``h2`` odds in group ``g2``.

    Indices are 0-based and exclude each group's reference (last) category.
    """
    a, b = _latent_index(params, h, g), _latent_index(params, h2, g2)
    return float(params.mu[a] - params.mu[b])


def odds_ratio_mean(params: MlndParams, h: int, g: int, h2: int, g2: int) -> float:
    """Mean of the same odds ratio; log-normal moment of the latent difference."""
    a, b = _latent_index(params, h, g), _latent_index(params, h2, g2)
    s = params.sigma
    var = s[a, a] + s[b, b] - 2.0 * s[a, b]
    return float(np.exp(params.mu[a] - params.mu[b] + 0.5 * var))
