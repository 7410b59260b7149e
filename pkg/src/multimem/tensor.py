"""Probability tensors with a Tucker structure and constrained core weights.

A joint pmf over ``p`` categorical variables is written as a core tensor of
mixing weights contracted with one kernel matrix ``(H, d_j)`` per variable.
Symmetric cores are invariant under all index permutations; group-symmetric
cores only under permutations within each variable group.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import softmax

from .rng import make_rng

__all__ = [
    "MAX_CELLS",
    "CoreTensor",
    "ProbabilityTensor",
    "count_distinct_symmetric",
    "count_distinct_group_symmetric",
    "core_tensor_from_scores",
    "joint_pmf",
    "frobenius_distance",
    "symmetry_classes",
    "ConstrainedFit",
    "best_constrained_fit",
]

MAX_CELLS = 4096
_NORM_TOL = 1e-10


def _check_cells(shape):
    cells = math.prod(shape)
    if cells > MAX_CELLS:
        raise ValueError(f"dense tensor with {cells} cells exceeds the cap of {MAX_CELLS}")


@dataclass(frozen=True)
class CoreTensor:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        _check_cells(w.shape)
        if np.any(w < 0) or abs(w.sum() - 1.0) > _NORM_TOL:
            raise ValueError("core weights must be non-negative and sum to one")
        object.__setattr__(self, "weights", w)

    @property
    def p(self) -> int:
        return self.weights.ndim


@dataclass(frozen=True)
class ProbabilityTensor:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        _check_cells(v.shape)
        if np.any(v < 0) or abs(v.sum() - 1.0) > _NORM_TOL:
            raise ValueError("probability tensor must be non-negative and sum to one")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


def count_distinct_symmetric(H: int, p: int) -> int:
    """Distinct entries of a symmetric ``H^p`` tensor: ``H (H+1) ... (H+p-1) / p!``."""
    if H < 1 or p < 1:
        raise ValueError("H and p must be positive")
    return math.comb(H + p - 1, p)


def count_distinct_group_symmetric(H: int, group_sizes) -> int:
    """Product of the per-group symmetric counts."""
    sizes = list(group_sizes)
    if not sizes:
        raise ValueError("need at least one group")
    return math.prod(count_distinct_symmetric(H, int(s)) for s in sizes)


def core_tensor_from_scores(score_samples, assignment) -> CoreTensor:
    """Monte Carlo estimate of ``a[h_1..h_p] = E[prod_j lam^{(g_j)}_{h_j}]``.

    ``score_samples[g]`` is an ``(S, H)`` array of simplex points for group
    ``g``; ``assignment[j]`` gives the group of variable ``j``.
    """
    assignment = np.asarray(assignment, dtype=int)
    scores = [np.asarray(s, dtype=float) for s in score_samples]
    if not scores or len(scores[0]) == 0:
        raise ValueError("no score samples")
    S = len(scores[0])
    H = scores[0].shape[1]
    _check_cells((H,) * assignment.size)
    acc = np.ones((S,))
    for g in assignment:
        acc = acc[..., None] * scores[g].reshape((S,) + (1,) * (acc.ndim - 1) + (H,))
    a = acc.mean(axis=0)
    return CoreTensor(a / a.sum())


def _letters(n):
    return string.ascii_letters[:n]


def _contract(core, kernels):
    p = core.ndim
    hs = _letters(p)
    xs = string.ascii_letters[26 : 26 + p]
    spec = hs + "," + ",".join(h + x for h, x in zip(hs, xs)) + "->" + xs
    return np.einsum(spec, core, *kernels)


def joint_pmf(core: CoreTensor, kernels) -> ProbabilityTensor:
    """Contract the core with one ``(H, d_j)`` kernel per variable."""
    kernels = [np.asarray(k, dtype=float) for k in kernels]
    if len(kernels) != core.p:
        raise ValueError(f"need {core.p} kernels, got {len(kernels)}")
    for j, k in enumerate(kernels):
        if k.ndim != 2 or k.shape[0] != core.weights.shape[j]:
            raise ValueError(f"kernel {j} has shape {k.shape}, expected ({core.weights.shape[j]}, d)")
    _check_cells(tuple(k.shape[1] for k in kernels))
    pi = _contract(core.weights, kernels)
    pi = np.maximum(pi, 0.0)
    return ProbabilityTensor(pi / pi.sum())


def frobenius_distance(a: ProbabilityTensor, b: ProbabilityTensor) -> float:
    va = a.values if isinstance(a, ProbabilityTensor) else np.asarray(a, dtype=float)
    vb = b.values if isinstance(b, ProbabilityTensor) else np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch {va.shape} vs {vb.shape}")
    return float(np.sqrt(np.sum((va - vb) ** 2)))


def symmetry_classes(H: int, assignment) -> np.ndarray:
    """Class label of every core cell under within-group index permutations.

    Two cells share a label when, for every group, they use each profile the
    same number of times.  Returns an integer array of shape ``(H,) * p``
    with labels ``0 .. n_classes - 1``.
    """
    assignment = np.asarray(assignment, dtype=int)
    p = assignment.size
    idx = np.indices((H,) * p).reshape(p, -1).T
    keys = {}
    labels = np.empty(len(idx), dtype=np.int64)
    for r, cell in enumerate(idx):
        key = tuple(
            tuple(np.bincount(cell[assignment == g], minlength=H)) for g in range(int(assignment.max()) + 1)
        )
        labels[r] = keys.setdefault(key, len(keys))
    return labels.reshape((H,) * p)


@dataclass
class ConstrainedFit:
    core: CoreTensor
    kernels: list
    distance: float
    budget_exhausted: bool
    n_starts: int
    params: np.ndarray | None = None


class _Objective:
    """Squared Frobenius loss in softmax coordinates, with its gradient."""

    def __init__(self, target, H, labels):
        self.target = target
        self.H = H
        self.p = target.ndim
        self.dims = target.shape
        self.labels = labels.ravel()
        self.n_classes = int(self.labels.max()) + 1
        self.class_size = np.bincount(self.labels, minlength=self.n_classes).astype(float)
        self.sizes = [self.n_classes] + [H * d for d in self.dims]
        self.offsets = np.cumsum([0] + self.sizes)

    def unpack(self, x):
        w = softmax(x[: self.n_classes])
        core = (w / self.class_size)[self.labels].reshape((self.H,) * self.p)
        kernels = [
            softmax(x[self.offsets[j + 1] : self.offsets[j + 2]].reshape(self.H, d), axis=1)
            for j, d in enumerate(self.dims)
        ]
        return w, core, kernels

    def __call__(self, x):
        w, core, kernels = self.unpack(x)
        resid = _contract(core, kernels) - self.target
        f = float(np.sum(resid**2))
        R = 2.0 * resid
        p = self.p
        hs = _letters(p)
        xs = string.ascii_letters[26 : 26 + p]
        kspecs = [h + xx for h, xx in zip(hs, xs)]
        g_core = np.einsum(xs + "," + ",".join(kspecs) + "->" + hs, R, *kernels)
        g_w = np.bincount(self.labels, weights=g_core.ravel(), minlength=self.n_classes) / self.class_size
        grad = [w * (g_w - w @ g_w)]
        for j in range(p):
            others = [k for i, k in enumerate(kernels) if i != j]
            ospecs = [s for i, s in enumerate(kspecs) if i != j]
            spec = xs + "," + hs + "," + ",".join(ospecs) + "->" + kspecs[j] if ospecs else xs + "," + hs + "->" + kspecs[j]
            g_t = np.einsum(spec, R, core, *others)
            th = kernels[j]
            grad.append((th * (g_t - np.sum(th * g_t, axis=1, keepdims=True))).ravel())
        return f, np.concatenate(grad)


def _fit_starts(obj, starts, maxiter):
    best_x, best_f, exhausted = None, np.inf, False
    for x0 in starts:
        f0 = obj(x0)[0]
        res = minimize(obj, x0, jac=True, method="L-BFGS-B", options={"maxiter": maxiter, "gtol": 1e-10, "ftol": 1e-14})
        x, f = (res.x, float(res.fun)) if res.fun <= f0 else (x0, f0)
        if res.status == 1:
            exhausted = True
        if f < best_f:
            best_x, best_f = x, f
    return best_x, best_f, exhausted


def _embed_symmetric(x_sym, sym_obj, grp_obj):
    """Express a symmetric solution in group-symmetric coordinates (same tensor)."""
    _, core, _ = sym_obj.unpack(x_sym)
    w = np.bincount(grp_obj.labels, weights=core.ravel(), minlength=grp_obj.n_classes)
    u = np.log(np.maximum(w, 1e-300))
    return np.concatenate([u, x_sym[sym_obj.n_classes :]])


def best_constrained_fit(target, H: int, constraint: str = "symmetric", assignment=None, n_starts: int = 32,
                         maxiter: int = 500, seed=0, symmetric_fit: ConstrainedFit | None = None) -> ConstrainedFit:
    """Multi-start local search for the closest rank-``H`` Tucker pmf with a constrained core.

    ``constraint`` is ``"symmetric"`` or ``"group_symmetric"`` (which needs
    ``assignment``, the group of every variable).  Kernels and class weights
    are parameterised through softmax maps and optimised by L-BFGS-B with an
    analytic gradient.  The group-symmetric search spends one of its
    ``n_starts`` starts on the best symmetric solution found under the same
    budget, since every symmetric core is also group-symmetric; pass an
    earlier ``symmetric_fit`` of the same target to skip recomputing it.
    """
    values = target.values if isinstance(target, ProbabilityTensor) else np.asarray(target, dtype=float)
    ProbabilityTensor(values)
    p = values.ndim
    if n_starts < 1:
        raise ValueError("need at least one start")
    if constraint == "symmetric":
        labels = symmetry_classes(H, np.zeros(p, dtype=int))
    elif constraint == "group_symmetric":
        if assignment is None or len(assignment) != p:
            raise ValueError("group_symmetric needs a group label for every variable")
        labels = symmetry_classes(H, assignment)
    else:
        raise ValueError(f"unknown constraint {constraint!r}")
    rng = make_rng(seed)
    obj = _Objective(values, H, labels)
    starts = [rng.standard_normal(obj.offsets[-1]) for _ in range(n_starts)]
    if constraint == "group_symmetric":
        sym = symmetric_fit or best_constrained_fit(values, H, "symmetric", n_starts=n_starts, maxiter=maxiter, seed=seed)
        sym_obj = _Objective(values, H, symmetry_classes(H, np.zeros(p, dtype=int)))
        starts[0] = _embed_symmetric(sym.params, sym_obj, obj)
    x, f, exhausted = _fit_starts(obj, starts, maxiter)
    _, core, kernels = obj.unpack(x)
    return ConstrainedFit(CoreTensor(core / core.sum()), kernels, float(np.sqrt(f)), exhausted, n_starts, x)
