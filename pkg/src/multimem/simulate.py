"""Synthetic grouped categorical data for the simulation scenarios.

Two groups of ``group_size`` variables with ``levels`` categories each.
Kernels of the two profiles are drawn per variable from Dirichlet laws; the
membership scores follow one of five laws:

``1``
    bivariate normal truncated to the unit square, mean (0.5, 0.5),
    variances 0.05, covariance 0.02;
``2``
    logistic normal with logit mean (-1.2, 1) and covariance
    ((3.0, -2.4), (-2.4, 3.5));
``3``
    one uniform score shared by both groups;
``4``
    two independent uniform scores;
``"misspec"``
    four profiles in group 1 with fixed kernels and Dirichlet(1/4, ..., 1/4)
    scores, scenario-4 law in group 2.

Scores are stored as full simplex vectors per group; for two-profile groups
column 1 is the probability of profile 2, i.e. the model's ``lam``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import CategoricalDataset, GroupPartition, Schema, VariableSpec, write_dataset, write_schema
from .rng import make_rng

__all__ = [
    "KERNEL_DIRICHLET",
    "MISSPEC_KERNELS",
    "ScenarioSpec",
    "SimulatedData",
    "sample_truncated_bvn",
    "sample_dirichlet_with_zeros",
    "sample_scores",
    "generate",
]

#: Dirichlet parameters of the profile kernels, indexed [group][profile].
KERNEL_DIRICHLET = (
    ((10.0, 3.0, 2.0, 1.0), (1.0, 1.0, 1.0, 11.0)),
    ((5.0, 5.0, 1.0, 0.0), (1.0, 1.0, 1.0, 8.0)),
)

#: Fixed kernels of the four group-1 profiles in the misspecified scenario.
MISSPEC_KERNELS = np.array(
    [
        [0.85, 0.05, 0.05, 0.05],
        [0.05, 0.85, 0.05, 0.05],
        [0.05, 0.05, 0.85, 0.05],
        [0.05, 0.05, 0.05, 0.85],
    ]
)

TBVN_MEAN = np.array([0.5, 0.5])
TBVN_COV = np.array([[0.05, 0.02], [0.02, 0.05]])
LN_MEAN = np.array([-1.2, 1.0])
LN_COV = np.array([[3.0, -2.4], [-2.4, 3.5]])

SCENARIOS = (1, 2, 3, 4, "misspec")


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: object = 1
    n: int = 1000
    group_size: int = 5
    levels: int = 4
    seed: int = 0
    kernel_dirichlet: tuple = KERNEL_DIRICHLET

    def __post_init__(self):
        scenario = self.scenario
        if isinstance(scenario, str) and scenario.isdigit():
            scenario = int(scenario)
        if scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        object.__setattr__(self, "scenario", scenario)
        if self.n < 1 or self.group_size < 1:
            raise ValueError("n and group_size must be positive")
        for group in self.kernel_dirichlet:
            for phi in group:
                phi = np.asarray(phi, dtype=float)
                if phi.size != self.levels:
                    raise ValueError("kernel Dirichlet parameters must have one entry per level")
                if np.any(phi < 0) or not np.any(phi > 0):
                    raise ValueError("kernel Dirichlet parameters must be >= 0 with a positive entry")
        if scenario == "misspec" and self.levels != 4:
            raise ValueError("the misspecified scenario uses 4 levels")


@dataclass
class SimulatedData:
    spec: ScenarioSpec
    dataset: CategoricalDataset
    partition: GroupPartition
    scores: list  # per group, (n, H_g) simplex vectors
    kernels: list  # per variable, (H_g, levels)
    meta: dict = field(default_factory=dict)

    @property
    def lam(self) -> np.ndarray:
        """Probability of profile 2 for every two-profile group, shape ``(n, G)``; NaN otherwise."""
        return np.column_stack([s[:, 1] if s.shape[1] == 2 else np.full(len(s), np.nan) for s in self.scores])

    def schema(self) -> Schema:
        return Schema(
            tuple(
                VariableSpec(name, int(d), int(g) + 1)
                for name, d, g in zip(self.dataset.names, self.dataset.levels, self.partition.assignment)
            )
        )

    def truth_dict(self) -> dict:
        spec = self.spec
        return {
            "scenario": spec.scenario,
            "seed": spec.seed,
            "n": spec.n,
            "group_size": spec.group_size,
            "levels": spec.levels,
            "scores": [s.tolist() for s in self.scores],
            "kernels": [k.tolist() for k in self.kernels],
        }

    def write(self, directory) -> dict:
        """Write ``dataset.csv``, ``schema.json`` and ``truth.json`` into ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {
            "dataset": directory / "dataset.csv",
            "schema": directory / "schema.json",
            "truth": directory / "truth.json",
        }
        schema = self.schema()
        write_dataset(self.dataset, paths["dataset"], schema)
        write_schema(schema, paths["schema"])
        paths["truth"].write_text(json.dumps(self.truth_dict()) + "\n")
        return paths


def sample_truncated_bvn(mu, sigma, rng, size=None, min_acceptance=1e-6, max_proposals=2_000_000):
    """Rejection sampler for a bivariate normal restricted to the unit square.

    Raises ``ValueError`` when the observed acceptance rate is below
    ``min_acceptance`` after ``max_proposals`` proposals.
    """
    mu = np.asarray(mu, dtype=float)
    L = np.linalg.cholesky(np.asarray(sigma, dtype=float))
    m = 1 if size is None else int(size)
    out = np.empty((m, 2))
    filled = proposed = 0
    while filled < m:
        batch = max(1024, 2 * (m - filled))
        x = mu + rng.standard_normal((batch, 2)) @ L.T
        ok = x[np.all((x >= 0.0) & (x <= 1.0), axis=1)]
        proposed += batch
        take = min(len(ok), m - filled)
        out[filled : filled + take] = ok[:take]
        filled += take
        if filled < m and proposed >= max_proposals and (filled / proposed) < min_acceptance:
            raise ValueError(
                f"truncated normal acceptance rate {filled / proposed:.2e} below {min_acceptance:.0e}; "
                "check the mean and covariance"
            )
    return out[0] if size is None else out


def sample_dirichlet_with_zeros(alpha, rng, size=None):
    """Dirichlet draw where zero concentrations give exactly-zero coordinates."""
    alpha = np.asarray(alpha, dtype=float)
    pos = alpha > 0
    shape = (alpha.size,) if size is None else (size, alpha.size)
    out = np.zeros(shape)
    draws = rng.dirichlet(alpha[pos], size=size)
    out[..., pos] = draws
    return out


def sample_scores(spec: ScenarioSpec, rng) -> list:
    n = spec.n
    s = spec.scenario
    if s == 1:
        lam = sample_truncated_bvn(TBVN_MEAN, TBVN_COV, rng, size=n)
    elif s == 2:
        lam = expit(LN_MEAN + rng.standard_normal((n, 2)) @ np.linalg.cholesky(LN_COV).T)
    elif s == 3:
        u = rng.random(n)
        lam = np.column_stack([u, u])
    elif s == 4:
        lam = rng.random((n, 2))
    else:
        g1 = rng.dirichlet(np.full(4, 0.25), size=n)
        u = rng.random(n)
        return [g1, np.column_stack([1.0 - u, u])]
    return [np.column_stack([1.0 - lam[:, g], lam[:, g]]) for g in range(2)]


def _draw_categories(probs, rng):
    """One categorical draw per row of ``probs``."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1]) * cdf[..., -1]
    return np.minimum((u[..., None] >= cdf).sum(axis=-1), probs.shape[-1] - 1)


def generate(spec: ScenarioSpec, rng=None) -> SimulatedData:
    """Simulate one dataset (and its ground truth) from ``spec``."""
    rng = make_rng(spec.seed) if rng is None else rng
    p_g, d = spec.group_size, spec.levels
    p = 2 * p_g
    assignment = np.repeat([0, 1], p_g)
    if any(np.any(np.asarray(phi) == 0) for grp in spec.kernel_dirichlet for phi in grp):
        warnings.warn(
            "a kernel Dirichlet parameter has a zero entry; that level gets exactly zero probability",
            stacklevel=2,
        )

    kernels = []
    for j in range(p):
        g = assignment[j]
        if spec.scenario == "misspec" and g == 0:
            kernels.append(MISSPEC_KERNELS.copy())
        else:
            kernels.append(np.vstack([sample_dirichlet_with_zeros(phi, rng) for phi in spec.kernel_dirichlet[g]]))
    scores = sample_scores(spec, rng)

    codes = np.empty((spec.n, p), dtype=np.int64)
    for j in range(p):
        z = _draw_categories(scores[assignment[j]], rng)
        codes[:, j] = _draw_categories(kernels[j][z], rng)
    dataset = CategoricalDataset(codes, np.full(p, d), tuple(f"x{j + 1}" for j in range(p)))
    return SimulatedData(spec, dataset, GroupPartition(assignment, 2), scores, kernels)


def load_truth(path) -> dict:
    raw = json.loads(Path(path).read_text())
    raw["scores"] = [np.array(s) for s in raw["scores"]]
    raw["kernels"] = [np.array(k) for k in raw["kernels"]]
    return raw
