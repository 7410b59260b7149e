"""Posterior summaries and model checks computed from retained draws.

All functions read a :class:`~multimem.samples.ChainSamples`; the variable
partition and level counts are taken from the run metadata.  Posterior
predictive marginals and pairwise tables use, per draw, the average of the
membership scores over subjects as the core weights.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .data import CategoricalDataset

__all__ = [
    "marginal_pmf",
    "bivariate_pmf",
    "FitReport",
    "l1_fit_report",
    "AdmissibilityRule",
    "AdmissibilityTable",
    "admissible_conditions",
    "RateTable",
    "tertile_rate_table",
    "double_gradient_violations",
    "score_odds_ratio_summary",
    "score_correlation_summary",
    "LabelSwitchReport",
    "label_switch_monitor",
    "align_profiles",
    "score_l1_to_truth",
]

DEFAULT_QUANTILES = (0.1, 0.9)


def _assignment(samples, partition=None):
    if partition is not None:
        return np.asarray(partition.assignment)
    try:
        return np.asarray(samples.meta["assignment"], dtype=int)
    except KeyError:
        raise ValueError("samples carry no variable partition; pass one explicitly") from None


def _levels(samples, j):
    levels = samples.meta.get("levels")
    return int(levels[j]) if levels is not None else samples["theta"].shape[-1]


def _profile_weights(lam_g):
    """Stack (1 - lam, lam) along a new trailing axis."""
    return np.stack([1.0 - lam_g, lam_g], axis=-1)


def marginal_pmf(samples, j: int, partition=None) -> np.ndarray:
    """Model-implied pmf of variable ``j`` for every retained draw, shape ``(S, d_j)``."""
    assignment = _assignment(samples, partition)
    if not 0 <= j < assignment.size:
        raise IndexError(f"variable index {j} out of range")
    d = _levels(samples, j)
    theta = samples["theta"][:, j, :, :d]
    weights = _profile_weights(samples["lam"][:, :, assignment[j]].mean(axis=1))
    return np.einsum("sh,shx->sx", weights, theta)


def bivariate_pmf(samples, j: int, k: int, partition=None) -> np.ndarray:
    """Model-implied joint pmf of variables ``j`` and ``k`` per draw, shape ``(S, d_j, d_k)``."""
    if j == k:
        raise ValueError("bivariate pmf needs two distinct variables")
    assignment = _assignment(samples, partition)
    dj, dk = _levels(samples, j), _levels(samples, k)
    lam = samples["lam"]
    wj = _profile_weights(lam[:, :, assignment[j]])
    wk = _profile_weights(lam[:, :, assignment[k]])
    core = np.einsum("sna,snb->sab", wj, wk) / lam.shape[1]
    return np.einsum("sab,sax,sby->sxy", core, samples["theta"][:, j, :, :dj], samples["theta"][:, k, :, :dk])


def _check_digest(samples, dataset):
    digest = samples.meta.get("dataset_digest")
    if digest is not None and digest != dataset.digest():
        raise ValueError("samples were fitted to a different dataset (digest mismatch)")


def _summary(values, quantiles):
    values = np.asarray(values, dtype=float)
    if not values.size:
        return {"mean": float("nan"), **{f"q{q:g}": float("nan") for q in quantiles}}
    return {"mean": float(values.mean()), **{f"q{q:g}": float(np.quantile(values, q)) for q in quantiles}}


@dataclass
class FitReport:
    """L1 distances between posterior-mean model pmfs and empirical frequencies."""

    marginal: np.ndarray
    pairs: list
    bivariate: np.ndarray
    summary: dict

    def marginal_csv(self, names=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variable", "l1"])
        for j, v in enumerate(self.marginal):
            w.writerow([names[j] if names else j + 1, f"{v:.6f}"])
        return buf.getvalue()

    def bivariate_csv(self, names=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variable_a", "variable_b", "l1"])
        for (j, k), v in zip(self.pairs, self.bivariate):
            w.writerow([names[j] if names else j + 1, names[k] if names else k + 1, f"{v:.6f}"])
        return buf.getvalue()


def l1_fit_report(samples, dataset: CategoricalDataset, partition=None, variable_epochs=None,
                  quantiles=DEFAULT_QUANTILES) -> FitReport:
    """Marginal and pairwise L1 fit of the posterior predictive pmfs.

    With ``variable_epochs`` (one label per variable) only pairs of variables
    sharing a label are compared.
    """
    _check_digest(samples, dataset)
    p = dataset.p
    freq = dataset.frequencies()
    marg = np.array(
        [np.abs(marginal_pmf(samples, j, partition).mean(axis=0) - freq[j, : dataset.levels[j]]).sum() for j in range(p)]
    )
    pairs = [
        (j, k)
        for j, k in combinations(range(p), 2)
        if variable_epochs is None or variable_epochs[j] == variable_epochs[k]
    ]
    biv = np.array(
        [np.abs(bivariate_pmf(samples, j, k, partition).mean(axis=0) - dataset.pair_frequencies(j, k)).sum() for j, k in pairs]
    )
    return FitReport(
        marg,
        pairs,
        biv,
        {"marginal": _summary(marg, quantiles), "bivariate": _summary(biv, quantiles)},
    )


# --------------------------------------------------------------------------- admissibility


@dataclass(frozen=True)
class AdmissibilityRule:
    c1: float = 1.7
    c2: float = 0.35
    posterior_threshold: float = 0.5

    def __post_init__(self):
        if not self.c1 > 1:
            raise ValueError("c1 must exceed 1")
        if not self.c2 > 0:
            raise ValueError("c2 must be positive")
        if not 0 < self.posterior_threshold < 1:
            raise ValueError("posterior threshold must lie in (0, 1)")

    def holds(self, theta, freq):
        """Per-draw truth of ``theta > c1 f`` or ``(theta - f) / f > c2``.

        Levels with zero empirical frequency use only the first condition,
        which then reads ``theta > 0``.
        """
        theta = np.asarray(theta, dtype=float)
        freq = np.asarray(freq, dtype=float)
        a = theta > self.c1 * freq
        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.where(freq > 0, (theta - freq) / np.where(freq > 0, freq, 1.0) > self.c2, False)
        return a | b


@dataclass
class AdmissibilityTable:
    probability: np.ndarray  # (p, 2, max_levels), NaN beyond each variable's levels
    admissible: np.ndarray  # same shape, bool
    frequencies: np.ndarray
    rule: AdmissibilityRule

    def rows(self, names=None):
        p, H, d = self.probability.shape
        for j in range(p):
            for l in range(d):
                if np.isnan(self.probability[j, 0, l]):
                    continue
                for h in range(H):
                    yield {
                        "variable": names[j] if names else j + 1,
                        "level": l + 1,
                        "profile": h + 1,
                        "frequency": float(self.frequencies[j, l]),
                        "posterior_probability": float(self.probability[j, h, l]),
                        "admissible": bool(self.admissible[j, h, l]),
                    }

    def to_csv(self, names=None) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(
            buf,
            ["variable", "level", "profile", "frequency", "posterior_probability", "admissible"],
            lineterminator="\n",
        )
        w.writeheader()
        for row in self.rows(names):
            w.writerow(row)
        return buf.getvalue()


def admissible_conditions(samples, dataset: CategoricalDataset, rule: AdmissibilityRule = AdmissibilityRule()):
    """Posterior probability that each (variable, level, profile) condition is admissible."""
    _check_digest(samples, dataset)
    theta = samples["theta"]
    freq = dataset.frequencies()
    dmax = theta.shape[-1]
    mask = np.arange(dmax)[None, :] < dataset.levels[:, None]
    hold = rule.holds(theta, freq[None, :, None, :dmax])
    prob = hold.mean(axis=0)
    flag = prob > rule.posterior_threshold
    empty = (freq[:, None, :dmax] == 0) & mask[:, None, :]
    if empty.any():
        q10 = np.quantile(theta, 0.1, axis=0)
        flag = np.where(empty, flag & (q10 > 0), flag)
    prob = np.where(mask[:, None, :], prob, np.nan)
    flag = flag & mask[:, None, :]
    return AdmissibilityTable(prob, flag, freq, rule)


# --------------------------------------------------------------------------- risk-group tables


@dataclass
class RateTable:
    """Posterior quantiles of the mean outcome in tertile risk groups.

    ``cells[r, c]`` holds the quantiles for tertile ``r`` of the row group and
    tertile ``c`` of the column group; ``row_margin`` / ``col_margin`` use a
    single group's tertiles.  Missing cells are NaN.
    """

    quantiles: tuple
    cells: np.ndarray  # (3, 3, len(quantiles))
    row_margin: np.ndarray  # (3, len(quantiles))
    col_margin: np.ndarray  # (3, len(quantiles))
    groups: tuple

    @property
    def median_index(self) -> int:
        return int(np.argmin(np.abs(np.asarray(self.quantiles) - 0.5)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row_tertile", "col_tertile", *[f"q{q:g}" for q in self.quantiles]])
        fmt = lambda v: "" if np.isnan(v) else f"{v:.6f}"  # noqa: E731
        for r in range(3):
            for c in range(3):
                w.writerow([r + 1, c + 1, *map(fmt, self.cells[r, c])])
            w.writerow([r + 1, "all", *map(fmt, self.row_margin[r])])
        for c in range(3):
            w.writerow(["all", c + 1, *map(fmt, self.col_margin[c])])
        return buf.getvalue()


def _tertile_labels(x):
    cuts = np.quantile(x, [1.0 / 3.0, 2.0 / 3.0])
    return np.searchsorted(cuts, x, side="left")


def _cell_means(outcome, labels_r, labels_c, min_count):
    cells = np.full((3, 3), np.nan)
    idx = labels_r * 3 + labels_c
    counts = np.bincount(idx, minlength=9)
    sums = np.bincount(idx, weights=outcome, minlength=9)
    ok = counts >= min_count
    cells.ravel()[ok] = sums[ok] / counts[ok]
    return cells


def _margin_means(outcome, labels, min_count):
    counts = np.bincount(labels, minlength=3)
    sums = np.bincount(labels, weights=outcome, minlength=3)
    return np.where(counts >= min_count, sums / np.maximum(counts, 1), np.nan)


def _quantiles_ignoring_absent(values, quantiles):
    """Quantiles over draws; NaN when the cell is absent in more than half of the draws."""
    values = np.asarray(values)
    present = ~np.isnan(values)
    frac = present.mean(axis=0)
    with np.errstate(all="ignore"):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            q = np.nanquantile(values, quantiles, axis=0)
    q = np.moveaxis(q, 0, -1)
    q[frac <= 0.5] = np.nan
    return q


def tertile_rate_table(samples, outcome, groups=(0, 1), min_count: int = 3,
                       quantiles=(0.1, 0.5, 0.9), subjects=None) -> RateTable:
    """Cross-tabulate an outcome rate by per-draw tertiles of two groups' scores.

    ``subjects`` optionally restricts the table to a subset (e.g. one epoch).
    """
    lam = samples["lam"]
    outcome = np.asarray(outcome, dtype=float)
    if outcome.shape != (lam.shape[1],):
        raise ValueError(f"outcome has length {outcome.size}, expected one value per subject ({lam.shape[1]})")
    if subjects is not None:
        lam = lam[:, subjects]
        outcome = outcome[subjects]
    gr, gc = groups
    for g in groups:
        if np.unique(lam[:, :, g]).size < 3 or min(np.unique(row).size for row in lam[:, :, g]) < 3:
            raise ValueError(f"group {g} has fewer than 3 distinct score values; tertiles are undefined")
    cells, rows, cols = [], [], []
    for draw in lam:
        lr, lc = _tertile_labels(draw[:, gr]), _tertile_labels(draw[:, gc])
        cells.append(_cell_means(outcome, lr, lc, min_count))
        rows.append(_margin_means(outcome, lr, min_count))
        cols.append(_margin_means(outcome, lc, min_count))
    return RateTable(
        tuple(quantiles),
        _quantiles_ignoring_absent(cells, quantiles),
        _quantiles_ignoring_absent(rows, quantiles),
        _quantiles_ignoring_absent(cols, quantiles),
        tuple(groups),
    )


def double_gradient_violations(table) -> list:
    """Adjacent pairs breaking a non-decreasing pattern along rows or down columns.

    ``table`` is a 3 x 3 array of medians or a :class:`RateTable`.  Returns a
    list of ``((r, c), (r2, c2))`` pairs; NaN cells are skipped.
    """
    if isinstance(table, RateTable):
        table = table.cells[:, :, table.median_index]
    t = np.asarray(table, dtype=float)
    out = []
    rows, cols = t.shape
    for r in range(rows):
        for c in range(cols):
            for r2, c2 in ((r, c + 1), (r + 1, c)):
                if r2 < rows and c2 < cols and not np.isnan(t[r, c]) and not np.isnan(t[r2, c2]):
                    if t[r2, c2] < t[r, c]:
                        out.append(((r, c), (r2, c2)))
    return out


# --------------------------------------------------------------------------- score dependence


def _epoch_parameters(samples):
    """Per-epoch (means, covariances) with shapes (S, T, G) and (S, T, G, G)."""
    if "beta_t" in samples and "sigma_t" in samples:
        return samples["beta_t"], samples["sigma_t"]
    if "mu" in samples and "sigma" in samples:
        return samples["mu"][:, None, :], samples["sigma"][:, None, :, :]
    raise ValueError("samples lack the mean/covariance fields (mu, sigma or beta_t, sigma_t)")


def score_odds_ratio_summary(samples, groups=(0, 1), quantiles=(0.1, 0.25, 0.5, 0.75, 0.9)) -> dict:
    """Expected odds ratio of profile 2 between two groups, per epoch and draw.

    For each draw evaluates ``exp(m_a - m_b + (S_aa + S_bb - 2 S_ab) / 2)``.
    Returns ``{"draws": (S, T) array, "quantiles": (T, Q) array, "levels": quantiles}``.
    """
    means, covs = _epoch_parameters(samples)
    a, b = groups
    draws = np.exp(
        means[..., a] - means[..., b] + 0.5 * (covs[..., a, a] + covs[..., b, b] - 2.0 * covs[..., a, b])
    )
    q = np.quantile(draws, quantiles, axis=0).T
    return {"draws": draws, "quantiles": q, "levels": tuple(quantiles)}


def score_correlation_summary(samples, groups=(0, 1), level: float = 0.95) -> list:
    """Posterior of the correlation between two groups' score logits, per epoch.

    Each entry reports mean, sd, an equal-tailed credible interval and
    whether it contains zero (in which case separate single-group models are
    a viable simplification).
    """
    _, covs = _epoch_parameters(samples)
    a, b = groups
    corr = covs[..., a, b] / np.sqrt(covs[..., a, a] * covs[..., b, b])
    lo, hi = (1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0
    out = []
    for t in range(corr.shape[1]):
        c = corr[:, t]
        interval = (float(np.quantile(c, lo)), float(np.quantile(c, hi)))
        out.append(
            {
                "epoch": t,
                "mean": float(c.mean()),
                "sd": float(c.std(ddof=1)) if c.size > 1 else 0.0,
                "interval": interval,
                "level": level,
                "includes_zero": interval[0] <= 0.0 <= interval[1],
                "draws": c,
            }
        )
    return out


# --------------------------------------------------------------------------- label switching


@dataclass
class LabelSwitchReport:
    anchors: list  # per group (variable, level)
    switches: list
    flagged: list
    max_switches: int

    @property
    def any_flagged(self) -> bool:
        return any(self.flagged)

    def to_dict(self) -> dict:
        return {
            "anchors": [[int(j), int(l)] for j, l in self.anchors],
            "switches": [int(s) for s in self.switches],
            "flagged": [bool(f) for f in self.flagged],
            "max_switches": int(self.max_switches),
        }


def count_sign_changes(x) -> int:
    s = np.sign(np.asarray(x, dtype=float))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def label_switch_monitor(samples, partition=None, pilot: int = 100, max_switches: int = 0) -> LabelSwitchReport:
    """Count sign changes of the profile difference of an anchor condition per group.

    The anchor is the (variable, level) of the group with the largest
    posterior-mean gap between the two profiles over the first ``pilot``
    draws.
    """
    assignment = _assignment(samples, partition)
    theta = samples["theta"]
    diff = theta[:, :, 0, :] - theta[:, :, 1, :]
    pilot_gap = np.abs(diff[: max(1, min(pilot, len(diff)))].mean(axis=0))
    anchors, switches = [], []
    for g in range(int(assignment.max()) + 1):
        gap = np.where((assignment == g)[:, None], pilot_gap, -np.inf)
        j, l = np.unravel_index(np.argmax(gap), gap.shape)
        anchors.append((j, l))
        switches.append(count_sign_changes(diff[:, j, l]))
    return LabelSwitchReport(anchors, switches, [s > max_switches for s in switches], max_switches)


# --------------------------------------------------------------------------- scoring against a known truth


def align_profiles(theta_hat, true_kernels, assignment) -> np.ndarray:
    """Per group, whether the fitted profiles are swapped relative to the truth.

    ``theta_hat`` is ``(p, 2, d)`` (e.g. a posterior mean); ``true_kernels[j]``
    is the ``(2, d_j)`` generating kernel.  A group is flagged when swapping
    its two fitted profiles lowers the summed L1 distance to the truth.
    """
    assignment = np.asarray(assignment)
    flips = np.zeros(int(assignment.max()) + 1, dtype=bool)
    for g in range(flips.size):
        keep = swap = 0.0
        for j in np.flatnonzero(assignment == g):
            true = np.asarray(true_kernels[j])
            est = theta_hat[j, :, : true.shape[1]]
            keep += np.abs(est - true).sum()
            swap += np.abs(est[::-1] - true).sum()
        flips[g] = swap < keep
    return flips


def score_l1_to_truth(lam_hat, lam_true, flips=None) -> np.ndarray:
    """Mean over subjects of ``|lam_hat - lam_true|`` per group, after undoing profile swaps.

    With two profiles the simplex L1 distance is twice this value.
    """
    lam_hat = np.asarray(lam_hat, dtype=float)
    if flips is not None:
        lam_hat = np.where(np.asarray(flips)[None, :], 1.0 - lam_hat, lam_hat)
    return np.abs(lam_hat - np.asarray(lam_true, dtype=float)).mean(axis=0)
