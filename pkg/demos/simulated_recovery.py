"""Fit two-group mixed membership data and see how well the scores come back.

Run with ``python3 demos/simulated_recovery.py``.  Takes about a minute.

We simulate 1000 subjects whose two groups of five variables have
logistic-normal membership scores with a strong negative cross-group
correlation, fit the sampler, and compare the estimates to the truth.
"""

import warnings

import numpy as np

from multimem import ChainConfig, MmmModel, run_chain
from multimem.diagnostics import align_profiles, l1_fit_report, score_correlation_summary, score_l1_to_truth
from multimem.simulate import LN_COV, ScenarioSpec, generate

with warnings.catch_warnings():
    warnings.simplefilter("ignore", UserWarning)  # scenario kernels include a zero Dirichlet entry
    sim = generate(ScenarioSpec(2, n=1000, seed=0))

print(f"simulated {sim.dataset.n} subjects, {sim.dataset.p} variables in {sim.partition.n_groups} groups")

samples = run_chain(MmmModel.default(sim.dataset, sim.partition), ChainConfig(iterations=3000, burn_in=1000, seed=0))
print(f"kept {samples.n_draws} draws; label switches per group: {samples.meta['label_switch']['switches']}")

# Profiles are only defined up to a swap within each group, so line them up with the truth first.
flips = align_profiles(samples["theta"].mean(0), sim.kernels, sim.partition.assignment)
err = score_l1_to_truth(samples["lam"].mean(0), sim.lam, flips)
print("mean absolute error of the profile-2 score, per group:", np.round(err, 3))

corr = score_correlation_summary(samples)[0]
sign = -1.0 if flips[0] != flips[1] else 1.0
truth = LN_COV[0, 1] / np.sqrt(LN_COV[0, 0] * LN_COV[1, 1])
lo, hi = sorted(sign * np.array(corr["interval"]))
print(f"cross-group logit correlation: {sign * corr['mean']:.3f} (95% interval {lo:.3f} to {hi:.3f}); truth {truth:.3f}")

thinned = type(samples)({k: v[::10] for k, v in samples.fields.items()}, samples.meta)
fit = l1_fit_report(thinned, sim.dataset)
print(f"posterior predictive L1: marginal mean {fit.summary['marginal']['mean']:.3f}, "
      f"pairwise mean {fit.summary['bivariate']['mean']:.3f}")
