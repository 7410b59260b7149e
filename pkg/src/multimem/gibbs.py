"""Gibbs sampler for the multivariate mixed membership model with two profiles per group.

Each subject ``i`` carries one membership score per group, ``lam[i, g]``,
the probability that a variable of group ``g`` is answered according to
profile 2.  The logits of the scores follow a multivariate normal
``N(mu, Sigma)``; Polya-gamma augmentation makes every update conjugate.

One sweep performs, in order:

1. kernels ``theta | z, x`` (Dirichlet),
2. profile indicators ``z | lam, theta, x`` (Bernoulli),
3. Polya-gamma auxiliaries ``omega | lam, z``,
4. ``mu | omega, z, Sigma`` with the scores integrated out,
5. scores ``lam | omega, z, mu, Sigma``,
6. ``Sigma | lam, mu`` (inverse-Wishart).

Steps 4 and 5 together are an exact block draw of ``(mu, lam)``.  Drawing
the scores before the collapsed ``mu`` update would leave ``lam`` out of
step with ``mu`` when ``Sigma`` is updated, which changes the stationary
distribution.

Internally profiles are indexed 0 and 1 (profile 1 and profile 2 of the
model) and ``z[i, j] = 1`` means profile 2.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit

from .data import CategoricalDataset, GroupPartition, Hyperparams, default_hyperparams, validate_partition
from .linalg import NumericalError, sample_inv_wishart, sample_mvn_precision, spd_inverse
from .polya_gamma import sample_pg
from .rng import BIT_GENERATOR, make_rng, rng_from_state, rng_state
from .samples import ChainSamples

__all__ = [
    "LOGIT_BOUND",
    "MmmModel",
    "ChainState",
    "ChainConfig",
    "SamplerError",
    "init_state",
    "update_kernels",
    "update_indicators",
    "update_omega",
    "update_lambda",
    "update_mu",
    "update_sigma",
    "sweep",
    "run_chain",
    "check_state",
]

logger = logging.getLogger(__name__)

#: Logits are clamped to this magnitude before Polya-gamma and Gaussian steps.
LOGIT_BOUND = 35.0

DEFAULT_RETAIN = ("theta", "lam", "mu", "sigma")


class SamplerError(RuntimeError):
    """A sweep failed; the message carries the iteration index."""

    def __init__(self, iteration, cause):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


@dataclass(frozen=True)
class MmmModel:
    """Data, variable partition and priors, with derived lookup arrays."""

    dataset: CategoricalDataset
    partition: GroupPartition
    hyper: Hyperparams

    def __post_init__(self):
        validate_partition(self.dataset, self.partition)
        if self.hyper.n_groups != self.partition.n_groups:
            raise ValueError("hyperparameters and partition disagree on the number of groups")
        if len(self.hyper.alpha) != self.dataset.p or any(
            a.size != d for a, d in zip(self.hyper.alpha, self.dataset.levels)
        ):
            raise ValueError("Dirichlet concentrations do not match the variable levels")
        p, dmax = self.dataset.p, self.dataset.max_levels
        mask = np.arange(dmax)[None, :] < self.dataset.levels[:, None]
        onehot = np.zeros((p, self.partition.n_groups))
        onehot[np.arange(p), self.partition.assignment] = 1.0
        derived = {
            "level_mask": mask,
            "alpha_mat": self.hyper.alpha_matrix(),
            "group_onehot": onehot,
            "group_sizes": self.partition.group_sizes.astype(float),
            "flat_index": (np.arange(p)[None, :] * 2 * dmax + self.dataset.codes).ravel(),
        }
        for k, v in derived.items():
            object.__setattr__(self, k, v)

    @classmethod
    def default(cls, dataset, partition) -> "MmmModel":
        return cls(dataset, partition, default_hyperparams(dataset, partition))

    @property
    def n(self):
        return self.dataset.n

    @property
    def p(self):
        return self.dataset.p

    @property
    def G(self):
        return self.partition.n_groups


@dataclass
class ChainState:
    """One Gibbs iterate.

    ``theta`` has shape ``(p, 2, max_levels)`` and is zero beyond each
    variable's level count; ``psi`` holds the score logits, ``k`` the
    centred profile-2 counts per group.
    """

    theta: np.ndarray
    z: np.ndarray
    psi: np.ndarray
    omega: np.ndarray
    k: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def lam(self) -> np.ndarray:
        return expit(self.psi)

    def copy(self) -> "ChainState":
        return ChainState(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def as_arrays(self) -> dict:
        return {f.name: np.asarray(getattr(self, f.name), dtype=float) for f in fields(self)}

    @classmethod
    def from_arrays(cls, arrays) -> "ChainState":
        kw = {f.name: np.array(arrays[f.name]) for f in fields(cls)}
        kw["z"] = kw["z"].astype(np.int8)
        return cls(**kw)

    def digest(self) -> str:
        h = hashlib.sha256()
        for f in fields(self):
            h.update(np.ascontiguousarray(getattr(self, f.name), dtype="<f8").tobytes())
        return h.hexdigest()


def check_state(state: ChainState, model: MmmModel, atol=1e-12) -> None:
    """Assert every invariant of a chain state; raises ``AssertionError``."""
    th = state.theta
    assert np.all(th >= 0), "negative kernel probability"
    assert np.allclose(th.sum(-1), 1.0, atol=atol), "kernel does not sum to one"
    assert np.all(th[~np.broadcast_to(model.level_mask[:, None, :], th.shape)] == 0), "padding not zero"
    lam = state.lam
    assert np.all((lam > 0) & (lam < 1)), "score outside (0, 1)"
    assert np.all(state.omega > 0), "non-positive Polya-gamma draw"
    half = model.group_sizes / 2
    assert np.all(np.abs(state.k) <= half + 1e-12), "k outside [-p_g/2, p_g/2]"
    assert np.allclose(state.sigma, state.sigma.T), "Sigma not symmetric"
    np.linalg.cholesky(state.sigma)


# --------------------------------------------------------------------------- single steps


def _clamped(psi):
    return np.clip(psi, -LOGIT_BOUND, LOGIT_BOUND)


def sample_dirichlet_rows(conc, mask, rng):
    """Dirichlet draws along the last axis; entries outside ``mask`` are exactly zero."""
    g = rng.standard_gamma(np.where(mask, conc, 1.0))
    g = np.where(mask, g, 0.0)
    tot = g.sum(axis=-1, keepdims=True)
    if np.any(tot <= 0):
        raise NumericalError("Dirichlet draw underflowed to zero")
    return g / tot


def kernel_counts(z, model: MmmModel) -> np.ndarray:
    """Counts of each level by variable and profile, shape ``(p, 2, max_levels)``."""
    p, dmax = model.p, model.dataset.max_levels
    idx = model.flat_index + (z.ravel().astype(np.int64) * dmax)
    return np.bincount(idx, minlength=p * 2 * dmax).reshape(p, 2, dmax).astype(float)


def update_kernels(state: ChainState, model: MmmModel, rng) -> np.ndarray:
    """Step 1: ``theta[j, h] ~ Dir(alpha_j + level counts among subjects with z_ij = h)``."""
    conc = model.alpha_mat[:, None, :] + kernel_counts(state.z, model)
    mask = np.broadcast_to(model.level_mask[:, None, :], conc.shape)
    return sample_dirichlet_rows(conc, mask, rng)


def profile2_probability(lam_ij, theta1, theta2):
    denom = (1.0 - lam_ij) * theta1 + lam_ij * theta2
    if np.any(denom <= 0):
        i, j = np.argwhere(denom <= 0)[0]
        raise NumericalError(f"both kernels give zero probability to the observed level (subject {i}, variable {j})")
    return lam_ij * theta2 / denom


def update_indicators(state: ChainState, model: MmmModel, rng) -> np.ndarray:
    """Step 2: draw every ``z_ij`` from its two-point conditional."""
    codes = model.dataset.codes
    cols = np.arange(model.p)[None, :]
    lam_ij = state.lam[:, model.partition.assignment]
    prob = profile2_probability(lam_ij, state.theta[cols, 0, codes], state.theta[cols, 1, codes])
    return (rng.random(codes.shape) < prob).astype(np.int8)


def centred_counts(z, model: MmmModel) -> np.ndarray:
    """``k[i, g]`` = number of group-``g`` variables on profile 2 minus ``p_g / 2``."""
    return z.astype(float) @ model.group_onehot - model.group_sizes / 2.0


def update_omega(state: ChainState, model: MmmModel, rng) -> np.ndarray:
    """Step 3: ``omega[i, g] ~ PG(p_g, logit lam[i, g])``."""
    b = np.broadcast_to(model.group_sizes.astype(np.int64), state.psi.shape)
    return sample_pg(b, _clamped(state.psi), rng)


def lambda_conditional(omega, k, mean, sigma_inv):
    """Per-subject precision and linear term of the Gaussian conditional of the logits.

    ``mean`` is either a ``G`` vector or an ``(n, G)`` array of prior means.
    """
    n, G = omega.shape
    prec = np.broadcast_to(sigma_inv, (n, G, G)).copy()
    prec[:, np.arange(G), np.arange(G)] += omega
    lin = np.broadcast_to(mean, (n, G)) @ sigma_inv.T + k
    return prec, lin


def sample_lambda_logits(omega, k, mean, sigma_inv, rng):
    prec, lin = lambda_conditional(omega, k, mean, sigma_inv)
    try:
        L = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        raise NumericalError("score precision matrix is not positive definite") from None
    m = np.linalg.solve(prec, lin[..., None])[..., 0]
    eps = rng.standard_normal(lin.shape)
    noise = np.linalg.solve(np.swapaxes(L, 1, 2), eps[..., None])[..., 0]
    return _clamped(m + noise)


def update_lambda(state: ChainState, model: MmmModel, rng) -> np.ndarray:
    """Step 5 (score logits): ``N(Sigma* (Sigma^{-1} mu + k_i), Sigma*)`` with
    ``Sigma* = (diag(omega_i) + Sigma^{-1})^{-1}``.  Returns the new logits."""
    sigma_inv = spd_inverse(state.sigma, "Sigma")
    return sample_lambda_logits(state.omega, state.k, state.mu, sigma_inv, rng)


def pseudo_obs_precisions(omega, sigma):
    """``Upsilon_i = (diag(1 / omega_i) + Sigma)^{-1}`` for every subject."""
    n, G = omega.shape
    m = np.broadcast_to(sigma, (n, G, G)).copy()
    m[:, np.arange(G), np.arange(G)] += 1.0 / omega
    return np.linalg.inv(m)


def mu_conditional(omega, k, sigma, mu0, Sigma0_inv):
    """Precision and linear term of ``mu | omega, z, Sigma`` with scores integrated out."""
    ups = pseudo_obs_precisions(omega, sigma) if omega.shape[0] else np.zeros((0, *sigma.shape))
    y = k / omega if omega.shape[0] else np.zeros((0, sigma.shape[0]))
    prec = ups.sum(axis=0) + Sigma0_inv
    lin = np.einsum("nab,nb->a", ups, y) + Sigma0_inv @ mu0
    return 0.5 * (prec + prec.T), lin


def update_mu(state: ChainState, model: MmmModel, rng) -> np.ndarray:
    """Step 4 (mean): collapsed Gaussian update of ``mu``."""
    Sigma0_inv = spd_inverse(model.hyper.Sigma0, "Sigma0")
    prec, lin = mu_conditional(state.omega, state.k, state.sigma, model.hyper.mu0, Sigma0_inv)
    return sample_mvn_precision(prec, lin, rng, "mu posterior precision")


def sigma_scale(psi, mean, Psi0):
    r = _clamped(psi) - mean
    return Psi0 + r.T @ r


def update_sigma(state: ChainState, model: MmmModel, rng) -> np.ndarray:
    """Step 6: ``Sigma ~ IW(nu0 + n, Psi0 + sum_i (psi_i - mu)(psi_i - mu)^T)``."""
    scale = sigma_scale(state.psi, state.mu, model.hyper.Psi0)
    return sample_inv_wishart(model.hyper.nu0 + state.psi.shape[0], scale, rng)


# --------------------------------------------------------------------------- chain driver


def init_state(model: MmmModel, rng) -> ChainState:
    """Prior kernels, scores at 0.5, ``mu = mu0``, ``Sigma = Psi0``, one pass of steps 2-3."""
    n, p, G = model.n, model.p, model.G
    mask = np.broadcast_to(model.level_mask[:, None, :], (p, 2, model.dataset.max_levels))
    theta = sample_dirichlet_rows(np.broadcast_to(model.alpha_mat[:, None, :], mask.shape), mask, rng)
    state = ChainState(
        theta=theta,
        z=np.zeros((n, p), dtype=np.int8),
        psi=np.zeros((n, G)),
        omega=np.ones((n, G)),
        k=np.zeros((n, G)),
        mu=model.hyper.mu0.copy(),
        sigma=model.hyper.Psi0.copy(),
    )
    state.z = update_indicators(state, model, rng)
    state.k = centred_counts(state.z, model)
    state.omega = update_omega(state, model, rng)
    return state


def sweep(state: ChainState, model: MmmModel, rng) -> ChainState:
    """One full Gibbs sweep, updating ``state`` in place and returning it."""
    state.theta = update_kernels(state, model, rng)
    state.z = update_indicators(state, model, rng)
    state.k = centred_counts(state.z, model)
    state.omega = update_omega(state, model, rng)
    state.mu = update_mu(state, model, rng)
    state.psi = update_lambda(state, model, rng)
    state.sigma = update_sigma(state, model, rng)
    return state


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 5000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    retain: tuple = DEFAULT_RETAIN
    debug: bool = False

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")

    def retained_count(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def is_retained(self, it: int) -> bool:
        """Whether 0-based iteration ``it`` is kept."""
        done = it + 1 - self.burn_in
        return done > 0 and done % self.thin == 0


_FIELD_GETTERS = {
    "theta": lambda s: s.theta,
    "lam": lambda s: s.lam,
    "psi": lambda s: s.psi,
    "z": lambda s: s.z,
    "omega": lambda s: s.omega,
    "k": lambda s: s.k,
    "mu": lambda s: s.mu,
    "sigma": lambda s: s.sigma,
}


def drive_chain(state, step, model, config: ChainConfig, rng, getters, check=None, start=0, previous=None, meta=None):
    """Shared loop: run sweeps ``start .. iterations - 1`` and collect retained fields."""
    unknown = set(config.retain) - set(getters)
    if unknown:
        raise ValueError(f"cannot retain unknown field(s) {sorted(unknown)}")
    kept = {name: [] for name in config.retain}
    t0 = time.perf_counter()
    for it in range(start, config.iterations):
        try:
            state = step(state, model, rng)
            if config.debug and check is not None:
                check(state, model)
        except (NumericalError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            raise SamplerError(it, exc) from exc
        if config.is_retained(it):
            for name in config.retain:
                kept[name].append(np.array(getters[name](state), dtype=float))
    elapsed = time.perf_counter() - t0
    out = {}
    for name in config.retain:
        new = np.array(kept[name]) if kept[name] else np.zeros((0,))
        if previous is not None and name in previous.fields and previous.n_draws:
            new = np.concatenate([previous.fields[name], new]) if kept[name] else previous.fields[name]
        out[name] = new
    meta = dict(meta or {})
    meta.update(
        iterations=config.iterations,
        burn_in=config.burn_in,
        thin=config.thin,
        seed=config.seed,
        retain=list(config.retain),
        bit_generator=BIT_GENERATOR,
        wall_time=meta.get("wall_time", 0.0) + elapsed,
    )
    return state, out, meta


def run_chain(model: MmmModel, config: ChainConfig = ChainConfig(), resume: ChainSamples | None = None) -> ChainSamples:
    """Run the sampler and return the retained draws.

    Passing the output of an earlier, shorter run as ``resume`` continues that
    chain from its stored state and generator; the result equals a single run
    of ``config.iterations`` sweeps with the same seed.
    """
    if resume is None:
        rng = make_rng(config.seed)
        state = init_state(model, rng)
        start, meta = 0, {}
    else:
        _check_resume(resume, model, config)
        rng = rng_from_state(resume.rng_state)
        state = ChainState.from_arrays(resume.final_state)
        start, meta = int(resume.meta["iterations"]), dict(resume.meta)
    meta.update(
        model="mmm",
        dataset_digest=model.dataset.digest(),
        n_groups=model.G,
        assignment=model.partition.assignment.tolist(),
        levels=model.dataset.levels.tolist(),
    )
    state, out, meta = drive_chain(state, sweep, model, config, rng, _FIELD_GETTERS, check_state, start, resume, meta)
    samples = ChainSamples(out, meta, state.as_arrays(), rng_state(rng))
    if "theta" in out and len(out["theta"]):
        from .diagnostics import label_switch_monitor

        samples.meta["label_switch"] = label_switch_monitor(samples, model.partition).to_dict()
    return samples


def _check_resume(resume, model, config):
    meta = resume.meta
    if meta.get("dataset_digest") != model.dataset.digest():
        raise ValueError("archive was produced from a different dataset")
    for key in ("burn_in", "thin", "seed"):
        if meta.get(key) != getattr(config, key):
            raise ValueError(f"resume configuration changes {key}: {meta.get(key)} -> {getattr(config, key)}")
    if list(meta.get("retain", [])) != list(config.retain):
        raise ValueError("resume configuration changes the retained fields")
    if config.iterations < int(meta["iterations"]):
        raise ValueError("resume target is shorter than the archived chain")
    if resume.final_state is None or resume.rng_state is None:
        raise ValueError("archive has no stored state to resume from")
