"""Epoch effects and Gaussian-process spatial effects in the score mean.

The score logits of subject ``i`` observed in epoch ``t`` at planar location
``s_i`` follow

    psi_i ~ N(beta_t + zeta_i, Sigma_t),   zeta_i = L_t zeta_w_i,   Sigma_t = L_t L_t^T,

where each column ``g`` of the whitened spatial effects ``zeta_w`` is, within
an epoch, a zero-mean Gaussian process with a unit-diagonal squared
exponential correlation (per-axis inverse length scales ``gamma[t, g, :]``).
Epoch effects share a hierarchical prior ``beta_t ~ N(beta, Sigma_beta)``.

One sweep of :func:`st_sweep` updates, in order: kernels, indicators,
Polya-gamma auxiliaries, every ``beta_t`` with the scores integrated out,
the score logits, the whitened spatial effects, each ``Sigma_t`` (an
independence Metropolis-Hastings step that keeps ``zeta`` fixed), the length
scales (random-walk Metropolis on ``log gamma``) and finally ``beta`` and
``Sigma_beta``.  With a single epoch, ``beta`` and ``Sigma_beta`` are pinned to
the prior mean and covariance of the plain sampler, so the spatial-free
single-epoch model is exactly the plain model.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import expit

from .data import Hyperparams
from .gibbs import (
    ChainConfig,
    MmmModel,
    centred_counts,
    drive_chain,
    mu_conditional,
    sample_dirichlet_rows,
    sample_lambda_logits,
    update_indicators,
    update_kernels,
    update_omega,
    _clamped,
)
from .linalg import cholesky, sample_inv_wishart, sample_mvn_precision, spd_inverse
from .rng import make_rng, rng_from_state, rng_state
from .samples import ChainSamples

__all__ = [
    "SpaceTimeCovariates",
    "StHyper",
    "StModel",
    "StState",
    "se_correlation",
    "se_kernel_matrix",
    "gp_conditional",
    "update_beta_t",
    "update_beta_hierarchy",
    "update_zeta",
    "update_sigma_t",
    "length_scale_log_target",
    "update_length_scales",
    "st_sweep",
    "init_st_state",
    "run_st_chain",
    "predict_zeta",
    "GridPrediction",
    "ST_RETAIN",
]

DEFAULT_TAU = 1e-6
DEFAULT_PROPOSAL_SD = 0.3
TARGET_ACCEPTANCE = 0.44
ADAPT_INTERVAL = 50
ST_RETAIN = ("theta", "lam", "beta_t", "beta", "sigma_beta", "sigma_t", "zeta_w", "gamma")


@dataclass(frozen=True)
class SpaceTimeCovariates:
    """Epoch index (0-based) and planar coordinates for every subject."""

    time_id: np.ndarray
    coords: np.ndarray
    n_epochs: int | None = None
    epoch_labels: tuple | None = None

    def __post_init__(self):
        t = np.asarray(self.time_id)
        if t.ndim != 1 or not np.issubdtype(t.dtype, np.integer):
            raise ValueError("time_id must be a 1-D integer array")
        c = np.asarray(self.coords, dtype=float)
        if c.shape != (t.size, 2):
            raise ValueError(f"coords must have shape ({t.size}, 2), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coordinates must be finite")
        T = int(t.max()) + 1 if self.n_epochs is None else int(self.n_epochs)
        if t.size and (t.min() < 0 or t.max() >= T):
            raise ValueError("time_id out of range")
        empty = np.flatnonzero(np.bincount(t, minlength=T) == 0)
        if empty.size:
            raise ValueError(f"epoch(s) {empty.tolist()} have no subjects")
        object.__setattr__(self, "time_id", t.astype(np.int64))
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "n_epochs", T)

    @classmethod
    def from_labels(cls, labels, coords) -> "SpaceTimeCovariates":
        """Map arbitrary epoch labels (e.g. years) to sorted 0-based indices."""
        uniq, idx = np.unique(np.asarray(labels), return_inverse=True)
        return cls(idx.astype(np.int64), coords, len(uniq), tuple(uniq.tolist()))

    def members(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.time_id == t)


# --------------------------------------------------------------------------- kernel


def se_kernel_matrix(coords_a, coords_b, gammas, tau=DEFAULT_TAU, same=False):
    """Squared-exponential correlation between two point sets.

    Entries are ``(exp(-0.5 * sum_d gamma_d * (a_d - b_d)^2) + tau * [same point]) / (1 + tau)``,
    so the diagonal of a set against itself (``same=True``) is exactly 1.
    """
    a = np.atleast_2d(np.asarray(coords_a, dtype=float))
    b = np.atleast_2d(np.asarray(coords_b, dtype=float))
    g = np.asarray(gammas, dtype=float)
    d2 = (a[:, None, :] - b[None, :, :]) ** 2
    K = np.exp(-0.5 * np.einsum("ijd,d->ij", d2, g))
    if same:
        K[np.diag_indices_from(K)] += tau
    return K / (1.0 + tau)


def se_correlation(coords_a, coords_b, gammas, tau=DEFAULT_TAU, normalize=True, same=None) -> float:
    """Kernel value for a single pair of locations.

    ``same`` marks the pair as one subject (nugget added); by default it is
    true when the coordinates coincide.  ``normalize=False`` returns the raw
    ``exp(...) + tau * same`` form.
    """
    a = np.asarray(coords_a, dtype=float)
    b = np.asarray(coords_b, dtype=float)
    if same is None:
        same = bool(np.all(a == b))
    raw = float(np.exp(-0.5 * np.sum(np.asarray(gammas, dtype=float) * (a - b) ** 2))) + tau * same
    return raw / (1.0 + tau) if normalize else raw


def gp_conditional(train_coords, train_values, test_coords, gammas, tau=DEFAULT_TAU):
    """Noise-free GP conditional mean and variance at ``test_coords``.

    ``train_values`` are values of a unit-variance process with the
    correlation of :func:`se_kernel_matrix`.
    """
    K = se_kernel_matrix(train_coords, train_coords, gammas, tau, same=True)
    Ks = se_kernel_matrix(test_coords, train_coords, gammas, tau)
    L = cholesky(K, "spatial correlation matrix")
    alpha = cho_solve((L, True), np.asarray(train_values, dtype=float))
    v = solve_triangular(L, Ks.T, lower=True)
    mean = Ks @ alpha
    var = np.maximum(1.0 - np.sum(v * v, axis=0), 0.0)
    return mean, var


# --------------------------------------------------------------------------- model and state


@dataclass(frozen=True)
class StHyper:
    """Priors specific to the space-time model.

    ``beta ~ N(mu0, Sigma0)`` and ``Sigma_t ~ IW(nu0, Psi0)`` reuse the plain
    model's hyperparameters; ``Sigma_beta ~ IW(nu_beta, Psi_beta)`` and
    ``log gamma ~ N(log_gamma_mean, log_gamma_sd^2)``.
    """

    nu_beta: float
    Psi_beta: np.ndarray
    log_gamma_mean: float = 0.0
    log_gamma_sd: float = 2.0
    tau: float = DEFAULT_TAU
    proposal_sd: float = DEFAULT_PROPOSAL_SD

    def __post_init__(self):
        Psi = np.atleast_2d(np.asarray(self.Psi_beta, dtype=float))
        object.__setattr__(self, "Psi_beta", Psi)
        if not self.nu_beta > Psi.shape[0] - 1:
            raise ValueError("nu_beta must exceed G - 1")
        cholesky(Psi, "Psi_beta")
        if not self.tau > 0:
            raise ValueError("nugget tau must be positive")
        if not self.log_gamma_sd > 0:
            raise ValueError("log_gamma_sd must be positive")
        if not self.proposal_sd >= 0:
            raise ValueError("proposal_sd must be non-negative")

    @classmethod
    def default(cls, G: int, **kw) -> "StHyper":
        return cls(nu_beta=G + 1.0, Psi_beta=np.eye(G), **kw)


@dataclass(frozen=True)
class StModel:
    base: MmmModel
    cov: SpaceTimeCovariates
    st_hyper: StHyper
    spatial: bool = True

    def __post_init__(self):
        if self.cov.time_id.size != self.base.n:
            raise ValueError("covariates and dataset disagree on the number of subjects")
        if self.st_hyper.Psi_beta.shape[0] != self.base.G:
            raise ValueError("Psi_beta has the wrong dimension")
        object.__setattr__(self, "epochs", tuple(self.cov.members(t) for t in range(self.cov.n_epochs)))

    @classmethod
    def default(cls, dataset, partition, cov, spatial=True, **kw) -> "StModel":
        return cls(MmmModel.default(dataset, partition), cov, StHyper.default(partition.n_groups, **kw), spatial)

    @property
    def hyper(self) -> Hyperparams:
        return self.base.hyper

    @property
    def T(self) -> int:
        return self.cov.n_epochs

    @property
    def G(self) -> int:
        return self.base.G

    @property
    def hierarchical(self) -> bool:
        return self.T > 1


@dataclass
class StState:
    theta: np.ndarray
    z: np.ndarray
    psi: np.ndarray
    omega: np.ndarray
    k: np.ndarray
    beta_t: np.ndarray  # (T, G)
    beta: np.ndarray  # (G,)
    sigma_beta: np.ndarray  # (G, G)
    sigma_t: np.ndarray  # (T, G, G)
    zeta_w: np.ndarray  # (n, G), whitened spatial effects
    gamma: np.ndarray  # (T, G, 2)
    proposal_sd: np.ndarray  # (T, G, 2)
    accepted: np.ndarray  # (T, G, 2) acceptance counts since the last adaptation
    sigma_accepted: np.ndarray  # (T,) total Sigma_t acceptances
    iteration: np.ndarray  # scalar, sweeps done

    @property
    def lam(self) -> np.ndarray:
        return expit(self.psi)

    def zeta(self, model: StModel) -> np.ndarray:
        out = np.empty_like(self.zeta_w)
        for t, idx in enumerate(model.epochs):
            out[idx] = self.zeta_w[idx] @ np.linalg.cholesky(self.sigma_t[t]).T
        return out

    def as_arrays(self) -> dict:
        return {f.name: np.asarray(getattr(self, f.name), dtype=float) for f in fields(self)}

    @classmethod
    def from_arrays(cls, arrays) -> "StState":
        kw = {f.name: np.array(arrays[f.name]) for f in fields(cls)}
        kw["z"] = kw["z"].astype(np.int8)
        kw["iteration"] = kw["iteration"].reshape(())
        return cls(**kw)


def _subject_means(state: StState, model: StModel) -> np.ndarray:
    """Prior mean ``beta_t + zeta_i`` of every subject's logits."""
    return state.beta_t[model.cov.time_id] + state.zeta(model)


# --------------------------------------------------------------------------- updates


def update_beta_t(state: StState, model: StModel, rng) -> np.ndarray:
    """Each ``beta_t`` given auxiliaries, ``zeta``, ``Sigma_t`` and the hierarchy, scores integrated out.

    Epochs without subjects fall back to ``N(beta, Sigma_beta)``.
    """
    prior_inv = spd_inverse(state.sigma_beta, "Sigma_beta")
    zeta = state.zeta(model)
    out = np.empty_like(state.beta_t)
    for t, idx in enumerate(model.epochs):
        om = state.omega[idx]
        shifted = state.k[idx] - om * zeta[idx]
        prec, lin = mu_conditional(om, shifted, state.sigma_t[t], state.beta, prior_inv)
        out[t] = sample_mvn_precision(prec, lin, rng, "epoch effect precision")
    return out


def update_psi(state: StState, model: StModel, rng) -> np.ndarray:
    mean = _subject_means(state, model)
    out = np.empty_like(state.psi)
    for t, idx in enumerate(model.epochs):
        sig_inv = spd_inverse(state.sigma_t[t], "Sigma_t")
        out[idx] = sample_lambda_logits(state.omega[idx], state.k[idx], mean[idx], sig_inv, rng)
    return out


def update_beta_hierarchy(state: StState, model: StModel, rng):
    """``beta | beta_t`` (Gaussian) and ``Sigma_beta | beta_t, beta`` (inverse-Wishart).

    With a single epoch the pair stays at ``(mu0, Sigma0)``.
    """
    hyper = model.hyper
    if not model.hierarchical:
        return hyper.mu0.copy(), hyper.Sigma0.copy()
    T = model.T
    sb_inv = spd_inverse(state.sigma_beta, "Sigma_beta")
    s0_inv = spd_inverse(hyper.Sigma0, "Sigma0")
    prec = s0_inv + T * sb_inv
    lin = s0_inv @ hyper.mu0 + sb_inv @ state.beta_t.sum(axis=0)
    beta = sample_mvn_precision(0.5 * (prec + prec.T), lin, rng, "beta precision")
    r = state.beta_t - beta
    sigma_beta = sample_inv_wishart(model.st_hyper.nu_beta + T, model.st_hyper.Psi_beta + r.T @ r, rng)
    return beta, sigma_beta


def _epoch_kernels(state: StState, model: StModel, t: int):
    coords = model.cov.coords[model.epochs[t]]
    return [
        se_kernel_matrix(coords, coords, state.gamma[t, g], model.st_hyper.tau, same=True) for g in range(model.G)
    ]


def update_zeta(state: StState, model: StModel, rng) -> np.ndarray:
    """Whitened spatial effects given the logits, per epoch and group.

    Writing ``u = L_t^{-1}(psi_i - beta_t)`` gives ``u_g = zeta_w_g + e`` with
    ``e ~ N(0, I)``, so each ``zeta_w_g ~ N(K (K + I)^{-1} u_g, K - K (K + I)^{-1} K)``;
    the draw uses the prior-sample correction ``f + K (K + I)^{-1} (u - f - e)``.
    """
    if not model.spatial:
        return np.zeros_like(state.zeta_w)
    out = np.empty_like(state.zeta_w)
    for t, idx in enumerate(model.epochs):
        L = cholesky(state.sigma_t[t], "Sigma_t")
        u = solve_triangular(L, (_clamped(state.psi[idx]) - state.beta_t[t]).T, lower=True)  # (G, N_t)
        for g, K in enumerate(_epoch_kernels(state, model, t)):
            Lk = cholesky(K, "spatial correlation matrix")
            f = Lk @ rng.standard_normal(len(idx))
            e = rng.standard_normal(len(idx))
            A = cholesky(K + np.eye(len(idx)), "K + I")
            out[idx, g] = f + K @ cho_solve((A, True), u[g] - f - e)
    return out


def _zeta_log_density(zeta_w_blocks, kernel_chols, logdet_sigma, n_t):
    """``log p(zeta | Sigma_t)`` up to a constant: Jacobian plus whitened GP quadratic forms."""
    quad = 0.0
    for zw, Lk in zip(zeta_w_blocks, kernel_chols):
        v = solve_triangular(Lk, zw, lower=True)
        quad += v @ v
    return -0.5 * n_t * logdet_sigma - 0.5 * quad


def update_sigma_t(state: StState, model: StModel, rng):
    """Per-epoch covariance update; returns ``(sigma_t, zeta_w, accepted)``.

    Without spatial effects this is the conjugate inverse-Wishart draw.
    Otherwise an inverse-Wishart proposal built from the residuals
    ``psi_i - beta_t - zeta_i`` is accepted with probability
    ``min(1, p(zeta | Sigma') / p(zeta | Sigma))`` and the whitened effects
    are re-expressed under the accepted factor so that ``zeta`` is unchanged.
    """
    hyper = model.hyper
    sigma_t = state.sigma_t.copy()
    zeta_w = state.zeta_w.copy()
    accepted = np.zeros(model.T, dtype=bool)
    zeta = state.zeta(model) if model.spatial else np.zeros_like(state.psi)
    for t, idx in enumerate(model.epochs):
        r = _clamped(state.psi[idx]) - state.beta_t[t] - zeta[idx]
        prop = sample_inv_wishart(hyper.nu0 + len(idx), hyper.Psi0 + r.T @ r, rng)
        if not model.spatial:
            sigma_t[t], accepted[t] = prop, True
            continue
        chols = [cholesky(K, "spatial correlation matrix") for K in _epoch_kernels(state, model, t)]
        L_old = cholesky(sigma_t[t], "Sigma_t")
        try:
            L_new = np.linalg.cholesky(prop)
        except np.linalg.LinAlgError:
            continue
        zw_old = solve_triangular(L_old, zeta[idx].T, lower=True)
        zw_new = solve_triangular(L_new, zeta[idx].T, lower=True)
        ld_old = 2.0 * np.sum(np.log(np.diag(L_old)))
        ld_new = 2.0 * np.sum(np.log(np.diag(L_new)))
        log_ratio = _zeta_log_density(zw_new, chols, ld_new, len(idx)) - _zeta_log_density(
            zw_old, chols, ld_old, len(idx)
        )
        if np.log(rng.random()) < log_ratio:
            sigma_t[t], accepted[t] = prop, True
            zeta_w[idx] = zw_new.T
    return sigma_t, zeta_w, accepted


def length_scale_log_target(log_gamma, zeta_w_g, coords, other_gamma, axis, tau, prior_mean=0.0, prior_sd=2.0):
    """Log target of one ``log gamma`` coordinate: GP marginal of the whitened effects plus log-normal prior.

    The prior is expressed as a density in ``gamma`` and the change of
    variables to ``log gamma`` contributes ``+ log gamma``.  Returns ``-inf``
    when the correlation matrix cannot be factorised.
    """
    gam = np.array(other_gamma, dtype=float)
    gam[axis] = np.exp(log_gamma)
    K = se_kernel_matrix(coords, coords, gam, tau, same=True)
    try:
        Lk = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return -np.inf
    v = solve_triangular(Lk, zeta_w_g, lower=True)
    loglik = -np.sum(np.log(np.diag(Lk))) - 0.5 * v @ v
    z = (log_gamma - prior_mean) / prior_sd
    log_prior_gamma = -0.5 * z * z - log_gamma  # log-normal density in gamma
    return loglik + log_prior_gamma + log_gamma


def update_length_scales(state: StState, model: StModel, rng, proposal_sd=None):
    """Random-walk Metropolis on each ``log gamma[t, g, d]``.

    Returns ``(gamma, accepted)`` where ``accepted`` is a boolean array of
    the same shape.  ``proposal_sd`` defaults to the per-coordinate values in
    the state; a zero scale leaves the chain in place.
    """
    gamma = state.gamma.copy()
    accepted = np.zeros(gamma.shape, dtype=bool)
    if not model.spatial:
        return gamma, accepted
    sd = state.proposal_sd if proposal_sd is None else np.broadcast_to(proposal_sd, gamma.shape)
    sh = model.st_hyper
    for t, idx in enumerate(model.epochs):
        coords = model.cov.coords[idx]
        for g in range(model.G):
            zw = state.zeta_w[idx, g]
            for d in range(gamma.shape[2]):
                cur = np.log(gamma[t, g, d])
                step = sd[t, g, d] * rng.standard_normal()
                if step == 0.0:
                    accepted[t, g, d] = True
                    continue
                args = (zw, coords, gamma[t, g], d, sh.tau, sh.log_gamma_mean, sh.log_gamma_sd)
                log_ratio = length_scale_log_target(cur + step, *args) - length_scale_log_target(cur, *args)
                if np.log(rng.random()) < log_ratio:
                    gamma[t, g, d] = np.exp(cur + step)
                    accepted[t, g, d] = True
    return gamma, accepted


def _adapt(state: StState):
    """Robbins-Monro style nudge of the proposal scales toward the target acceptance rate."""
    rate = state.accepted / ADAPT_INTERVAL
    k = max(1.0, float(state.iteration) / ADAPT_INTERVAL)
    state.proposal_sd = state.proposal_sd * np.exp((rate - TARGET_ACCEPTANCE) / np.sqrt(k))
    state.accepted = np.zeros_like(state.accepted)


def st_sweep(state: StState, model: StModel, rng, adapt: bool = False) -> StState:
    base = model.base
    state.theta = update_kernels(state, base, rng)
    state.z = update_indicators(state, base, rng)
    state.k = centred_counts(state.z, base)
    state.omega = update_omega(state, base, rng)
    state.beta_t = update_beta_t(state, model, rng)
    state.psi = update_psi(state, model, rng)
    state.zeta_w = update_zeta(state, model, rng)
    state.sigma_t, state.zeta_w, acc_sigma = update_sigma_t(state, model, rng)
    state.sigma_accepted = state.sigma_accepted + acc_sigma
    state.gamma, acc = update_length_scales(state, model, rng)
    state.beta, state.sigma_beta = update_beta_hierarchy(state, model, rng)
    state.iteration = state.iteration + 1
    if adapt and model.spatial:
        state.accepted = state.accepted + acc
        if int(state.iteration) % ADAPT_INTERVAL == 0:
            _adapt(state)
    return state


def init_st_state(model: StModel, rng) -> StState:
    base, hyper, G, T, n = model.base, model.hyper, model.G, model.T, model.base.n
    mask = np.broadcast_to(base.level_mask[:, None, :], (base.p, 2, base.dataset.max_levels))
    theta = sample_dirichlet_rows(np.broadcast_to(base.alpha_mat[:, None, :], mask.shape), mask, rng)
    state = StState(
        theta=theta,
        z=np.zeros((n, base.p), dtype=np.int8),
        psi=np.zeros((n, G)),
        omega=np.ones((n, G)),
        k=np.zeros((n, G)),
        beta_t=np.tile(hyper.mu0, (T, 1)),
        beta=hyper.mu0.copy(),
        sigma_beta=hyper.Sigma0.copy(),
        sigma_t=np.tile(hyper.Psi0, (T, 1, 1)),
        zeta_w=np.zeros((n, G)),
        gamma=np.ones((T, G, 2)),
        proposal_sd=np.full((T, G, 2), model.st_hyper.proposal_sd),
        accepted=np.zeros((T, G, 2)),
        sigma_accepted=np.zeros(T),
        iteration=np.array(0.0),
    )
    state.z = update_indicators(state, base, rng)
    state.k = centred_counts(state.z, base)
    state.omega = update_omega(state, base, rng)
    return state


_ST_GETTERS = {
    "theta": lambda s: s.theta,
    "lam": lambda s: s.lam,
    "psi": lambda s: s.psi,
    "beta_t": lambda s: s.beta_t,
    "beta": lambda s: s.beta,
    "sigma_beta": lambda s: s.sigma_beta,
    "sigma_t": lambda s: s.sigma_t,
    "zeta_w": lambda s: s.zeta_w,
    "gamma": lambda s: s.gamma,
    "omega": lambda s: s.omega,
    "z": lambda s: s.z,
}


def run_st_chain(model: StModel, config: ChainConfig = ChainConfig(retain=ST_RETAIN), resume=None) -> ChainSamples:
    """Run the space-time sampler; proposal scales adapt only during burn-in."""
    if resume is None:
        rng = make_rng(config.seed)
        state = init_st_state(model, rng)
        start, meta = 0, {}
    else:
        if resume.meta.get("dataset_digest") != model.base.dataset.digest():
            raise ValueError("archive was produced from a different dataset")
        if resume.final_state is None or resume.rng_state is None:
            raise ValueError("archive has no stored state to resume from")
        rng = rng_from_state(resume.rng_state)
        state = StState.from_arrays(resume.final_state)
        start, meta = int(resume.meta["iterations"]), dict(resume.meta)

    def step(s, m, r):
        return st_sweep(s, m, r, adapt=int(s.iteration) < config.burn_in)

    meta.update(
        model="mmm-spacetime",
        dataset_digest=model.base.dataset.digest(),
        n_groups=model.G,
        n_epochs=model.T,
        spatial=model.spatial,
        tau=model.st_hyper.tau,
        assignment=model.base.partition.assignment.tolist(),
        levels=model.base.dataset.levels.tolist(),
        time_id=model.cov.time_id.tolist(),
        coords=model.cov.coords.tolist(),
    )
    state, out, meta = drive_chain(state, step, model, config, rng, _ST_GETTERS, None, start, resume, meta)
    meta["sigma_t_acceptance"] = (state.sigma_accepted / max(1, int(state.iteration))).tolist()
    meta["proposal_sd"] = state.proposal_sd.tolist()
    samples = ChainSamples(out, meta, state.as_arrays(), rng_state(rng))
    if "theta" in out and len(out["theta"]):
        from .diagnostics import label_switch_monitor

        samples.meta["label_switch"] = label_switch_monitor(samples, model.base.partition).to_dict()
    return samples


# --------------------------------------------------------------------------- prediction


@dataclass
class GridPrediction:
    """Posterior summaries of the spatial effects at new locations.

    Arrays have shape ``(T, G, n_points)``.  ``mean``/``sd`` are on the logit
    scale of ``zeta``; ``whitened_mean`` is the posterior mean of the
    whitened effect; ``prob_scale_mean`` averages ``expit(beta_t + zeta)``
    over draws.
    """

    grid: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    whitened_mean: np.ndarray
    prob_scale_mean: np.ndarray
    epoch_labels: tuple | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "group", "x", "y", "mean", "sd", "prob_scale_mean"])
        T, G, m = self.mean.shape
        for t in range(T):
            label = self.epoch_labels[t] if self.epoch_labels else t + 1
            for g in range(G):
                for i in range(m):
                    w.writerow(
                        [
                            label,
                            g + 1,
                            repr(float(self.grid[i, 0])),
                            repr(float(self.grid[i, 1])),
                            f"{self.mean[t, g, i]:.10g}",
                            f"{self.sd[t, g, i]:.10g}",
                            f"{self.prob_scale_mean[t, g, i]:.10g}",
                        ]
                    )
        return buf.getvalue()


def predict_zeta(grid, samples: ChainSamples, cov: SpaceTimeCovariates | None = None, tau=None) -> GridPrediction:
    """GP predictive summaries of ``zeta_t`` over ``grid`` for every epoch and group.

    Per draw, the whitened effect at a grid point has the usual noise-free
    conditional mean and variance given that draw's training values and
    length scales; it is mapped through the draw's ``L_t``.  Draws are
    combined with the law of total variance.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[1] != 2 or not np.all(np.isfinite(grid)):
        raise ValueError("grid must be a finite (m, 2) coordinate array")
    meta = samples.meta
    if cov is None:
        cov = SpaceTimeCovariates(np.asarray(meta["time_id"], dtype=np.int64), np.asarray(meta["coords"]))
    tau = float(meta.get("tau", DEFAULT_TAU)) if tau is None else tau
    zeta_w, gamma, sigma_t, beta_t = samples["zeta_w"], samples["gamma"], samples["sigma_t"], samples["beta_t"]
    S, T, G = gamma.shape[0], gamma.shape[1], gamma.shape[2]
    m = len(grid)
    mean_sum = np.zeros((T, G, m))
    sq_sum = np.zeros((T, G, m))
    var_sum = np.zeros((T, G, m))
    w_sum = np.zeros((T, G, m))
    prob_sum = np.zeros((T, G, m))
    for s in range(S):
        for t in range(T):
            idx = cov.members(t)
            coords = cov.coords[idx]
            mw = np.empty((G, m))
            vw = np.empty((G, m))
            for g in range(G):
                mw[g], vw[g] = gp_conditional(coords, zeta_w[s, idx, g], grid, gamma[s, t, g], tau)
            L = np.linalg.cholesky(sigma_t[s, t])
            mz = L @ mw
            vz = (L**2) @ vw
            mean_sum[t] += mz
            sq_sum[t] += mz**2
            var_sum[t] += vz
            w_sum[t] += mw
            prob_sum[t] += expit(beta_t[s, t][:, None] + mz)
    mean = mean_sum / S
    total_var = var_sum / S + np.maximum(sq_sum / S - mean**2, 0.0)
    return GridPrediction(grid, mean, np.sqrt(total_var), w_sum / S, prob_sum / S, cov.epoch_labels)
