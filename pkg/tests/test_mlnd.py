import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from multimem.mlnd import (
    GroupShape,
    MlndParams,
    clip_simplex,
    compound_params,
    linear_transform,
    log_odds_mean,
    logpdf,
    odds_ratio_mean,
    sample,
    to_logits,
    to_simplex,
    transform_points,
)

S2 = GroupShape((2,))


def test_to_simplex_examples():
    assert to_simplex([0.0], S2).tolist() == [0.5, 0.5]
    assert to_simplex([np.log(2)], S2) == pytest.approx([2 / 3, 1 / 3], abs=1e-15)
    out = to_simplex(np.zeros(3), GroupShape((2, 3)))
    assert out == pytest.approx([0.5, 0.5, 1 / 3, 1 / 3, 1 / 3])
    with pytest.raises(ValueError):
        to_simplex([0.0, 1.0], S2)


def test_to_logits_examples():
    assert to_logits([0.5, 0.5], S2) == pytest.approx([0.0])
    assert to_logits([2 / 3, 1 / 3], S2) == pytest.approx([np.log(2)])
    with pytest.raises(ValueError):
        to_logits([1.0, 0.0], S2)


@given(st.lists(st.floats(-20, 20), min_size=5, max_size=5))
def test_round_trip(y):
    shape = GroupShape((2, 4, 2))
    y = np.array(y)
    assert np.max(np.abs(to_logits(to_simplex(y, shape), shape) - y)) < 1e-10


def test_clip_simplex():
    x = clip_simplex(np.array([1.0, 0.0]), S2)
    assert np.all(x > 0) and x.sum() == pytest.approx(1.0)


def test_logpdf_hand_value():
    p = MlndParams(S2, [0.0], [[1.0]])
    assert logpdf([0.5, 0.5], p) == pytest.approx(-0.5 * np.log(2 * np.pi) + np.log(4), abs=1e-12)
    assert logpdf([0.5, 0.5], p) == pytest.approx(0.4674, abs=1e-4)


@pytest.mark.parametrize("mu,s2", [(0.0, 1.0), (1.5, 0.3), (-2.0, 4.0)])
def test_logpdf_normalised_shape2(mu, s2):
    p = MlndParams(S2, [mu], [[s2]])
    val, _ = integrate.quad(lambda u: np.exp(logpdf([u, 1 - u], p)), 0, 1, limit=200, points=[0.5])
    assert val == pytest.approx(1.0, abs=1e-3)


def test_logpdf_normalised_shape3():
    p = MlndParams(GroupShape((3,)), [0.3, -0.2], [[1.0, 0.3], [0.3, 0.8]])
    val, _ = integrate.dblquad(
        lambda b, a: np.exp(logpdf([a, b, 1 - a - b], p)) if a + b < 1 else 0.0, 0, 1, 0, lambda a: 1 - a,
        epsabs=1e-6,
    )
    assert val == pytest.approx(1.0, abs=1e-3)


def test_entropy_monte_carlo_matches_quadrature(rng):
    p = MlndParams(S2, [0.4], [[0.7]])
    x = sample(p, rng, 200_000)
    mc = -logpdf(x, p).mean()
    quad, _ = integrate.quad(lambda u: -np.exp(logpdf([u, 1 - u], p)) * logpdf([u, 1 - u], p), 0, 1, limit=200)
    assert mc == pytest.approx(quad, abs=0.01)


def test_sampling_moments(rng):
    shape = GroupShape((2, 2))
    x = sample(MlndParams(shape, [0, 0], np.eye(2)), rng, 100_000)
    assert np.all(np.abs(to_logits(x, shape).mean(0)) < 0.02)
    sig = np.array([[3.0, -2.4], [-2.4, 3.5]])
    x = sample(MlndParams(shape, [-1.2, 1.0], sig), rng, 100_000)
    assert np.all(np.abs(np.cov(to_logits(x, shape).T) - sig) < 0.1)
    blocks = x.reshape(-1, 2, 2).sum(-1)
    assert np.allclose(blocks, 1.0, atol=1e-12) and np.all((x > 0) & (x < 1))


def test_params_validation():
    with pytest.raises(ValueError):
        MlndParams(S2, [0.0], [[-1.0]])
    with pytest.raises(ValueError):
        MlndParams(GroupShape((2, 2)), [0, 0], [[1, 0.5], [0.4, 1]])
    with pytest.raises(ValueError):
        GroupShape((1,))


def test_compound_examples():
    p = compound_params([0, 0], np.eye(2), [[[1.0]], [[1.0]]])
    assert np.array_equal(p.sigma, np.diag([2.0, 2.0]))
    p0 = compound_params([0, 0], np.eye(2), [[[0.0]], [[0.0]]])
    assert np.array_equal(p0.sigma, np.eye(2))
    with pytest.raises(ValueError):
        compound_params([0, 0], np.eye(2), [[[1.0]]])


def test_compound_two_stage_draws(rng):
    n = 100_000
    mu0, S0 = np.array([0.5, -0.3]), np.array([[1.0, 0.4], [0.4, 0.7]])
    gs = [np.array([[0.5]]), np.array([[1.2]])]
    mu = mu0 + rng.standard_normal((n, 2)) @ np.linalg.cholesky(S0).T
    y = mu + rng.standard_normal((n, 2)) * np.sqrt([0.5, 1.2])
    direct = to_logits(sample(compound_params(mu0, S0, gs), rng, n), GroupShape((2, 2)))
    for a in (y, direct):
        assert np.all(np.abs(a.mean(0) - mu0) < 3 * np.sqrt(np.diag(S0) + [0.5, 1.2]) / np.sqrt(n) + 1e-3)
    assert np.allclose(np.cov(y.T), np.cov(direct.T), atol=0.05)


def test_linear_transform_identity_and_swap(rng):
    shape = GroupShape((2, 2))
    p = MlndParams(shape, [0.5, -1.0], [[1.0, 0.3], [0.3, 2.0]])
    same = linear_transform(p, [np.eye(1), np.eye(1)])
    assert np.allclose(same.mu, p.mu) and np.allclose(same.sigma, p.sigma)
    swapped = linear_transform(p, [-np.eye(1), np.eye(1)])
    x = sample(p, rng, 100_000)
    x_sw = x[:, [1, 0, 2, 3]]
    y = sample(swapped, rng, 100_000)
    se = x_sw.std(0) / np.sqrt(len(x))
    assert np.all(np.abs(x_sw.mean(0) - y.mean(0)) < 3 * np.sqrt(2) * se + 1e-12)


def test_linear_transform_merge(rng):
    shape = GroupShape((3,))
    p = MlndParams(shape, [0.2, -0.4], [[1.0, 0.2], [0.2, 0.5]])
    B = [np.array([[1.0, 1.0]])]
    q = linear_transform(p, B)
    assert q.shape.sizes == (2,)
    x = sample(p, rng, 100_000)
    tx = transform_points(x, shape, B)
    y = sample(q, rng, 100_000)
    se = np.sqrt(tx.var(0) / len(tx) + y.var(0) / len(y))
    assert np.all(np.abs(tx.mean(0) - y.mean(0)) < 3 * se)
    with pytest.raises(ValueError):
        linear_transform(p, [np.eye(1)])


def test_odds_moments():
    p = MlndParams(GroupShape((2, 2)), [1.0, 0.5], np.eye(2))
    assert log_odds_mean(p, 0, 0, 0, 1) == pytest.approx(0.5)
    assert odds_ratio_mean(p, 0, 0, 0, 1) == pytest.approx(np.exp(1.5))
    eq = MlndParams(GroupShape((2, 2)), [0.7, 0.7], [[2, 1], [1, 3]])
    assert log_odds_mean(eq, 0, 0, 0, 1) == 0.0
    with pytest.raises(IndexError):
        odds_ratio_mean(p, 1, 0, 0, 1)


def test_block_diagonal_marginal(rng):
    shape = GroupShape((2, 3))
    sig = np.zeros((3, 3))
    sig[0, 0] = 0.8
    sig[1:, 1:] = [[1.0, 0.3], [0.3, 0.6]]
    y = to_logits(sample(MlndParams(shape, [0.1, 0.2, -0.3], sig), rng, 100_000), shape)
    assert np.var(y[:, 0]) == pytest.approx(0.8, rel=0.03)
    assert abs(np.corrcoef(y[:, 0], y[:, 1])[0, 1]) < 0.02
