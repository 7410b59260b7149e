import json

import numpy as np
import pytest

from multimem.linalg import NumericalError, cholesky, sample_inv_wishart, sample_mvn_precision, spd_inverse
from multimem.samples import ArchiveError, ChainSamples, load_archive, read_array, save_archive, write_array


def test_inverse_wishart_mean(rng):
    scale = np.array([[2.0, 0.5], [0.5, 1.0]])
    df = 7.0
    draws = np.array([sample_inv_wishart(df, scale, rng) for _ in range(100_000)])
    mean = scale / (df - 2 - 1)
    se = draws.std(0) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(0) - mean) < 4 * se)


def test_inverse_wishart_spd_and_df_guard(rng):
    for _ in range(100):
        s = sample_inv_wishart(2.5, np.eye(2), rng)
        assert np.allclose(s, s.T)
        np.linalg.cholesky(s)
    with pytest.raises(ValueError):
        sample_inv_wishart(0.5, np.eye(2), rng)


def test_precision_sampler_moments(rng):
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    b = np.array([1.0, -1.0])
    x = np.array([sample_mvn_precision(P, b, rng) for _ in range(50_000)])
    assert np.allclose(x.mean(0), np.linalg.solve(P, b), atol=0.03)
    assert np.allclose(np.cov(x.T), np.linalg.inv(P), atol=0.03)


def test_cholesky_guard():
    with pytest.raises(NumericalError, match="thing"):
        cholesky(-np.eye(2), "thing")
    assert np.allclose(spd_inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))


def test_array_format(tmp_path):
    a = np.arange(24, dtype=float).reshape(2, 3, 4)
    digest = write_array(tmp_path / "a.bin", a)
    raw = (tmp_path / "a.bin").read_bytes()
    assert np.frombuffer(raw[:8], "<u8")[0] == 3
    assert np.frombuffer(raw[8:32], "<u8").tolist() == [2, 3, 4]
    assert np.array_equal(read_array(tmp_path / "a.bin", digest), a)
    (tmp_path / "a.bin").write_bytes(raw[:-8] + b"\0" * 8)
    with pytest.raises(ArchiveError, match="checksum"):
        read_array(tmp_path / "a.bin", digest)


def test_archive_append_and_verify(tmp_path):
    s = ChainSamples({"mu": np.ones((3, 2))}, {"seed": 1}, {"mu": np.zeros(2)}, {"x": 1})
    save_archive(s, tmp_path)
    s2 = ChainSamples({"mu": np.vstack([np.ones((3, 2)), 2 * np.ones((2, 2))])}, {"seed": 1}, {"mu": np.ones(2)}, None)
    save_archive(s2, tmp_path, append_from=3)
    back = load_archive(tmp_path)
    assert back.n_draws == 5 and len(back.blocks) == 2
    assert np.array_equal(back["mu"], s2["mu"])
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["format"] == "multimem-chain"
    with pytest.raises(KeyError, match="not retained"):
        back["theta"]
    (tmp_path / "mu.001.bin").write_bytes(b"junk")
    with pytest.raises(ArchiveError):
        load_archive(tmp_path)
    with pytest.raises(ArchiveError):
        load_archive(tmp_path / "nope")
