import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otfs_fss.core import ConfigError, DDGridConfig, crandn
from otfs_fss.modem import (BasebandSignal, add_cp, demodulate, heisenberg_rect, isfft, modulate, remove_cp,
                            sfft, wigner_rect)


def direct_heisenberg(X, grid):
    # sample-by-sample evaluation of the rectangular-pulse synthesis sum
    N, M, G = grid.N, grid.M, grid.G
    out = np.zeros(N * M * G, dtype=complex)
    for u in range(N * M * G):
        n, c = divmod(u, M * G)
        t_rel = c * grid.Ts / G
        for m in range(M):
            out[u] += X[n, m] * np.exp(2j * np.pi * (m - (M - 1) / 2) * grid.delta_f * t_rel)
    return out / np.sqrt(grid.T)


def direct_isfft(x):
    N, M = x.shape
    n = np.arange(N)[:, None, None, None]
    m = np.arange(M)[None, :, None, None]
    k = np.arange(N)[None, None, :, None]
    l = np.arange(M)[None, None, None, :]
    kern = np.exp(2j * np.pi * (n * k / N - m * l / M))
    return np.einsum("nmkl,kl->nm", kern, x) / np.sqrt(N * M)


def test_isfft_zero_and_dc(rng):
    N, M = 4, 8
    assert np.all(isfft(np.zeros((N, M))) == 0)
    x = np.zeros((N, M), dtype=complex)
    x[0, 0] = np.sqrt(N * M)
    assert np.allclose(isfft(x), 1.0, atol=1e-12)


def test_isfft_matches_definition(rng):
    x = crandn(rng, (4, 6))
    assert np.allclose(isfft(x), direct_isfft(x), atol=1e-12)


def test_sfft_inverse_and_unitary(rng):
    x = crandn(rng, (8, 16))
    Y = crandn(rng, (8, 16))
    assert np.allclose(sfft(isfft(x)), x, atol=1e-10)
    assert np.allclose(isfft(sfft(Y)), Y, atol=1e-10)
    assert np.linalg.norm(sfft(Y)) ** 2 == pytest.approx(np.linalg.norm(Y) ** 2, rel=1e-10)
    assert np.all(sfft(np.zeros((3, 5))) == 0)


def test_heisenberg_zero_and_centered_tone():
    grid = DDGridConfig(N=4, M=9, G=2)
    assert np.all(heisenberg_rect(np.zeros((4, 9)), grid).samples == 0)
    X = np.zeros((4, 9), dtype=complex)
    X[0, 4] = 1.0
    s = heisenberg_rect(X, grid).samples
    slot = grid.M * grid.G
    assert np.allclose(np.abs(s[:slot]), 1 / np.sqrt(grid.T), rtol=1e-12)
    assert np.all(np.abs(s[slot:]) < 1e-12 / np.sqrt(grid.T))


@pytest.mark.parametrize("G", [1, 2])
def test_heisenberg_matches_direct_sum(rng, G):
    grid = DDGridConfig(N=3, M=8, G=G)
    X = crandn(rng, (3, 8))
    s = heisenberg_rect(X, grid)
    assert s.sample_rate == pytest.approx(G / grid.Ts)
    assert s.cp_len == 0 and s.samples.size == 3 * 8 * G
    ref = direct_heisenberg(X, grid)
    assert np.allclose(s.samples, ref, rtol=0, atol=1e-9 * np.abs(ref).max())


def test_cp_handling(rng):
    grid = DDGridConfig(N=4, M=8, G=2)
    s = heisenberg_rect(crandn(rng, (4, 8)), grid)
    assert np.array_equal(add_cp(s, 0).samples, s.samples)
    c = add_cp(s, 4)
    assert np.array_equal(c.samples[:4], s.samples[-4:])
    assert np.array_equal(remove_cp(c).samples, s.samples)
    with pytest.raises(ConfigError):
        add_cp(s, s.samples.size + 1)
    with pytest.raises(ConfigError):
        add_cp(s, -1)


def test_wigner_inverts_heisenberg(rng):
    grid = DDGridConfig(N=4, M=8, G=2)
    X = crandn(rng, (4, 8))
    r = heisenberg_rect(X, grid)
    assert np.allclose(wigner_rect(r, grid), X, atol=1e-9)
    assert np.allclose(wigner_rect(r, grid, branch=0), X, atol=1e-9)
    # the odd branch samples half a symbol late, which rotates each subcarrier
    m = np.arange(8)
    rot = np.exp(2j * np.pi * (m - 3.5) / (8 * 2))
    assert np.allclose(wigner_rect(r, grid, branch=1), X * rot[None, :], atol=1e-9)
    assert np.all(wigner_rect(BasebandSignal(np.zeros(64, complex), 1.0, 0, 2), grid) == 0)


def test_wigner_g1_equals_g2(rng):
    X = crandn(rng, (4, 8))
    g1, g2 = DDGridConfig(N=4, M=8, G=1), DDGridConfig(N=4, M=8, G=2)
    y1 = wigner_rect(heisenberg_rect(X, g1), g1)
    y2 = wigner_rect(heisenberg_rect(X, g2), g2)
    assert np.allclose(y1, y2, atol=1e-9)


def test_wigner_errors(rng):
    grid = DDGridConfig(N=4, M=8, G=2)
    s = heisenberg_rect(crandn(rng, (4, 8)), grid)
    with pytest.raises(ConfigError):
        wigner_rect(add_cp(s, 2), grid)
    with pytest.raises(ConfigError):
        wigner_rect(BasebandSignal(np.zeros(10, complex), 1.0), grid)
    with pytest.raises(ConfigError):
        wigner_rect(s, grid, branch=2)
    with pytest.raises(ConfigError):
        heisenberg_rect(np.zeros((3, 8)), grid)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 40), st.integers(0, 2**32 - 1))
def test_end_to_end_identity(cp, seed):
    grid = DDGridConfig(N=4, M=8, G=2)
    x = crandn(np.random.default_rng(seed), (4, 8))
    assert np.allclose(demodulate(modulate(x, grid, cp), grid), x, atol=1e-9)


def test_linearity(rng):
    grid = DDGridConfig(N=4, M=8, G=2)
    x, z = crandn(rng, (2, 4, 8))
    a, b = 0.3 - 1.2j, 2.0 + 0.5j
    lhs = modulate(a * x + b * z, grid, 6).samples
    rhs = a * modulate(x, grid, 6).samples + b * modulate(z, grid, 6).samples
    assert np.allclose(lhs, rhs, atol=1e-10 * np.abs(lhs).max())
    assert np.allclose(isfft(a * x + b * z), a * isfft(x) + b * isfft(z), atol=1e-10)
