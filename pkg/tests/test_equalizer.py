import numpy as np
import pytest

from otfs_fss.channel import draw_channel
from otfs_fss.core import ConfigError, DDGridConfig, RngSpec, crandn, make_qam, make_qpsk_gray
from otfs_fss.ddmatrix import SparseDDMatrix, TruncationSpec, build_branch_matrix, stack_branches
from otfs_fss.equalizer import (LLRBlock, MPParams, _Graph, cm_per_iteration, icmp_run, mp_equalize_with_priors,
                                observation_messages, simplified_run, symbol_llrs_to_bit_llrs, tmp_run,
                                trim_graph)

QPSK = make_qpsk_gray()


def _uniform(n, Q=4):
    return np.full((n, Q), 1.0 / Q)


def _link(seed=0, snr_noise=0.05, grid=DDGridConfig(N=8, M=16, G=2), E=2):
    ch = draw_channel(grid, RngSpec(seed), L=4)
    Hs = [build_branch_matrix(ch, g, TruncationSpec(E), grid) for g in range(grid.G)]
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, 4, grid.size)
    x = QPSK.symbols[idx]
    ys = [H @ x + np.sqrt(snr_noise) * crandn(rng, grid.size) for H in Hs]
    return Hs, ys, idx


def _sparse(D):
    r, c = np.nonzero(D)
    return SparseDDMatrix.from_triplets(D.shape[0], D.shape[1], r, c, D[r, c])


def test_identity_stack_converges_in_one_iteration():
    n = 16
    H = stack_branches([_sparse(np.eye(n, dtype=complex))] * 2)
    idx = np.random.default_rng(0).integers(0, 4, n)
    y = np.tile(QPSK.symbols[idx], 2)
    dec, p_bar, rep = icmp_run(y, H, _uniform(n), 1e-3, MPParams(), QPSK)
    assert np.array_equal(dec, idx)
    assert rep.iterations == 1 and rep.early_exit
    assert np.all(p_bar.max(axis=1) > 0.9)


def test_damping_recursion_and_full_step():
    Hs, ys, _ = _link(1)
    H, y = Hs[0], ys[0]
    for damping in (0.7, 1.0):
        prev = [_uniform(H.n_cols)[H.cols]]

        def monitor(state, p_tilde):
            expected = damping * p_tilde + (1 - damping) * prev[0]
            assert np.allclose(state.p_cd, expected, atol=1e-13)
            if damping == 1.0:
                assert np.array_equal(state.p_cd, p_tilde)
            prev[0] = state.p_cd.copy()

        icmp_run(y, H, _uniform(H.n_cols), 0.05, MPParams(damping=damping, early_stop=False, max_iters=5),
                 QPSK, monitor=monitor)


def test_probabilities_stay_normalized():
    Hs, ys, _ = _link(2)
    H, y = stack_branches(Hs), np.concatenate(ys)

    def monitor(state, p_tilde):
        for p in (state.p_cd, state.p_c, state.p_bar, p_tilde):
            assert np.all(p >= 0) and np.allclose(p.sum(axis=1), 1.0, atol=1e-12)

    icmp_run(y, H, _uniform(H.n_cols), 0.05, MPParams(early_stop=False, max_iters=6), QPSK, monitor=monitor)


def test_observation_messages_exclude_own_variable():
    rng = np.random.default_rng(5)
    D = crandn(rng, (6, 5)) * (rng.random((6, 5)) < 0.6)
    D[:, 0] += 1.0
    H = _sparse(D)
    g = _Graph(H)
    p_cd = rng.dirichlet(np.ones(4), H.nnz)
    y = crandn(rng, 6)
    res_mu, res_var = crandn(rng, 6), rng.random(6)
    mu, var = observation_messages(y, g, p_cd, 0.3, QPSK, res_mu, res_var)
    a = QPSK.symbols
    for e, (d, c) in enumerate(zip(H.rows, H.cols)):
        m, v = res_mu[d], 0.3 + res_var[d]
        for f in np.flatnonzero(H.rows == d):
            if H.cols[f] == c:
                continue
            ex = p_cd[f] @ a
            m += H.vals[f] * ex
            v += abs(H.vals[f]) ** 2 * (p_cd[f] @ np.abs(a) ** 2) - abs(H.vals[f] * ex) ** 2
        assert mu[e] == pytest.approx(m, abs=1e-12)
        assert var[e] == pytest.approx(v, abs=1e-12)


def test_snapshot_tracks_best_convergence():
    Hs, ys, _ = _link(3, snr_noise=0.2)
    H, y = stack_branches(Hs), np.concatenate(ys)
    seen = []

    def monitor(state, p_tilde):
        seen.append((state.eta, state.best_eta, state.p_c.copy(), state.p_bar.copy()))

    _, p_bar, _ = icmp_run(y, H, _uniform(H.n_cols), 0.2, MPParams(early_stop=False, max_iters=10), QPSK,
                           monitor=monitor)
    best = [s[1] for s in seen]
    assert best == sorted(best)
    assert best[-1] == max(s[0] for s in seen)
    first_best = next(i for i, s in enumerate(seen) if s[0] == best[-1])
    assert np.array_equal(p_bar, seen[first_best][2])


def test_complexity_count():
    Hs, ys, _ = _link(4)
    H, y = stack_branches(Hs), np.concatenate(ys)
    params = MPParams(early_stop=False, max_iters=7)
    _, _, rep = icmp_run(y, H, _uniform(H.n_cols), 0.05, params, QPSK)
    assert rep.cm_count == rep.predicted == H.nnz * (11 * 4 + 1) * 7
    assert cm_per_iteration(10, 16) == 10 * 177


def test_zero_llrs_are_uniform():
    assert np.allclose(LLRBlock.zeros(5, 4).to_probs(), 0.25)
    p = np.random.default_rng(0).dirichlet(np.ones(4), 10)
    assert np.allclose(LLRBlock.from_probs(p).to_probs(), p)


def test_extrinsic_is_posterior_minus_prior():
    Hs, ys, _ = _link(6)
    prior = LLRBlock(np.random.default_rng(1).normal(0, 2, (Hs[0].n_cols, 3)))
    post, ext = mp_equalize_with_priors(ys[0], Hs[0], prior, 0.05, MPParams(), QPSK)
    assert np.allclose(post.values - ext.values, prior.values, atol=1e-12)


def test_strong_prior_dominates_noise():
    Hs, ys, idx = _link(7, snr_noise=1.0)
    target = (idx + 1) % 4
    full = np.full((idx.size, 4), -40.0)
    full[np.arange(idx.size), target] = 0.0
    prior = LLRBlock(full[:, :3] - full[:, 3:])
    post, _ = mp_equalize_with_priors(ys[0], Hs[0], prior, 1e3, MPParams(), QPSK)
    assert np.array_equal(post.decisions(), target)


def test_prior_llrs_must_be_finite():
    Hs, ys, _ = _link(7)
    bad = LLRBlock(np.full((Hs[0].n_cols, 3), np.nan))
    with pytest.raises(ConfigError):
        mp_equalize_with_priors(ys[0], Hs[0], bad, 0.05)


def test_tmp_passes_only_extrinsic_information():
    Hs, ys, _ = _link(8)
    history = []
    tmp_run(ys[0], ys[1], Hs[0], Hs[1], 0.05, MPParams(turbo_iters=3), QPSK, history=history)
    assert [(h["turbo"], h["branch"]) for h in history] == [(t, b) for t in (1, 2, 3) for b in (0, 1)]
    assert np.all(history[0]["prior"].values == 0)
    for a, b in zip(history, history[1:]):
        assert np.array_equal(b["prior"].values, a["extrinsic"].values)


def test_tmp_single_round_unrolls():
    Hs, ys, _ = _link(9)
    params = MPParams(turbo_iters=1)
    dec, rep = tmp_run(ys[0], ys[1], Hs[0], Hs[1], 0.05, params, QPSK)
    _, ext0 = mp_equalize_with_priors(ys[0], Hs[0], LLRBlock.zeros(Hs[0].n_cols, 4), 0.05, params, QPSK)
    post1, _ = mp_equalize_with_priors(ys[1], Hs[1], ext0, 0.05, params, QPSK)
    assert np.array_equal(dec, post1.decisions())


def test_tmp_detects_at_high_snr():
    Hs, ys, idx = _link(10, snr_noise=1e-3)
    dec, _ = tmp_run(ys[0], ys[1], Hs[0], Hs[1], 1e-3, MPParams(), QPSK)
    assert np.mean(dec != idx) < 0.01
    dec, _, _ = icmp_run(np.concatenate(ys), stack_branches(Hs), _uniform(idx.size), 1e-3, MPParams(), QPSK)
    assert np.mean(dec != idx) < 0.01


def test_trim_keeps_strongest_with_low_column_ties():
    D = np.array([[1.0, 0.5, 0.5, 0.2], [0.3, 0.3, 0.3, 0.3]], dtype=complex)
    H = _sparse(D)
    kept, mu, var = trim_graph(H, 2, _uniform(4), QPSK)
    assert kept.entries() == {(0, 0): 1.0, (0, 1): 0.5, (1, 0): 0.3, (1, 1): 0.3}
    # uniform QPSK: zero mean and unit power per symbol
    assert np.allclose(mu, 0) and np.allclose(var, [0.25 + 0.04, 0.09 + 0.09])
    kept1, _, _ = trim_graph(H, 1, _uniform(4), QPSK)
    assert np.all(kept1.row_support == 1)


def test_trim_residual_variance_equals_dropped_energy():
    Hs, _, _ = _link(11)
    H = Hs[0]
    kept, mu, var = trim_graph(H, 5, _uniform(H.n_cols), QPSK)
    dropped = np.abs(H.to_dense()) ** 2 - np.abs(kept.to_dense()) ** 2
    assert np.allclose(var, dropped.sum(axis=1)) and np.allclose(mu, 0)


def test_trim_with_full_support_is_bit_exact():
    Hs, ys, _ = _link(12)
    D = max(H.row_support.max() for H in Hs)
    kept, _, _ = trim_graph(Hs[0], D, _uniform(Hs[0].n_cols), QPSK)
    assert kept is Hs[0]
    a, ra = tmp_run(ys[0], ys[1], Hs[0], Hs[1], 0.05, MPParams(), QPSK)
    b, rb = simplified_run("S-TMP", ys, Hs, 0.05, MPParams(), R=D, alphabet=QPSK)
    assert np.array_equal(a, b) and ra.cm_count == rb.cm_count


def test_trimming_reduces_work():
    Hs, ys, _ = _link(13)
    params = MPParams(early_stop=False)
    _, full = tmp_run(ys[0], ys[1], Hs[0], Hs[1], 0.05, params, QPSK)
    _, trimmed = simplified_run("S-TMP", ys, Hs, 0.05, params, R=4, alphabet=QPSK)
    assert trimmed.cm_count == 2 * params.turbo_iters * params.max_iters * cm_per_iteration(
        4 * Hs[0].n_rows, 4)
    assert trimmed.cm_count < full.cm_count


def test_errors():
    Hs, ys, _ = _link(14)
    with pytest.raises(ConfigError):
        trim_graph(Hs[0], 0, _uniform(Hs[0].n_cols))
    with pytest.raises(ConfigError):
        icmp_run(ys[0], Hs[0], _uniform(3), 0.1)
    with pytest.raises(ConfigError):
        icmp_run(ys[0][:-1], Hs[0], _uniform(Hs[0].n_cols), 0.1)
    with pytest.raises(ConfigError):
        simplified_run("S-XYZ", ys, Hs, 0.1)
    with pytest.raises(ConfigError):
        MPParams(damping=0.0)
    with pytest.raises(ConfigError):
        MPParams(max_iters=0)
    empty_row = SparseDDMatrix.from_triplets(2, 2, [0], [0], [1.0])
    with pytest.raises(ConfigError):
        icmp_run(np.zeros(2), empty_row, _uniform(2), 0.1)


def test_bit_llrs_match_explicit_marginals():
    for alphabet in (QPSK, make_qam(16)):
        llrs = LLRBlock(np.random.default_rng(0).normal(0, 5, (50, alphabet.Q - 1)))
        p = llrs.to_probs()
        out = symbol_llrs_to_bit_llrs(llrs, alphabet)
        for b in range(alphabet.bits_per_symbol):
            zero = alphabet.bits[:, b] == 0
            expected = np.log(p[:, zero].sum(axis=1) / p[:, ~zero].sum(axis=1))
            assert np.allclose(out[:, b], expected, atol=1e-9)
