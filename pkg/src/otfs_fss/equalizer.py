"""Message-passing detectors on the sparse delay-Doppler factor graph.

Observation nodes are the rows of a :class:`SparseDDMatrix` and variable nodes
its columns; every nonzero entry is one edge. Interference on an edge is
modelled as Gaussian with moments taken from the previous iteration's
variable-to-observation messages (flooding schedule). Symbol log-likelihood
ratios are always taken relative to the last alphabet symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import logsumexp

from .core import ConfigError, ModAlphabet, make_qpsk_gray
from .ddmatrix import SparseDDMatrix, stack_branches

LLR_CLAMP = 50.0
PROB_FLOOR = 1e-12
VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class MPParams:
    damping: float = 0.7
    conv_threshold: float = 0.1
    max_iters: int = 20
    turbo_iters: int = 3
    early_stop: bool = True

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError(f"damping must lie in (0, 1], got {self.damping}")
        if not 0.0 < self.conv_threshold < 1.0:
            raise ConfigError(f"conv_threshold must lie in (0, 1), got {self.conv_threshold}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError(f"max_iters must be a positive integer, got {self.max_iters}")
        if int(self.turbo_iters) != self.turbo_iters or self.turbo_iters < 1:
            raise ConfigError(f"turbo_iters must be a positive integer, got {self.turbo_iters}")


@dataclass
class MessageState:
    """Messages of one MP run. Edge arrays follow the matrix's (row, col) order."""

    p_cd: np.ndarray
    mu_dc: np.ndarray
    var_dc: np.ndarray
    p_c: np.ndarray
    p_bar: np.ndarray
    log_post: np.ndarray | None = None
    log_bar: np.ndarray | None = None
    eta: float = 0.0
    best_eta: float = 0.0
    iter: int = 0
    eta_history: list = field(default_factory=list)


@dataclass(frozen=True)
class LLRBlock:
    """Per-variable LLRs log(P(a_j) / P(a_Q)) for j < Q, shape (n, Q-1)."""

    values: np.ndarray

    @classmethod
    def zeros(cls, n: int, Q: int) -> "LLRBlock":
        return cls(np.zeros((n, Q - 1)))

    @classmethod
    def from_probs(cls, p: np.ndarray) -> "LLRBlock":
        lp = np.log(np.maximum(p, PROB_FLOOR))
        return cls(np.clip(lp[:, :-1] - lp[:, -1:], -LLR_CLAMP, LLR_CLAMP))

    def full(self) -> np.ndarray:
        """(n, Q) log-ratios including the zero of the reference symbol."""
        return np.concatenate([self.values, np.zeros((self.values.shape[0], 1))], axis=1)

    def to_probs(self) -> np.ndarray:
        return _softmax(self.full())

    def decisions(self) -> np.ndarray:
        return np.argmax(self.full(), axis=1)

    def __sub__(self, other: "LLRBlock") -> "LLRBlock":
        return LLRBlock(self.values - other.values)

    def __add__(self, other: "LLRBlock") -> "LLRBlock":
        return LLRBlock(self.values + other.values)


@dataclass
class ComplexityReport:
    """Complex multiplications executed versus the full-iteration closed form."""

    cm_count: int = 0
    predicted: int = 0
    iterations: int = 0
    early_exit: bool = False

    def merge(self, other: "ComplexityReport") -> None:
        self.cm_count += other.cm_count
        self.predicted += other.predicted
        self.iterations += other.iterations
        self.early_exit |= other.early_exit


def cm_per_iteration(n_edges: int, Q: int) -> int:
    """2Q (means) + 4Q+1 (variances and likelihoods) + 5Q (probability update) per edge."""
    return int(n_edges) * (11 * Q + 1)


def _softmax(a: np.ndarray) -> np.ndarray:
    e = np.exp(np.maximum(a - a.max(axis=-1, keepdims=True), -LLR_CLAMP))
    return e / e.sum(axis=-1, keepdims=True)


@njit(cache=True)
def _edge_moments(rows, h, p_cd, a, n_rows, noise_var, res_mu, res_var, mu_out, var_out):
    # row totals first, then subtract each edge's own contribution
    n, Q = p_cd.shape
    m_e = np.empty(n, dtype=np.complex128)
    v_e = np.empty(n)
    tot_m = np.zeros(n_rows, dtype=np.complex128)
    tot_v = np.zeros(n_rows)
    for e in range(n):
        s = 0j
        s2 = 0.0
        for j in range(Q):
            s += p_cd[e, j] * a[j]
            s2 += p_cd[e, j] * (a[j].real * a[j].real + a[j].imag * a[j].imag)
        m = h[e] * s
        hh = h[e].real * h[e].real + h[e].imag * h[e].imag
        v = hh * s2 - (m.real * m.real + m.imag * m.imag)
        m_e[e] = m
        v_e[e] = v
        tot_m[rows[e]] += m
        tot_v[rows[e]] += v
    for e in range(n):
        d = rows[e]
        mu_out[e] = tot_m[d] - m_e[e] + res_mu[d]
        var = tot_v[d] - v_e[e] + noise_var + res_var[d]
        var_out[e] = var if var > VAR_FLOOR else VAR_FLOOR


@njit(cache=True)
def _clip_shift(arg):
    # shift each row so its maximum is zero, then floor at -LLR_CLAMP; shifting
    # first keeps the ordering of large log-ratios intact
    n, Q = arg.shape
    for e in range(n):
        mx = -np.inf
        for j in range(Q):
            if arg[e, j] > mx:
                mx = arg[e, j]
        for j in range(Q):
            arg[e, j] = max(arg[e, j] - mx, -LLR_CLAMP)


@njit(cache=True)
def _extrinsic_args(y, rows, cols, h, a, mu, var, log_prior):
    # edge log-likelihood ratios, their column sums, and the softmax arguments
    n, Q = mu.shape[0], a.shape[0]
    lam = np.empty((n, Q))
    alpha = log_prior.copy()
    for e in range(n):
        r0 = y[rows[e]] - mu[e]
        inv_var = 1.0 / var[e]
        ref = r0 - h[e] * a[Q - 1]
        dref = ref.real * ref.real + ref.imag * ref.imag
        c = cols[e]
        for j in range(Q):
            r = r0 - h[e] * a[j]
            v = (dref - (r.real * r.real + r.imag * r.imag)) * inv_var
            lam[e, j] = v
            alpha[c, j] += v
    edge_arg = np.empty((n, Q))
    for e in range(n):
        c = cols[e]
        for j in range(Q):
            edge_arg[e, j] = alpha[c, j] - lam[e, j]
    post = alpha.copy()
    _clip_shift(edge_arg)
    _clip_shift(alpha)
    return edge_arg, alpha, post


@njit(cache=True)
def _normalize_damp(w, p_cd, damping):
    # w holds unnormalised exponentials; normalise in place and blend into p_cd
    n, Q = w.shape
    keep = 1.0 - damping
    for e in range(n):
        tot = 0.0
        for j in range(Q):
            tot += w[e, j]
        inv = 1.0 / tot
        for j in range(Q):
            w[e, j] *= inv
            p_cd[e, j] = damping * w[e, j] + keep * p_cd[e, j]


def _variable_update(y, graph, a, mu, var, log_prior, p_cd, damping):
    """Damped var->obs messages (updated in place); returns (p_tilde, p_c, log_post).

    ``log_post`` holds the unclipped posterior log-ratios against the last symbol.
    """
    edge_arg, col_arg, log_post = _extrinsic_args(y, graph.rows, graph.cols, graph.h, a, mu, var, log_prior)
    p_tilde = np.exp(edge_arg, out=edge_arg)
    _normalize_damp(p_tilde, p_cd, damping)
    p_c = np.exp(col_arg, out=col_arg)
    p_c /= p_c.sum(axis=1, keepdims=True)
    return p_tilde, p_c, log_post


class _Graph:
    """Edge arrays of one matrix in kernel-friendly layout."""

    def __init__(self, H: SparseDDMatrix):
        if H.nnz == 0 or np.any(H.row_support == 0):
            raise ConfigError("every observation row needs at least one edge")
        self.H = H
        self.rows = np.ascontiguousarray(H.rows, dtype=np.int64)
        self.cols = np.ascontiguousarray(H.cols, dtype=np.int64)
        self.h = np.ascontiguousarray(H.vals, dtype=np.complex128)


def observation_messages(y, graph: _Graph, p_cd, noise_var, alphabet: ModAlphabet,
                         res_mu=None, res_var=None):
    """Gaussian interference moments seen by each edge, excluding its own variable."""
    n_rows = graph.H.n_rows
    if res_mu is None:
        res_mu, res_var = np.zeros(n_rows, dtype=complex), np.zeros(n_rows)
    mu = np.empty(graph.h.size, dtype=complex)
    var = np.empty(graph.h.size)
    _edge_moments(graph.rows, graph.h, np.ascontiguousarray(p_cd, dtype=float),
                  np.ascontiguousarray(alphabet.symbols, dtype=complex), n_rows, float(noise_var),
                  np.ascontiguousarray(res_mu, dtype=complex), np.ascontiguousarray(res_var, dtype=float),
                  mu, var)
    return mu, var


def _check_priors(priors, n_cols, Q):
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (n_cols, Q):
        raise ConfigError(f"priors must have shape ({n_cols}, {Q}), got {priors.shape}")
    if np.any(priors < 0) or np.any(np.abs(priors.sum(axis=1) - 1.0) > 1e-9):
        raise ConfigError("prior tables must be non-negative and sum to 1")
    return priors


def _mp_loop(y, H: SparseDDMatrix, priors, noise_var, params: MPParams, alphabet: ModAlphabet,
             res_mu=None, res_var=None, monitor=None, log_prior=None):
    """Core iteration; returns the final MessageState and its ComplexityReport.

    ``log_prior`` optionally gives the exact prior log-ratios (n, Q) against the
    last symbol; otherwise they are taken from ``priors``.
    """
    y = np.asarray(y, dtype=complex).reshape(-1)
    if y.size != H.n_rows:
        raise ConfigError(f"observation length {y.size} does not match {H.n_rows} rows")
    if noise_var < 0:
        raise ConfigError("noise variance must be non-negative")
    Q = alphabet.Q
    priors = _check_priors(priors, H.n_cols, Q)
    graph = _Graph(H)
    a = np.ascontiguousarray(alphabet.symbols, dtype=complex)
    if log_prior is None:
        log_prior = np.log(np.maximum(priors, PROB_FLOOR))
    log_prior = np.ascontiguousarray(log_prior - log_prior[:, -1:], dtype=float)
    p_cd = priors[graph.cols].copy()
    state = MessageState(p_cd=p_cd, mu_dc=np.zeros(H.nnz, dtype=complex), var_dc=np.zeros(H.nnz),
                         p_c=priors.copy(), p_bar=priors.copy(), log_post=log_prior.copy(),
                         log_bar=log_prior.copy())
    per_iter = cm_per_iteration(H.nnz, Q)
    report = ComplexityReport(predicted=per_iter * params.max_iters)
    for it in range(1, params.max_iters + 1):
        mu, var = observation_messages(y, graph, state.p_cd, noise_var, alphabet, res_mu, res_var)
        p_tilde, state.p_c, state.log_post = _variable_update(y, graph, a, mu, var, log_prior, state.p_cd,
                                              float(params.damping))
        state.mu_dc, state.var_dc = mu, var
        state.eta = float(np.mean(state.p_c.max(axis=1) >= 1.0 - params.conv_threshold))
        state.eta_history.append(state.eta)
        if it == 1 or state.eta > state.best_eta:
            state.p_bar = state.p_c.copy()
            state.log_bar = state.log_post.copy()
            state.best_eta = state.eta
        state.iter = it
        report.cm_count += per_iter
        report.iterations = it
        if monitor is not None:
            monitor(state, p_tilde)
        if params.early_stop and state.eta == 1.0:
            report.early_exit = it < params.max_iters
            break
    return state, report


def _decide(p: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest symbol index on ties
    return np.argmax(p, axis=1)


def icmp_run(y, H: SparseDDMatrix, priors, noise_var: float, params: MPParams = MPParams(),
             alphabet: ModAlphabet | None = None, *, residual=None, monitor=None):
    """Joint MP over the stacked observations of all branches.

    Returns ``(decisions, p_bar, report)``; ``residual`` optionally supplies
    per-row Gaussian moments of interference removed from the graph.
    """
    alphabet = alphabet or make_qpsk_gray()
    res_mu, res_var = residual if residual is not None else (None, None)
    state, report = _mp_loop(y, H, priors, noise_var, params, alphabet, res_mu, res_var, monitor)
    return _decide(state.p_bar), state.p_bar, report


def mp_equalize_with_priors(y_g, H_g: SparseDDMatrix, prior_llrs: LLRBlock, noise_var: float,
                            params: MPParams = MPParams(), alphabet: ModAlphabet | None = None,
                            *, trim_R: int | None = None, stats: ComplexityReport | None = None):
    """Single-branch MP driven by a-priori LLRs; returns (posterior, extrinsic) LLRs.

    With ``trim_R`` the graph keeps the R strongest entries per row and the
    residual moments are computed from these priors.
    """
    alphabet = alphabet or make_qpsk_gray()
    vals = np.asarray(prior_llrs.values, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ConfigError("prior LLRs must be finite")
    priors = prior_llrs.to_probs()
    H, residual = H_g, None
    if trim_R is not None:
        H, mu_r, var_r = trim_graph(H_g, trim_R, priors, alphabet)
        if H is not H_g:
            residual = (mu_r, var_r)
    res_mu, res_var = residual if residual is not None else (None, None)
    # the prior enters the loop in the log domain so that large LLRs survive
    # unchanged and the extrinsic part is exactly the observation evidence
    state, report = _mp_loop(y_g, H, priors, noise_var, params, alphabet, res_mu, res_var,
                             log_prior=prior_llrs.full())
    if stats is not None:
        stats.merge(report)
    posterior = LLRBlock(state.log_bar[:, :-1].copy())
    return posterior, posterior - prior_llrs


def tmp_run(y0, y1, H0: SparseDDMatrix, H1: SparseDDMatrix, noise_var: float,
            params: MPParams = MPParams(), alphabet: ModAlphabet | None = None,
            *, trim_R: int | None = None, history: list | None = None,
            initial_llrs: LLRBlock | None = None):
    """Turbo MP: branch 0 and branch 1 exchange extrinsic LLRs for ``turbo_iters`` rounds.

    ``history`` (if given) receives one dict per half-iteration with the
    prior, posterior and extrinsic LLRs and the resulting decisions.
    """
    alphabet = alphabet or make_qpsk_gray()
    if H0.n_cols != H1.n_cols:
        raise ConfigError("branch matrices must have the same number of columns")
    report = ComplexityReport()
    prior = initial_llrs if initial_llrs is not None else LLRBlock.zeros(H0.n_cols, alphabet.Q)
    posterior = prior
    for t in range(params.turbo_iters):
        for b, (y, H) in enumerate(((y0, H0), (y1, H1))):
            posterior, extrinsic = mp_equalize_with_priors(y, H, prior, noise_var, params, alphabet,
                                                           trim_R=trim_R, stats=report)
            if history is not None:
                history.append({"turbo": t + 1, "branch": b, "prior": prior, "posterior": posterior,
                                "extrinsic": extrinsic, "decisions": posterior.decisions()})
            prior = extrinsic
    return posterior.decisions(), report


def trim_graph(H: SparseDDMatrix, R: int, priors, alphabet: ModAlphabet | None = None):
    """Keep the R largest-magnitude entries of every row.

    Returns ``(H_kept, residual_mean, residual_var)``; the removed entries are
    summarised per row by the Gaussian moments of sum_e H[d, e] x_e under the
    priors. When no row exceeds R the input matrix is returned unchanged with
    zero residuals.
    """
    alphabet = alphabet or make_qpsk_gray()
    if int(R) != R or R < 1:
        raise ConfigError(f"R must be a positive integer, got {R}")
    if R >= H.row_support.max(initial=0):
        return H, np.zeros(H.n_rows, dtype=complex), np.zeros(H.n_rows)
    priors = _check_priors(priors, H.n_cols, alphabet.Q)
    order = np.lexsort((H.cols, -np.abs(H.vals), H.rows))
    rank = np.empty(H.nnz, dtype=np.int64)
    rank[order] = np.arange(H.nnz) - H.row_ptr[H.rows[order]]
    keep = rank < R
    kept = SparseDDMatrix(H.n_rows, H.n_cols, H.rows[keep], H.cols[keep], H.vals[keep])
    drop = ~keep
    a = alphabet.symbols
    mean_x = priors @ a
    pow_x = priors @ (np.abs(a) ** 2)
    h, c, r = H.vals[drop], H.cols[drop], H.rows[drop]
    m = h * mean_x[c]
    v = np.abs(h) ** 2 * pow_x[c] - np.abs(m) ** 2
    res_mu = np.bincount(r, m.real, H.n_rows) + 1j * np.bincount(r, m.imag, H.n_rows)
    res_var = np.bincount(r, v, H.n_rows)
    return kept, res_mu, res_var


def simplified_run(kind: str, ys, Hs, noise_var: float, params: MPParams = MPParams(), R: int = 50,
                   alphabet: ModAlphabet | None = None):
    """S-ICMP or S-TMP on per-branch observations ``ys`` and matrices ``Hs``."""
    alphabet = alphabet or make_qpsk_gray()
    kind = kind.upper().replace("_", "-")
    if kind == "S-ICMP":
        H = stack_branches(Hs)
        y = np.concatenate([np.asarray(v).reshape(-1) for v in ys])
        priors = np.full((H.n_cols, alphabet.Q), 1.0 / alphabet.Q)
        Ht, mu_r, var_r = trim_graph(H, R, priors, alphabet)
        residual = None if Ht is H else (mu_r, var_r)
        dec, _, report = icmp_run(y, Ht, priors, noise_var, params, alphabet, residual=residual)
        return dec, report
    if kind == "S-TMP":
        if len(Hs) != 2 or len(ys) != 2:
            raise ConfigError("S-TMP needs exactly two branches")
        return tmp_run(ys[0], ys[1], Hs[0], Hs[1], noise_var, params, alphabet, trim_R=R)
    raise ConfigError(f"unknown simplified receiver {kind!r}; expected S-ICMP or S-TMP")


def symbol_llrs_to_bit_llrs(llrs: LLRBlock, alphabet: ModAlphabet) -> np.ndarray:
    """Max-free bit LLRs log(P(b=0)/P(b=1)) by log-sum-exp over the symbol table."""
    full = llrs.full()
    out = np.empty((full.shape[0], alphabet.bits_per_symbol))
    for b in range(alphabet.bits_per_symbol):
        zero = alphabet.bits[:, b] == 0
        out[:, b] = logsumexp(full[:, zero], axis=1) - logsumexp(full[:, ~zero], axis=1)
    return out
