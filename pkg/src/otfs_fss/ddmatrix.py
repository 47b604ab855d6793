"""Closed-form sparse delay-Doppler channel matrices for rectangular pulses.

Branch g of the fractionally spaced receiver sees y_g = H_g x + z_g with the
delay-Doppler frame vectorised Doppler-major (index = k*M + l). Row (k, l) of
H_g collects, for every path i, tap p and Doppler spread offset q,

    h_i * Prc_g[i, p] * gamma(k, l, p, q, k_nu_i, beta_i)

in column ([k - k_nu_i + q]_N, [l - p]_M).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .channel import TAP_THRESHOLD, ChannelRealization, path_taps
from .core import ConfigError, DDGridConfig
from .pulses import RolloffFilter


def theta(q, beta, N: int):
    """Doppler-spread kernel, the geometric sum of exp(j 2 pi n (q + beta) / N) over n < N.

    Returns exactly N where q + beta is a multiple of N and exactly 0 for the
    other integer points (beta = 0, q not a multiple of N).
    """
    q = np.asarray(q, dtype=float)
    beta = np.asarray(beta, dtype=float)
    # theta is N-periodic in q + beta; reduce to (-N/2, N/2] so sinc(x/N) stays away from zero
    x = q + beta
    x = x - N * np.round(x / N)
    on_grid = beta == 0.0
    at_peak = on_grid & (np.mod(q, N) == 0)
    val = np.exp(1j * np.pi * (N - 1) * x / N) * (N * np.sinc(x) / np.sinc(x / N))
    val = np.where(on_grid, 0.0 + 0.0j, val)
    out = np.where(at_peak, complex(N), val)
    return out[()] if out.ndim == 0 else out


def xi(l, p, k_nu, beta, grid: DDGridConfig):
    """Unit-modulus delay/Doppler phase coupling of tap p into delay bin l."""
    M, N = grid.M, grid.N
    l = np.asarray(l, dtype=float)
    p = np.asarray(p, dtype=float)
    out = np.exp(1j * np.pi * (M - 1) * p / M) * np.exp(
        2j * np.pi * ((l - p) / M) * ((np.asarray(k_nu, dtype=float) + beta) / N))
    return out[()] if np.ndim(out) == 0 else out


def phi(k, q, k_nu, grid: DDGridConfig):
    """Extra phase picked up by rows l < p, whose samples wrap through the CP."""
    N, M = grid.N, grid.M
    r = np.mod(np.asarray(k) - np.asarray(k_nu) + np.asarray(q), N)
    out = (-1.0) ** (M - 1) * np.exp(-2j * np.pi * r / N)
    return out[()] if np.ndim(out) == 0 else out


def gamma(k, l, p, q, k_nu, beta, grid: DDGridConfig):
    """Full coefficient of one (p, q) term: theta*xi/N, times phi when l < p."""
    base = theta(q, beta, grid.N) / grid.N * xi(l, p, k_nu, beta, grid)
    return np.where(np.asarray(l) < np.asarray(p), base * phi(k, q, k_nu, grid), base)[()]


@dataclass(frozen=True)
class TruncationSpec:
    """Doppler-spread window q in [-E, E], shared by all paths."""

    E: int

    def __post_init__(self):
        if int(self.E) != self.E or self.E < 0:
            raise ConfigError(f"E must be a non-negative integer, got {self.E!r}")

    def validate(self, N: int) -> None:
        if 2 * self.E > N:
            raise ConfigError(f"E={self.E} exceeds N/2={N / 2}")

    def offsets(self, N: int) -> np.ndarray:
        """Offsets in the window, one per residue mod N (the ends coincide when 2E = N)."""
        self.validate(N)
        q = np.arange(-self.E, self.E + 1)
        _, first = np.unique(np.mod(q, N), return_index=True)
        return q[np.sort(first)]


@dataclass(frozen=True)
class SparseDDMatrix:
    """Coordinate-list complex matrix, entries sorted by (row, col) and unique."""

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        for a in (self.rows, self.cols, self.vals):
            a.setflags(write=False)

    @classmethod
    def from_triplets(cls, n_rows: int, n_cols: int, rows, cols, vals) -> "SparseDDMatrix":
        """Merge duplicate coordinates by summation and drop exact zeros.

        Duplicates are summed in their input order so construction is
        deterministic down to the last bit.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=complex)
        if rows.size == 0:
            e = np.zeros(0, dtype=np.int64)
            return cls(n_rows, n_cols, e, e.copy(), np.zeros(0, dtype=complex))
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        key = rows * n_cols + cols
        start = np.flatnonzero(np.concatenate([[True], key[1:] != key[:-1]]))
        summed = np.add.reduceat(vals, start)
        keep = summed != 0
        return cls(n_rows, n_cols, rows[start][keep], cols[start][keep], summed[keep])

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    @cached_property
    def row_ptr(self) -> np.ndarray:
        return np.searchsorted(self.rows, np.arange(self.n_rows + 1))

    @cached_property
    def row_adjacency(self) -> list:
        """Column indices of each row, ascending."""
        return np.split(self.cols, self.row_ptr[1:-1])

    @cached_property
    def col_adjacency(self) -> list:
        """Row indices of each column, ascending."""
        order = np.lexsort((self.rows, self.cols))
        ptr = np.searchsorted(self.cols[order], np.arange(self.n_cols + 1))
        return np.split(self.rows[order], ptr[1:-1])

    @property
    def row_support(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    @property
    def col_support(self) -> np.ndarray:
        return np.bincount(self.cols, minlength=self.n_cols)

    def entries(self) -> dict:
        return {(int(r), int(c)): complex(v) for r, c, v in zip(self.rows, self.cols, self.vals)}

    def to_scipy(self) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols), dtype=complex)
        out[self.rows, self.cols] = self.vals
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x).reshape(-1)
        if x.size != self.n_cols:
            raise ConfigError(f"vector length {x.size} does not match {self.n_cols} columns")
        return np.bincount(self.rows, weights=(self.vals * x[self.cols]).real, minlength=self.n_rows) \
            + 1j * np.bincount(self.rows, weights=(self.vals * x[self.cols]).imag, minlength=self.n_rows)

    def __matmul__(self, x):
        return self.matvec(x)

    def to_coo_text(self) -> str:
        """One ``row col re im`` line per entry."""
        lines = [f"{r} {c} {v.real:.17g} {v.imag:.17g}" for r, c, v in zip(self.rows, self.cols, self.vals)]
        return "\n".join(lines) + ("\n" if lines else "")

    def write_coo(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# {self.n_rows} {self.n_cols}\n")
            fh.write(self.to_coo_text())


def _assemble(ch: ChannelRealization, g: int, grid: DDGridConfig, filt: RolloffFilter,
              offsets: np.ndarray, spread, threshold: float) -> SparseDDMatrix:
    # spread(q, beta) -> theta/N for each offset; kept as a callback so the on-grid
    # builder produces the same floating-point operations as the general one
    if not 0 <= g < grid.G:
        raise ConfigError(f"branch must lie in [0, {grid.G}), got {g}")
    N, M = grid.N, grid.M
    taps = path_taps(ch, g, grid, filt, threshold)
    k = np.repeat(np.arange(N), M)
    l = np.tile(np.arange(M), N)
    rows = k * M + l
    out_r, out_c, out_v = [], [], []
    for i, path in enumerate(ch.paths):
        kn, beta = path.doppler_int, path.doppler_frac
        for p in np.flatnonzero(taps[i]):
            w = path.gain * taps[i, p]
            x = xi(l, p, kn, beta, grid)
            wrap = l < p
            cl = np.mod(l - p, M)
            sp = spread(offsets, beta)
            nz = sp != 0
            if not np.any(nz):
                continue
            q, sp = offsets[nz][:, None], sp[nz][:, None]
            v = (w * sp) * x[None, :]
            v = np.where(wrap[None, :], v * phi(k[None, :], q, kn, grid), v)
            out_r.append(np.broadcast_to(rows, v.shape).reshape(-1))
            out_c.append((np.mod(k[None, :] - kn + q, N) * M + cl[None, :]).reshape(-1))
            out_v.append(v.reshape(-1))
    if not out_r:
        return SparseDDMatrix.from_triplets(grid.size, grid.size, [], [], [])
    return SparseDDMatrix.from_triplets(grid.size, grid.size, np.concatenate(out_r),
                                        np.concatenate(out_c), np.concatenate(out_v))


def build_branch_matrix(ch: ChannelRealization, g: int, trunc: TruncationSpec, grid: DDGridConfig,
                        filt: RolloffFilter | None = None,
                        threshold: float = TAP_THRESHOLD) -> SparseDDMatrix:
    """H_g with the Doppler spread of every path truncated to |q| <= E."""
    filt = filt or RolloffFilter()
    offsets = trunc.offsets(grid.N)
    return _assemble(ch, g, grid, filt, offsets,
                     lambda q, beta: theta(q, beta, grid.N) / grid.N, threshold)


def build_on_grid_matrix(ch: ChannelRealization, g: int, grid: DDGridConfig,
                         filt: RolloffFilter | None = None,
                         threshold: float = TAP_THRESHOLD) -> SparseDDMatrix:
    """H_g for channels whose Doppler shifts are integer bins: only q = 0 survives."""
    if np.any(ch.doppler_fracs != 0.0):
        raise ConfigError("on-grid construction requires zero fractional Doppler on every path")
    filt = filt or RolloffFilter()
    return _assemble(ch, g, grid, filt, np.array([0]),
                     lambda q, beta: np.ones(np.shape(q)), threshold)


def stack_branches(mats) -> SparseDDMatrix:
    """Vertical concatenation [H_0; H_1; ...]."""
    mats = list(mats)
    if not mats:
        raise ConfigError("need at least one matrix to stack")
    n_cols = mats[0].n_cols
    if any(m.n_cols != n_cols for m in mats):
        raise ConfigError("all stacked matrices must have the same number of columns")
    if len(mats) == 1:
        return mats[0]
    offs = np.cumsum([0] + [m.n_rows for m in mats])
    return SparseDDMatrix(int(offs[-1]), n_cols,
                          np.concatenate([m.rows + o for m, o in zip(mats, offs)]),
                          np.concatenate([m.cols for m in mats]),
                          np.concatenate([m.vals for m in mats]))
