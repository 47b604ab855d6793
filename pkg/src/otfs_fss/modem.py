"""OTFS transforms with rectangular pulses, sampled at G/Ts.

Delay-Doppler and time-frequency frames are plain ``(N, M)`` complex arrays
indexed ``[k, l]`` and ``[n, m]`` respectively. Time-domain signals are
:class:`BasebandSignal` records carrying their sample rate and CP length.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.fft import fft, ifft

from .core import ConfigError, DDGridConfig


@dataclass(frozen=True)
class BasebandSignal:
    """Samples at ``sample_rate`` (= G/Ts); the first ``cp_len`` samples are CP."""

    samples: np.ndarray
    sample_rate: float
    cp_len: int = 0
    G: int = 1

    @property
    def body(self) -> np.ndarray:
        return self.samples[self.cp_len:]


def _check_frame(a: np.ndarray, grid: DDGridConfig | None):
    a = np.asarray(a)
    if a.ndim != 2:
        raise ConfigError(f"expected an (N, M) frame, got shape {a.shape}")
    if grid is not None and a.shape != (grid.N, grid.M):
        raise ConfigError(f"frame shape {a.shape} does not match grid ({grid.N}, {grid.M})")
    return a


def isfft(x: np.ndarray) -> np.ndarray:
    """Delay-Doppler -> time-frequency.

    X[n, m] = 1/sqrt(NM) sum_{k,l} x[k, l] exp(j 2 pi (nk/N - ml/M)).
    """
    x = _check_frame(x, None)
    return ifft(fft(x, axis=1, norm="ortho"), axis=0, norm="ortho")


def sfft(Y: np.ndarray) -> np.ndarray:
    """Time-frequency -> delay-Doppler, the unitary inverse of :func:`isfft`."""
    Y = _check_frame(Y, None)
    return fft(ifft(Y, axis=1, norm="ortho"), axis=0, norm="ortho")


def _half_band(grid: DDGridConfig, per_slot: int) -> np.ndarray:
    # exp(-j pi (M-1) c / per_slot): the -(M-1)/2 subcarrier offset at sample c
    c = np.arange(per_slot)
    return np.exp(-1j * np.pi * (grid.M - 1) * c / per_slot)


def heisenberg_rect(X: np.ndarray, grid: DDGridConfig) -> BasebandSignal:
    """Rectangular-pulse Heisenberg transform sampled at t = u Ts/G.

    Within slot n the sample at offset c (in Ts/G steps) is
    (1/sqrt(T)) sum_m X[n, m] exp(j 2 pi (m - (M-1)/2) c / (MG)).
    """
    X = _check_frame(X, grid)
    MG = grid.M * grid.G
    padded = np.zeros((grid.N, MG), dtype=complex)
    padded[:, :grid.M] = X
    slots = ifft(padded, axis=1) * MG * _half_band(grid, MG)[None, :]
    samples = slots.reshape(-1) / np.sqrt(grid.T)
    return BasebandSignal(samples, grid.G / grid.Ts, 0, grid.G)


def wigner_rect(r: BasebandSignal, grid: DDGridConfig, branch: int | None = None) -> np.ndarray:
    """Rectangular-pulse Wigner transform, sampled on the (nT, (m-(M-1)/2) df) lattice.

    With ``branch=None`` the matched-filter integral over each slot is a
    Riemann sum over all MG samples. With ``branch=g`` only the g-th polyphase
    component r_g[u] = r(u Ts + g Ts/G) is used, placed on the symbol lattice.
    """
    if r.cp_len:
        raise ConfigError("remove the cyclic prefix before the Wigner transform")
    x = np.asarray(r.samples)
    if x.size != grid.size * grid.G:
        raise ConfigError(f"expected {grid.size * grid.G} samples, got {x.size}")
    if branch is None:
        per_slot, dt = grid.M * grid.G, grid.Ts / grid.G
    else:
        if not 0 <= branch < grid.G:
            raise ConfigError(f"branch must lie in [0, {grid.G}), got {branch}")
        x = x[branch::grid.G]
        per_slot, dt = grid.M, grid.Ts
    slots = x.reshape(grid.N, per_slot) * np.conj(_half_band(grid, per_slot))[None, :]
    return fft(slots, axis=1)[:, :grid.M] * (dt / np.sqrt(grid.T))


def add_cp(s: BasebandSignal, cp_len: int) -> BasebandSignal:
    """Prepend the last ``cp_len`` samples of the frame."""
    cp_len = int(cp_len)
    body = s.body
    if cp_len < 0 or cp_len > body.size:
        raise ConfigError(f"cp_len must lie in [0, {body.size}], got {cp_len}")
    if cp_len == 0:
        return replace(s, samples=body.copy(), cp_len=0)
    return replace(s, samples=np.concatenate([body[-cp_len:], body]), cp_len=cp_len)


def remove_cp(r: BasebandSignal) -> BasebandSignal:
    return replace(r, samples=r.samples[r.cp_len:].copy(), cp_len=0)


def modulate(x: np.ndarray, grid: DDGridConfig, cp_len: int = 0) -> BasebandSignal:
    """ISFFT, Heisenberg transform and CP insertion in one call."""
    return add_cp(heisenberg_rect(isfft(x), grid), cp_len)


def demodulate(r: BasebandSignal, grid: DDGridConfig, branch: int | None = None) -> np.ndarray:
    """CP removal, Wigner transform and SFFT; returns the (N, M) delay-Doppler frame."""
    return sfft(wigner_rect(remove_cp(r), grid, branch))
