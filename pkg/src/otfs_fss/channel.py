"""Time-varying multipath channel at the fractionally spaced sample rate.

The received polyphase sequences follow

    r_g[u] = sum_p sum_i h_i exp(j 2 pi nu_i (u - p) Ts) Prc((p - lag) Ts + g Ts/G - tau_i) s[u - p]

where s[u] = s(u Ts) are the symbol-rate transmit samples (CP included) and
``lag`` is the receiver's fixed sampling delay, in symbols, that lets the
pre-cursor of the non-causal raised-cosine fall on taps p >= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import ConfigError, DDGridConfig, ModAlphabet, as_generator, crandn
from .modem import BasebandSignal
from .pulses import RolloffFilter

SPEED_OF_LIGHT = 3e8
TAP_THRESHOLD = 1e-6


def split_doppler(nu: float, grid: DDGridConfig) -> tuple[int, float]:
    """Nearest Doppler bin and fractional offset in (-0.5, 0.5]."""
    v = nu * grid.N * grid.T
    k = math.ceil(v - 0.5)
    return int(k), float(v - k)


def max_doppler(velocity_kmh: float, carrier_hz: float) -> float:
    return velocity_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT


@dataclass(frozen=True)
class ChannelPath:
    gain: complex
    delay: float
    doppler: float
    doppler_int: int
    doppler_frac: float

    @classmethod
    def make(cls, gain: complex, delay: float, doppler: float, grid: DDGridConfig) -> "ChannelPath":
        k, beta = split_doppler(doppler, grid)
        return cls(complex(gain), float(delay), float(doppler), k, beta)


@dataclass(frozen=True)
class PowerDelayProfile:
    """Exponential profile p(tau) = exp(-tau / decay) over [0, max_delay]."""

    decay: float = 1e-6
    max_delay: float = 5e-6

    def power(self, tau):
        return np.exp(-np.asarray(tau) / self.decay)


@dataclass(frozen=True)
class ChannelRealization:
    paths: tuple
    channel_order: int
    max_doppler: float
    lag: int = 0

    @property
    def L(self) -> int:
        return len(self.paths)

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths], dtype=complex)

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.paths], dtype=float)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([p.doppler for p in self.paths], dtype=float)

    @property
    def doppler_ints(self) -> np.ndarray:
        return np.array([p.doppler_int for p in self.paths], dtype=int)

    @property
    def doppler_fracs(self) -> np.ndarray:
        return np.array([p.doppler_frac for p in self.paths], dtype=float)

    def to_dict(self) -> dict:
        return {
            "channel_order": int(self.channel_order),
            "max_doppler": float(self.max_doppler),
            "lag": int(self.lag),
            "paths": [
                {"gain": [p.gain.real, p.gain.imag], "delay": p.delay, "doppler": p.doppler}
                for p in self.paths
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, grid: DDGridConfig) -> "ChannelRealization":
        paths = tuple(
            ChannelPath.make(complex(*p["gain"]), p["delay"], p["doppler"], grid) for p in d["paths"]
        )
        return cls(paths, int(d["channel_order"]), float(d["max_doppler"]), int(d.get("lag", 0)))


def channel_order(delays: Sequence[float], grid: DDGridConfig, filt: RolloffFilter, lag: int) -> int:
    """Smallest P covering every tap of Prc((p - lag) Ts + g Ts/G - tau) above zero."""
    tau_max = max(float(np.max(delays)), 0.0) if len(delays) else 0.0
    P = int(math.ceil(tau_max / grid.Ts - 1e-9)) + lag + filt.span_symbols + 1
    if P > grid.M:
        raise ConfigError(f"channel order {P} exceeds M={grid.M}; the CP would not fit in the frame")
    return P


def make_channel(paths, grid: DDGridConfig, filt: RolloffFilter | None = None, lag: int = 0,
                 P: int | None = None) -> ChannelRealization:
    """Build a realization from ``(gain, delay, doppler)`` triples."""
    filt = filt or RolloffFilter()
    ps = tuple(ChannelPath.make(g, d, nu, grid) for g, d, nu in paths)
    if P is None:
        P = channel_order([p.delay for p in ps], grid, filt, lag)
    nu_max = max((abs(p.doppler) for p in ps), default=0.0)
    return ChannelRealization(ps, int(P), nu_max, int(lag))


def draw_channel(grid: DDGridConfig, rng, *, L: int = 9, nu_max: float = 1111.0,
                 profile: PowerDelayProfile | None = None, filt: RolloffFilter | None = None,
                 on_grid: bool = False, rho=None) -> ChannelRealization:
    """Draw an L-path channel with exponential power delay profile and Jakes Doppler.

    The first path sits at zero delay; the others are uniform over the profile
    span. Gains are complex Gaussian with variances proportional to the
    profile, normalised to unit total average power. Dopplers are
    ``nu_max * cos(rho)`` with rho uniform on [-pi, pi] unless ``rho`` is given.
    ``on_grid`` rounds delays to multiples of Ts and Dopplers to the 1/(NT) grid.
    """
    if L < 1:
        raise ConfigError("L must be at least 1")
    if nu_max < 0:
        raise ConfigError("nu_max must be non-negative")
    if nu_max >= grid.delta_f:
        raise ConfigError("nu_max must stay below the subcarrier spacing")
    rng = as_generator(rng, "channel")
    profile = profile or PowerDelayProfile()
    filt = filt or RolloffFilter()
    delays = np.sort(np.concatenate([[0.0], rng.uniform(0.0, profile.max_delay, L - 1)]))
    power = profile.power(delays)
    power /= power.sum()
    gains = np.sqrt(power) * crandn(rng, L)
    if rho is None:
        rho = rng.uniform(-np.pi, np.pi, L)
    dopplers = nu_max * np.cos(np.broadcast_to(np.asarray(rho, dtype=float), (L,)))
    if on_grid:
        delays = np.round(delays / grid.Ts) * grid.Ts
        dopplers = np.round(dopplers / grid.doppler_resolution) * grid.doppler_resolution
    lag = filt.span_symbols
    ch = make_channel(zip(gains, delays, dopplers), grid, filt, lag)
    return replace(ch, max_doppler=float(nu_max))


def round_to_grid(ch: ChannelRealization, grid: DDGridConfig) -> ChannelRealization:
    """Receiver-side on-grid approximation: delays to multiples of Ts, Doppler to integer bins."""
    paths = tuple(
        ChannelPath(p.gain, round(p.delay / grid.Ts) * grid.Ts,
                    p.doppler_int * grid.doppler_resolution, p.doppler_int, 0.0)
        for p in ch.paths
    )
    return replace(ch, paths=paths)


def path_taps(ch: ChannelRealization, g: int, grid: DDGridConfig, filt: RolloffFilter,
              threshold: float = TAP_THRESHOLD) -> np.ndarray:
    """(L, P) sampled raised-cosine taps Prc((p - lag) Ts + g Ts/G - tau_i).

    Taps with magnitude below ``threshold`` are set to exactly zero.
    """
    p = np.arange(ch.channel_order)
    t = (p[None, :] - ch.lag) + g / grid.G - ch.delays[:, None] / grid.Ts
    taps = filt.rc(t)
    taps[np.abs(taps) < threshold] = 0.0
    return taps


def apply_channel(s: BasebandSignal, ch: ChannelRealization, grid: DDGridConfig,
                  filt: RolloffFilter | None = None, threshold: float = TAP_THRESHOLD) -> BasebandSignal:
    """Noiseless channel output at the G/Ts instants, CP kept in place.

    Only the symbol-rate samples of ``s`` drive the transmit filter. Time zero is
    the first sample after the CP; outputs that would need samples from a
    previous frame see zeros there.
    """
    filt = filt or RolloffFilter()
    G = grid.G
    if s.cp_len % G:
        raise ConfigError("cp_len must be a multiple of G")
    cp_sym = s.cp_len // G
    if ch.channel_order - 1 > cp_sym:
        raise ConfigError(f"channel order {ch.channel_order} needs a CP of at least "
                          f"{G * (ch.channel_order - 1)} samples, got {s.cp_len}")
    s_sym = np.asarray(s.samples)[::G]
    n = s_sym.size
    u = np.arange(n) - cp_sym
    taps = np.stack([path_taps(ch, g, grid, filt, threshold) for g in range(G)])  # (G, L, P)
    h, nu = ch.gains, ch.dopplers
    out = np.zeros((G, n), dtype=complex)
    for p in range(ch.channel_order):
        w = taps[:, :, p] * h[None, :]
        if not np.any(w):
            continue
        phase = np.exp(2j * np.pi * nu[:, None] * ((u - p) * grid.Ts)[None, :])
        coef = w @ phase  # (G, n)
        shifted = np.zeros(n, dtype=complex)
        shifted[p:] = s_sym[:n - p]
        out += coef * shifted[None, :]
    return replace(s, samples=out.T.reshape(-1))


def add_rx_filtered_noise(r: BasebandSignal, sigma_n2: float, filt: RolloffFilter, rng) -> BasebandSignal:
    """Add white Gaussian noise passed through the receive RRC filter.

    Noise is generated on a lattice twice as fine as the FSS instants, filtered
    by the truncated RRC and decimated, so the per-sample variance is
    ``sigma_n2`` times the filter energy.
    """
    if sigma_n2 < 0:
        raise ConfigError("sigma_n2 must be non-negative")
    if sigma_n2 == 0:
        return r
    rng = as_generator(rng, "noise")
    G = r.G
    up = 2
    step = 1.0 / (G * up)  # lattice spacing in Ts
    half = int(math.floor(filt.span_symbols / step))
    taps = filt.rrc(np.arange(-half, half + 1) * step) * step
    n_out = r.samples.size
    n_fine = n_out * up + 2 * half
    w = crandn(rng, n_fine) * math.sqrt(sigma_n2 / step)
    filtered = np.convolve(w, taps, mode="valid")[::up][:n_out]
    return replace(r, samples=r.samples + filtered)


def snr_to_sigma(snr_db: float, alphabet: ModAlphabet | None = None) -> float:
    """White-noise level N0 = Es / 10^(snr/10) with Es = 1 (unit-energy alphabets, unit channel power)."""
    if alphabet is not None and abs(alphabet.energy - 1.0) > 1e-9:
        raise ConfigError(f"alphabet {alphabet.name!r} is not normalised to unit energy")
    return 1.0 / 10.0 ** (snr_db / 10.0)
