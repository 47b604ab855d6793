"""Shared types: grid geometry, modulation alphabets and seeded random streams."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration value violates a precondition."""


@dataclass(frozen=True)
class DDGridConfig:
    """Delay-Doppler / time-frequency geometry of one OTFS frame.

    ``N`` time slots (Doppler bins), ``M`` subcarriers (delay bins), subcarrier
    spacing ``delta_f`` in Hz and FSS oversampling factor ``G``. The slot
    duration ``T`` defaults to ``1/delta_f``.
    """

    N: int = 32
    M: int = 128
    delta_f: float = 15e3
    T: float = 0.0
    G: int = 2

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError(f"N must be a positive integer, got {self.N!r}")
        if int(self.M) != self.M or self.M < 1:
            raise ConfigError(f"M must be a positive integer, got {self.M!r}")
        if int(self.G) != self.G or self.G < 1:
            raise ConfigError(f"G must be a positive integer, got {self.G!r}")
        if not self.delta_f > 0:
            raise ConfigError(f"delta_f must be positive, got {self.delta_f!r}")
        if self.T == 0.0:
            object.__setattr__(self, "T", 1.0 / self.delta_f)
        if abs(self.T * self.delta_f - 1.0) > 1e-12:
            raise ConfigError("T * delta_f must equal 1")

    @property
    def Ts(self) -> float:
        """Symbol-spaced sampling interval 1/(M delta_f)."""
        return 1.0 / (self.M * self.delta_f)

    @property
    def frame_duration(self) -> float:
        return self.N * self.T

    @property
    def bandwidth(self) -> float:
        return self.M * self.delta_f

    @property
    def doppler_resolution(self) -> float:
        """Doppler bin width 1/(N T) in Hz."""
        return 1.0 / (self.N * self.T)

    @property
    def size(self) -> int:
        return self.N * self.M

    def with_G(self, G: int) -> "DDGridConfig":
        return DDGridConfig(self.N, self.M, self.delta_f, self.T, G)


def _gray(n: int) -> int:
    return n ^ (n >> 1)


@dataclass(frozen=True)
class ModAlphabet:
    """Ordered constellation with a Gray labelling.

    ``bits[j]`` is the bit tuple (MSB first) carried by ``symbols[j]``.
    """

    symbols: np.ndarray
    bits: np.ndarray = field(repr=False)
    name: str = ""

    def __post_init__(self):
        Q = len(self.symbols)
        if Q < 2 or Q & (Q - 1):
            raise ConfigError(f"alphabet size must be a power of two, got {Q}")
        self.symbols.setflags(write=False)
        self.bits.setflags(write=False)

    @property
    def Q(self) -> int:
        return len(self.symbols)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.Q))

    @property
    def energy(self) -> float:
        return float(np.mean(np.abs(self.symbols) ** 2))

    def bits_to_indices(self, bits: np.ndarray) -> np.ndarray:
        """Map a flat bit array (length multiple of log2 Q) to symbol indices."""
        k = self.bits_per_symbol
        b = np.asarray(bits, dtype=np.int64).reshape(-1, k)
        labels = b @ (1 << np.arange(k - 1, -1, -1))
        return self._label_to_index[labels]

    def indices_to_bits(self, idx: np.ndarray) -> np.ndarray:
        return self.bits[np.asarray(idx)].reshape(-1)

    @property
    def _label_to_index(self) -> np.ndarray:
        k = self.bits_per_symbol
        labels = self.bits @ (1 << np.arange(k - 1, -1, -1))
        inv = np.empty(self.Q, dtype=np.int64)
        inv[labels] = np.arange(self.Q)
        return inv


def _label_bits(labels, k):
    return ((np.asarray(labels)[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.int8)


def make_qpsk_gray() -> ModAlphabet:
    """Gray QPSK in the order (1+j, 1-j, -1+j, -1-j)/sqrt(2).

    The first bit selects the sign of the real part and the second the sign of
    the imaginary part, so index j carries the bits of j.
    """
    s = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2)
    return ModAlphabet(s, _label_bits(np.arange(4), 2), name="qpsk")


def make_qam(order: int) -> ModAlphabet:
    """Square Gray QAM of the given order, scaled to unit average energy."""
    if order not in (4, 16, 64):
        raise ConfigError(f"unsupported QAM order {order}; expected 4, 16 or 64")
    if order == 4:
        return make_qpsk_gray()
    k = int(np.log2(order)) // 2
    side = 1 << k
    levels = 2 * np.arange(side) - (side - 1)
    # PAM level index -> Gray label
    gray = np.array([_gray(i) for i in range(side)])
    syms, labels = [], []
    for i in range(side):
        for q in range(side):
            syms.append(levels[i] + 1j * levels[q])
            labels.append((gray[i] << k) | gray[q])
    syms = np.array(syms, dtype=complex)
    syms /= np.sqrt(np.mean(np.abs(syms) ** 2))
    return ModAlphabet(syms, _label_bits(labels, 2 * k), name=f"{order}qam")


def make_alphabet(name: str) -> ModAlphabet:
    name = str(name).lower()
    if name in ("qpsk", "4qam"):
        return make_qpsk_gray()
    if name.endswith("qam") and name[:-3].isdigit():
        return make_qam(int(name[:-3]))
    raise ConfigError(f"unknown modulation {name!r}")


# Purposes used to derive independent streams from one master seed.
PURPOSES = {"channel": 0, "data": 1, "noise": 2, "csi": 3, "prior": 4, "misc": 5}


@dataclass(frozen=True)
class RngSpec:
    """Seed for one independent random stream.

    Streams are derived as ``SeedSequence(master_seed, spawn_key=(stream_id,
    purpose_code))`` so every (frame, purpose) pair is reproducible on its own.
    """

    master_seed: int
    stream_id: int = 0

    def generator(self, purpose: str = "misc") -> np.random.Generator:
        code = PURPOSES[purpose]
        ss = np.random.SeedSequence(int(self.master_seed) & (2**64 - 1),
                                    spawn_key=(int(self.stream_id), code))
        return np.random.default_rng(ss)


def as_generator(rng, purpose: str = "misc") -> np.random.Generator:
    if isinstance(rng, RngSpec):
        return rng.generator(purpose)
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def crandn(rng: np.random.Generator, size) -> np.ndarray:
    """Circularly-symmetric complex normal samples with unit variance."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)

