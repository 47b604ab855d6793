"""EXIT charts, Monte-Carlo BER sweeps, CSI perturbation and the time-domain oracle."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, stats
from scipy.special import logsumexp

from .channel import (ChannelPath, ChannelRealization, PowerDelayProfile, add_rx_filtered_noise,
                      apply_channel, channel_order, draw_channel, round_to_grid, snr_to_sigma)
from .core import PURPOSES, ConfigError, DDGridConfig, ModAlphabet, RngSpec, as_generator, make_alphabet
from .ddmatrix import TruncationSpec, build_branch_matrix, build_on_grid_matrix, stack_branches
from .equalizer import LLRBlock, MPParams, icmp_run, mp_equalize_with_priors, simplified_run, tmp_run
from .modem import demodulate, modulate
from .pulses import RolloffFilter, noise_variance_after_rx_filter

MIN_EXIT_SAMPLES = 10_000
HIST_BINS = 100
HIST_SPAN_STD = 6.0

BER_FIELDS = ["receiver", "snr_db", "ber", "frames", "bit_errors", "seed"]
EXIT_FIELDS = ["curve", "snr_db", "sigma", "I_i", "I_e"]


# ---------------------------------------------------------------- EXIT charts

@dataclass(frozen=True)
class ExitPoint:
    sigma_Li: float
    I_i: float
    I_e: float
    snr_db: float = float("nan")
    warning: bool = False


def _require_qpsk(alphabet: ModAlphabet) -> None:
    if alphabet.Q != 4:
        raise ConfigError("EXIT analysis is defined for QPSK only")


def _rail_signs(x) -> np.ndarray:
    """(n, 2) signs of the in-phase and quadrature parts of QPSK symbols."""
    x = np.asarray(x).reshape(-1)
    return np.stack([np.sign(x.real), np.sign(x.imag)], axis=1)


def rails_to_symbol_llrs(rails: np.ndarray, alphabet: ModAlphabet) -> LLRBlock:
    """Symbol LLRs from per-rail LLRs L, where 2L is the rail log-probability ratio."""
    s = _rail_signs(alphabet.symbols)
    ref = s[-1]
    return LLRBlock((rails @ (s[:-1] - ref).T))


def symbol_to_rail_llrs(llrs: LLRBlock, alphabet: ModAlphabet) -> np.ndarray:
    """Inverse of :func:`rails_to_symbol_llrs` by marginalising over the other rail."""
    full = llrs.full()
    s = _rail_signs(alphabet.symbols)
    out = np.empty((full.shape[0], 2))
    for r in range(2):
        pos = s[:, r] > 0
        out[:, r] = 0.5 * (logsumexp(full[:, pos], axis=1) - logsumexp(full[:, ~pos], axis=1))
    return out


def sample_apriori_llrs(x, sigma: float, rng, alphabet: ModAlphabet | None = None) -> LLRBlock:
    """Gaussian a-priori LLRs: per rail, mean sqrt(2) sigma^2 x_rail and variance sigma^2."""
    alphabet = alphabet or make_alphabet("qpsk")
    _require_qpsk(alphabet)
    if sigma < 0:
        raise ConfigError("sigma must be non-negative")
    x = np.asarray(x).reshape(-1)
    if sigma == 0:
        return LLRBlock.zeros(x.size, alphabet.Q)
    rng = as_generator(rng, "prior")
    comp = np.stack([x.real, x.imag], axis=1)
    rails = math.sqrt(2.0) * sigma ** 2 * comp + sigma * rng.standard_normal(comp.shape)
    return rails_to_symbol_llrs(rails, alphabet)


def mutual_info_apriori(sigma: float, n_nodes: int = 96) -> float:
    """I_i = 2 - 2 E[log2(1 + exp(-2L))], L ~ N(sigma^2, sigma^2), by Gauss-Hermite quadrature."""
    if sigma < 0:
        raise ConfigError("sigma must be non-negative")
    if sigma == 0:
        return 0.0
    z, w = np.polynomial.hermite_e.hermegauss(n_nodes)
    L = sigma ** 2 + sigma * z
    e = np.sum(w * np.logaddexp(0.0, -2.0 * L)) / math.sqrt(2.0 * math.pi) / math.log(2.0)
    return float(min(max(2.0 - 2.0 * e, 0.0), 2.0))


def sigma_for_apriori_info(info: float) -> float:
    """Inverse of :func:`mutual_info_apriori`: the sigma giving ``info`` bits, 0 <= info < 2."""
    if not 0.0 <= info < 2.0:
        raise ConfigError(f"a-priori information must lie in [0, 2), got {info}")
    if info == 0.0:
        return 0.0
    hi = 1.0
    while mutual_info_apriori(hi) < info:
        hi *= 2.0
    return float(optimize.brentq(lambda s: mutual_info_apriori(s) - info, 0.0, hi, xtol=1e-12))


def _bin_edges(v: np.ndarray) -> np.ndarray:
    mean, std = float(np.mean(v)), float(np.std(v))
    half = HIST_SPAN_STD * std if std > 0 else 1e-9
    return np.linspace(mean - half, mean + half, HIST_BINS + 1)


def _rail_mi(L: np.ndarray, sign: np.ndarray) -> float:
    """Both conditional densities are binned on the grid of the conditioning symbol being integrated."""
    groups = {b: L[sign == b] for b in (1.0, -1.0)}
    if any(v.size == 0 for v in groups.values()):
        return 0.0
    total = 0.0
    for b, v in groups.items():
        edges = _bin_edges(v)
        width = np.diff(edges)
        f = np.histogram(v, edges)[0] / (v.size * width)
        g = np.histogram(groups[-b], edges)[0] / (groups[-b].size * width)
        used = f > 0
        total += 0.5 * float(np.sum(width[used] * f[used] * np.log2(2.0 * f[used] / (f[used] + g[used]))))
    return total


def mutual_info_extrinsic(llrs: LLRBlock, x, alphabet: ModAlphabet | None = None) -> float:
    """Histogram estimate of the mutual information between LLRs and QPSK symbols, in bits."""
    alphabet = alphabet or make_alphabet("qpsk")
    _require_qpsk(alphabet)
    x = np.asarray(x).reshape(-1)
    if x.size < MIN_EXIT_SAMPLES:
        warnings.warn(f"only {x.size} LLR samples; the histogram estimate may be biased", stacklevel=2)
    rails = symbol_to_rail_llrs(llrs, alphabet)
    sign = _rail_signs(x)
    return float(min(max(sum(_rail_mi(rails[:, r], sign[:, r]) for r in range(2)), 0.0), 2.0))


# ------------------------------------------------------------ link configuration

@dataclass(frozen=True)
class LinkConfig:
    """Everything needed to simulate one frame apart from the SNR and the receiver."""

    grid: DDGridConfig = field(default_factory=lambda: DDGridConfig(N=16, M=32, G=2))
    modulation: str = "qpsk"
    n_paths: int = 9
    nu_max: float = 1111.0
    profile: PowerDelayProfile = field(default_factory=PowerDelayProfile)
    filt: RolloffFilter = field(default_factory=RolloffFilter)
    E: int = 6
    params: MPParams = field(default_factory=MPParams)
    seed: int = 0

    def __post_init__(self):
        if self.grid.G != 2:
            raise ConfigError("the link simulator uses G=2 fractionally spaced reception")
        TruncationSpec(self.E).validate(self.grid.N)
        make_alphabet(self.modulation)

    @property
    def alphabet(self) -> ModAlphabet:
        return make_alphabet(self.modulation)


@dataclass(frozen=True)
class ReceiverSpec:
    """A receiver and the channel knowledge it is given.

    ``kind`` is one of TMP, ICMP, S-TMP, S-ICMP, MP (branch 0 only, exact CSI)
    or SSS (symbol-spaced MP on branch 0 with delays and Dopplers rounded to the grid).
    ``E`` and ``turbo_iters`` override the link defaults when set.
    """

    kind: str
    E: int | None = None
    R: int | None = None
    epsilon: float = 0.0
    turbo_iters: int | None = None
    label: str = ""

    KINDS = ("TMP", "ICMP", "S-TMP", "S-ICMP", "MP", "SSS")

    def __post_init__(self):
        kind = self.kind.upper().replace("_", "-")
        object.__setattr__(self, "kind", kind)
        if kind not in self.KINDS:
            raise ConfigError(f"unknown receiver {self.kind!r}; expected one of {', '.join(self.KINDS)}")
        if kind.startswith("S-") and (self.R is None or self.R < 1):
            raise ConfigError(f"{kind} needs a positive R")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if not self.label:
            object.__setattr__(self, "label", self.describe())

    def describe(self) -> str:
        opts = []
        if self.E is not None:
            opts.append(f"E={self.E}")
        if self.R is not None:
            opts.append(f"R={self.R}")
        if self.epsilon:
            opts.append(f"eps={self.epsilon:g}")
        if self.turbo_iters is not None:
            opts.append(f"nt={self.turbo_iters}")
        return self.kind + (":" + ",".join(opts) if opts else "")

    @classmethod
    def parse(cls, text: str) -> "ReceiverSpec":
        """Parse ``KIND[:key=value,...]`` with keys E, R, eps, nt."""
        kind, _, rest = text.strip().partition(":")
        kw = {}
        names = {"E": ("E", int), "R": ("R", int), "EPS": ("epsilon", float), "NT": ("turbo_iters", int)}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, _, val = item.partition("=")
            if key.upper() not in names or not val:
                raise ConfigError(f"bad receiver option {item!r} in {text!r}")
            name, conv = names[key.upper()]
            try:
                kw[name] = conv(val)
            except ValueError as exc:
                raise ConfigError(f"bad receiver option {item!r} in {text!r}") from exc
        return cls(kind, **kw)


# ------------------------------------------------------------ CSI and oracle

@dataclass(frozen=True)
class CsiPerturbSpec:
    epsilon: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")


def _uniform_ball(rng, radius, dim):
    if dim == 1:
        return rng.uniform(-1.0, 1.0, radius.shape) * radius
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, radius.shape))
    return r * np.exp(2j * np.pi * rng.uniform(0.0, 1.0, radius.shape))


def perturb_csi(ch: ChannelRealization, spec: CsiPerturbSpec, rng, grid: DDGridConfig,
                filt: RolloffFilter | None = None) -> ChannelRealization:
    """Add to each path's gain, delay and Doppler an error drawn uniformly from
    the ball of radius epsilon times that parameter's magnitude."""
    if spec.epsilon == 0:
        return ch
    filt = filt or RolloffFilter()
    rng = as_generator(rng, "csi")
    eps = spec.epsilon
    h, tau, nu = ch.gains, ch.delays, ch.dopplers
    h2 = h + _uniform_ball(rng, eps * np.abs(h), 2)
    tau2 = np.maximum(tau + _uniform_ball(rng, eps * np.abs(tau), 1), 0.0)
    nu2 = nu + _uniform_ball(rng, eps * np.abs(nu), 1)
    paths = tuple(ChannelPath.make(a, b, c, grid) for a, b, c in zip(h2, tau2, nu2))
    P = max(ch.channel_order, channel_order(tau2, grid, filt, ch.lag))
    return replace(ch, paths=paths, channel_order=P)


def cp_length(ch: ChannelRealization, grid: DDGridConfig) -> int:
    """Shortest CP (in G/Ts samples) that covers the channel order."""
    return grid.G * (ch.channel_order - 1)


def time_domain_oracle(x: np.ndarray, ch: ChannelRealization, g: int, grid: DDGridConfig,
                       filt: RolloffFilter | None = None) -> np.ndarray:
    """Noiseless delay-Doppler output of branch g through the full sampled chain."""
    filt = filt or RolloffFilter()
    s = modulate(np.asarray(x), grid, cp_len=cp_length(ch, grid))
    return demodulate(apply_channel(s, ch, grid, filt), grid, branch=g)


# ------------------------------------------------------------ frame simulation

@dataclass
class Frame:
    """One transmitted frame and what each branch received."""

    ch: ChannelRealization
    indices: np.ndarray
    bits: np.ndarray
    x: np.ndarray
    ys: list
    noise_var: float


def draw_frame(cfg: LinkConfig, frame_id: int, snr_db: float, *, channel: ChannelRealization | None = None,
               seed: int | None = None) -> Frame:
    """Draw channel, bits and noise for one frame from its own seeded streams.

    The streams depend only on (seed, frame_id), so different SNRs and
    receivers see the same channel, data and noise shape.
    """
    grid, alphabet = cfg.grid, cfg.alphabet
    spec = RngSpec(cfg.seed if seed is None else seed, frame_id)
    ch = channel or draw_channel(grid, spec, L=cfg.n_paths, nu_max=cfg.nu_max, profile=cfg.profile,
                                 filt=cfg.filt)
    bits = spec.generator("data").integers(0, 2, grid.size * alphabet.bits_per_symbol)
    idx = alphabet.bits_to_indices(bits)
    x = alphabet.symbols[idx].reshape(grid.N, grid.M)
    s = modulate(x, grid, cp_len=cp_length(ch, grid))
    r = apply_channel(s, ch, grid, cfg.filt)
    n0 = snr_to_sigma(snr_db, alphabet)
    r = add_rx_filtered_noise(r, n0 / grid.Ts, cfg.filt, spec.generator("noise"))
    ys = [demodulate(r, grid, g).reshape(-1) for g in range(grid.G)]
    # the Wigner sum over one slot scales per-sample noise by Ts
    nv = noise_variance_after_rx_filter(n0, cfg.filt)
    return Frame(ch, idx, bits, x, ys, nv)


class _MatrixCache:
    """Per-frame cache of branch matrices keyed by the receiver's CSI and truncation."""

    def __init__(self, cfg: LinkConfig, frame: Frame, frame_id: int):
        self.cfg, self.frame, self.frame_id = cfg, frame, frame_id
        self._csi = {}
        self._mats = {}

    def csi(self, eps: float) -> ChannelRealization:
        if eps not in self._csi:
            rng = RngSpec(self.cfg.seed, self.frame_id).generator("csi")
            self._csi[eps] = perturb_csi(self.frame.ch, CsiPerturbSpec(eps), rng, self.cfg.grid,
                                         self.cfg.filt)
        return self._csi[eps]

    def branches(self, E: int, eps: float):
        key = ("fss", E, eps)
        if key not in self._mats:
            ch = self.csi(eps)
            self._mats[key] = [build_branch_matrix(ch, g, TruncationSpec(E), self.cfg.grid, self.cfg.filt)
                               for g in range(self.cfg.grid.G)]
        return self._mats[key]

    def on_grid(self, eps: float):
        key = ("sss", eps)
        if key not in self._mats:
            grid1 = self.cfg.grid.with_G(1)
            ch = round_to_grid(self.csi(eps), grid1)
            self._mats[key] = build_on_grid_matrix(ch, 0, grid1, self.cfg.filt)
        return self._mats[key]


def run_receiver(rx: ReceiverSpec, cfg: LinkConfig, frame: Frame, cache: _MatrixCache,
                 history: list | None = None) -> np.ndarray:
    """Symbol decisions of one receiver on one frame."""
    alphabet = cfg.alphabet
    params = cfg.params
    if rx.turbo_iters is not None:
        params = replace(params, turbo_iters=rx.turbo_iters)
    E = cfg.E if rx.E is None else rx.E
    n = cfg.grid.size
    uniform = np.full((n, alphabet.Q), 1.0 / alphabet.Q)
    if rx.kind == "SSS":
        dec, _, _ = icmp_run(frame.ys[0], cache.on_grid(rx.epsilon), uniform, frame.noise_var, params,
                             alphabet)
        return dec
    Hs = cache.branches(E, rx.epsilon)
    if rx.kind == "TMP":
        dec, _ = tmp_run(frame.ys[0], frame.ys[1], Hs[0], Hs[1], frame.noise_var, params, alphabet,
                         history=history)
    elif rx.kind == "ICMP":
        dec, _, _ = icmp_run(np.concatenate(frame.ys), stack_branches(Hs), uniform, frame.noise_var,
                             params, alphabet)
    elif rx.kind == "MP":
        dec, _, _ = icmp_run(frame.ys[0], Hs[0], uniform, frame.noise_var, params, alphabet)
    else:
        dec, _ = simplified_run(rx.kind, frame.ys, Hs, frame.noise_var, params, rx.R, alphabet)
    return dec


def bit_errors(alphabet: ModAlphabet, bits: np.ndarray, decisions: np.ndarray) -> int:
    return int(np.count_nonzero(alphabet.indices_to_bits(decisions) != bits))


# ------------------------------------------------------------ BER harness

@dataclass(frozen=True)
class BerPoint:
    receiver: str
    snr_db: float
    ber: float
    frames: int
    bit_errors: int
    seed: int
    frame_errors: tuple = field(default=(), repr=False, compare=False)
    bits_per_frame: int = 0

    def row(self) -> dict:
        return {"receiver": self.receiver, "snr_db": f"{self.snr_db:g}", "ber": f"{self.ber:.10e}",
                "frames": self.frames, "bit_errors": self.bit_errors, "seed": self.seed}

    def frame_ber(self) -> np.ndarray:
        return np.asarray(self.frame_errors, dtype=float) / self.bits_per_frame

    def confidence_interval(self, level: float = 0.95) -> tuple[float, float]:
        """Normal-approximation interval for the mean of the per-frame BER, clipped to [0, 1]."""
        b = self.frame_ber()
        if b.size < 2:
            return (0.0, 1.0)
        half = stats.norm.ppf(0.5 + level / 2) * b.std(ddof=1) / math.sqrt(b.size)
        return (max(float(b.mean() - half), 0.0), min(float(b.mean() + half), 1.0))


def ber_sweep(cfg: LinkConfig, receivers, snr_grid, frames: int, progress=None) -> dict:
    """Run every receiver on identical frames for each SNR.

    Returns ``{receiver label: [BerPoint per SNR]}``.
    """
    if int(frames) != frames or frames < 1:
        raise ConfigError(f"frames must be a positive integer, got {frames}")
    rxs = [r if isinstance(r, ReceiverSpec) else ReceiverSpec.parse(r) for r in receivers]
    if not rxs:
        raise ConfigError("no receivers selected")
    labels = [r.label for r in rxs]
    if len(set(labels)) != len(labels):
        raise ConfigError("receiver labels must be unique")
    alphabet = cfg.alphabet
    bpf = cfg.grid.size * alphabet.bits_per_symbol
    snrs = [float(s) for s in snr_grid]
    errors = np.zeros((len(snrs), len(rxs), frames), dtype=np.int64)
    for f in range(frames):
        cache = None
        for si, snr in enumerate(snrs):
            frame = draw_frame(cfg, f, snr, channel=cache.frame.ch if cache else None)
            if cache is None:
                cache = _MatrixCache(cfg, frame, f)
            cache.frame = frame
            for ri, rx in enumerate(rxs):
                errors[si, ri, f] = bit_errors(alphabet, frame.bits, run_receiver(rx, cfg, frame, cache))
        if progress is not None:
            progress(f + 1, frames)
    out = {}
    for ri, rx in enumerate(rxs):
        pts = []
        for si, snr in enumerate(snrs):
            e = errors[si, ri]
            tot = int(e.sum())
            pts.append(BerPoint(rx.label, snr, tot / (frames * bpf), frames, tot, cfg.seed,
                                tuple(int(v) for v in e), bpf))
        out[rx.label] = pts
    return out


def turbo_convergence(cfg: LinkConfig, snr_db: float, frames: int, turbo_iters: int = 5) -> list:
    """BER after each TMP turbo iteration, as BerPoints labelled TMP@t."""
    alphabet = cfg.alphabet
    bpf = cfg.grid.size * alphabet.bits_per_symbol
    rx = ReceiverSpec("TMP", turbo_iters=turbo_iters)
    errors = np.zeros((turbo_iters, frames), dtype=np.int64)
    for f in range(frames):
        frame = draw_frame(cfg, f, snr_db)
        hist = []
        run_receiver(rx, cfg, frame, _MatrixCache(cfg, frame, f), history=hist)
        for h in hist:
            if h["branch"] == cfg.grid.G - 1:
                errors[h["turbo"] - 1, f] = bit_errors(alphabet, frame.bits, h["decisions"])
    return [BerPoint(f"TMP@{t + 1}", snr_db, int(errors[t].sum()) / (frames * bpf), frames,
                     int(errors[t].sum()), cfg.seed, tuple(int(v) for v in errors[t]), bpf)
            for t in range(turbo_iters)]


def paired_less_test(a: BerPoint, b: BerPoint) -> float:
    """One-sided paired t-test p-value for the hypothesis mean BER(a) < mean BER(b)."""
    da, db = a.frame_ber(), b.frame_ber()
    if da.size != db.size or da.size < 2:
        raise ConfigError("paired test needs two runs over the same frames")
    d = da - db
    if np.all(d == d[0]):
        return 0.0 if d[0] < 0 else 1.0
    return float(stats.ttest_rel(da, db, alternative="less").pvalue)


def intervals_overlap(a: BerPoint, b: BerPoint, level: float = 0.95) -> bool:
    lo_a, hi_a = a.confidence_interval(level)
    lo_b, hi_b = b.confidence_interval(level)
    return lo_a <= hi_b and lo_b <= hi_a


# ------------------------------------------------------------ EXIT harness

@dataclass
class ExitChart:
    curve: list
    trajectory: list


def exit_chart(cfg: LinkConfig, snr_db: float, sigma_grid, frames: int = 20, branch: int = 0,
               trajectory: bool = True) -> ExitChart:
    """Extrinsic-information transfer curve of one branch's MP equalizer.

    For each a-priori LLR spread sigma, Gaussian priors consistent with the
    transmitted symbols drive one MP pass per frame and the extrinsic output is
    scored by :func:`mutual_info_extrinsic`. With ``trajectory`` the (I_i, I_e)
    staircase of an actual TMP run on the same frames is also returned.
    """
    alphabet = cfg.alphabet
    _require_qpsk(alphabet)
    if not 0 <= branch < cfg.grid.G:
        raise ConfigError(f"branch must lie in [0, {cfg.grid.G})")
    sigmas = [float(s) for s in sigma_grid]
    data = []
    for f in range(frames):
        frame = draw_frame(cfg, f, snr_db)
        data.append((frame, _MatrixCache(cfg, frame, f).branches(cfg.E, 0.0)))
    curve = []
    for sigma in sigmas:
        ext, xs = [], []
        for f, (frame, Hs) in enumerate(data):
            # the same normal draws for every sigma (common random numbers) keep
            # the curve's sigma-to-sigma variation free of sampling noise
            rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(f, PURPOSES["prior"])))
            prior = sample_apriori_llrs(frame.x, sigma, rng, alphabet)
            _, e = mp_equalize_with_priors(frame.ys[branch], Hs[branch], prior, frame.noise_var,
                                           cfg.params, alphabet)
            ext.append(e.values)
            xs.append(frame.x.reshape(-1))
        x = np.concatenate(xs)
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            ie = mutual_info_extrinsic(LLRBlock(np.concatenate(ext)), x, alphabet)
        curve.append(ExitPoint(sigma, mutual_info_apriori(sigma), ie, snr_db, bool(w)))
    traj = []
    if trajectory:
        hists = []
        for frame, Hs in data:
            h = []
            tmp_run(frame.ys[0], frame.ys[1], Hs[0], Hs[1], frame.noise_var, cfg.params, alphabet, history=h)
            hists.append(h)
        x = np.concatenate([frame.x.reshape(-1) for frame, _ in data])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for step in range(len(hists[0])):
                prior = LLRBlock(np.concatenate([h[step]["prior"].values for h in hists]))
                ext = LLRBlock(np.concatenate([h[step]["extrinsic"].values for h in hists]))
                traj.append(ExitPoint(float("nan"), mutual_info_extrinsic(prior, x, alphabet),
                                      mutual_info_extrinsic(ext, x, alphabet), snr_db))
    return ExitChart(curve, traj)


# ------------------------------------------------------------ CSV output

def ber_csv(results: dict) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BER_FIELDS, lineterminator="\n")
    w.writeheader()
    for pts in results.values():
        for p in pts:
            w.writerow(p.row())
    return buf.getvalue()


def exit_csv(charts: dict) -> str:
    """``charts`` maps SNR (dB) to an :class:`ExitChart`."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=EXIT_FIELDS, lineterminator="\n")
    w.writeheader()
    for snr, chart in charts.items():
        for name, pts in (("curve", chart.curve), ("trajectory", chart.trajectory)):
            for p in pts:
                w.writerow({"curve": name, "snr_db": f"{snr:g}", "sigma": f"{p.sigma_Li:.6g}",
                            "I_i": f"{p.I_i:.10f}", "I_e": f"{p.I_e:.10f}"})
    return buf.getvalue()


@dataclass
class SimReport:
    """Results of one experiment: BER points, EXIT charts and their CSV forms."""

    ber: dict = field(default_factory=dict)
    exit: dict = field(default_factory=dict)

    def ber_csv(self) -> str:
        return ber_csv(self.ber)

    def exit_csv(self) -> str:
        return exit_csv(self.exit)
