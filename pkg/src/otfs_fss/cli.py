"""Command-line entry point: ``otfs-fss simulate | exit-chart | verify``.

Experiments are described by a YAML file with nested sections; command-line
flags override the file. Example::

    grid: {N: 16, M: 32, delta_f: 15000, G: 2}
    modulation: qpsk
    channel: {paths: 9, velocity_kmh: 300, carrier_hz: 4.0e9}
    filter: {rolloff: 0.4, span: 4}
    truncation: {E: 6}
    mp: {damping: 0.7, conv_threshold: 0.1, max_iters: 20, turbo_iters: 3}
    receivers: [TMP, SSS]
    snr_db: [0, 5, 10]
    frames: 200
    seed: 1
"""

from __future__ import annotations

import argparse
import copy
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .analysis import (LinkConfig, ReceiverSpec, SimReport, ber_sweep, exit_chart, exit_csv,
                       time_domain_oracle)
from .channel import PowerDelayProfile, channel_order, draw_channel, max_doppler
from .core import ConfigError, DDGridConfig, RngSpec, crandn
from .ddmatrix import TruncationSpec, build_branch_matrix, build_on_grid_matrix, stack_branches, theta
from .equalizer import MPParams, cm_per_iteration, icmp_run, tmp_run
from .modem import demodulate, modulate
from .pulses import RolloffFilter, rect_cross_ambiguity

log = logging.getLogger("otfs_fss")

OUTPUT_ENV = "OTFS_FSS_OUTPUT_DIR"

DEFAULTS = {
    "grid": {"N": 16, "M": 32, "delta_f": 15e3, "G": 2},
    "modulation": "qpsk",
    "channel": {"paths": 9, "nu_max": None, "velocity_kmh": 300.0, "carrier_hz": 4.0e9,
                "decay": 1e-6, "max_delay": 5e-6},
    "filter": {"rolloff": 0.4, "span": 4},
    "truncation": {"E": 6},
    "mp": {"damping": 0.7, "conv_threshold": 0.1, "max_iters": 20, "turbo_iters": 3},
    "receivers": ["TMP", "SSS"],
    "snr_db": [0.0, 5.0, 10.0],
    "frames": 200,
    "seed": 0,
    "csi_epsilon": 0.0,
    "exit": {"snr_db": [0.0, 6.0], "sigma": [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0], "frames": 20},
    "output": None,
}


@dataclass
class ExperimentConfig:
    link: LinkConfig
    receivers: list
    snr_db: list
    frames: int
    csi_epsilon: float
    exit_snr_db: list
    exit_sigma: list
    exit_frames: int
    output: str | None
    nu_max: float
    raw: dict = field(repr=False, default_factory=dict)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _field(raw: dict, path: str):
    cur = raw
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise ConfigError(f"{path}: missing")
        cur = cur[part]
    return cur


def _num(raw, path, kind=float, minimum=None):
    v = _field(raw, path)
    try:
        if kind is int:
            if isinstance(v, bool) or float(v) != int(float(v)):
                raise ValueError
            v = int(float(v))
        else:
            v = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected {'an integer' if kind is int else 'a number'}, got {v!r}") from None
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}: must be at least {minimum}, got {v}")
    return v


def _wrap(path: str, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_config(raw: dict | None) -> ExperimentConfig:
    """Validate a (partial) config mapping against the defaults."""
    raw = _merge(DEFAULTS, raw or {})
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown setting")
    grid = _wrap("grid", DDGridConfig, N=_num(raw, "grid.N", int, 1), M=_num(raw, "grid.M", int, 1),
                 delta_f=_num(raw, "grid.delta_f"), G=_num(raw, "grid.G", int, 1))
    ch = raw["channel"]
    if ch.get("nu_max") is not None:
        nu_max = _num(raw, "channel.nu_max", float, 0.0)
    else:
        nu_max = max_doppler(_num(raw, "channel.velocity_kmh", float, 0.0),
                             _num(raw, "channel.carrier_hz", float, 0.0))
    profile = _wrap("channel", PowerDelayProfile, decay=_num(raw, "channel.decay", float, 0.0),
                    max_delay=_num(raw, "channel.max_delay", float, 0.0))
    if profile.decay <= 0:
        raise ConfigError("channel.decay: must be positive")
    filt = _wrap("filter", RolloffFilter, rolloff=_num(raw, "filter.rolloff"), span_symbols=_num(raw, "filter.span", int, 1))
    params = _wrap("mp", MPParams, damping=_num(raw, "mp.damping"), conv_threshold=_num(raw, "mp.conv_threshold"),
                   max_iters=_num(raw, "mp.max_iters", int, 1), turbo_iters=_num(raw, "mp.turbo_iters", int, 1))
    E = _num(raw, "truncation.E", int, 0)
    n_paths = _num(raw, "channel.paths", int, 1)
    if nu_max >= grid.delta_f:
        raise ConfigError("channel.nu_max: must stay below the subcarrier spacing")
    link = _wrap("config", LinkConfig, grid=grid, modulation=str(raw["modulation"]), n_paths=n_paths,
                 nu_max=nu_max, profile=profile, filt=filt, E=E, params=params,
                 seed=_num(raw, "seed", int, 0))
    # the channel order must fit in the frame
    _wrap("channel.max_delay", channel_order, [profile.max_delay], grid, filt, filt.span_symbols)
    eps = _num(raw, "csi_epsilon", float, 0.0)
    if not isinstance(raw["receivers"], (list, tuple)) or not raw["receivers"]:
        raise ConfigError("receivers: expected a non-empty list")
    receivers = []
    for r in raw["receivers"]:
        rx = _wrap("receivers", ReceiverSpec.parse, str(r))
        if eps and not rx.epsilon:
            rx = ReceiverSpec(rx.kind, rx.E, rx.R, eps, rx.turbo_iters)
        if rx.E is not None:
            _wrap("receivers", TruncationSpec(rx.E).validate, grid.N)
        receivers.append(rx)
    if len({r.label for r in receivers}) != len(receivers):
        raise ConfigError("receivers: duplicate entries")

    def _list(path):
        v = _field(raw, path)
        if not isinstance(v, (list, tuple)) or not v:
            raise ConfigError(f"{path}: expected a non-empty list of numbers")
        try:
            return [float(s) for s in v]
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected a non-empty list of numbers") from None

    snr = _list("snr_db")
    sig = _list("exit.sigma")
    if any(s < 0 for s in sig):
        raise ConfigError("exit.sigma: values must be non-negative")
    return ExperimentConfig(link=link, receivers=receivers, snr_db=snr, frames=_num(raw, "frames", int, 1),
                            csi_epsilon=eps, exit_snr_db=_list("exit.snr_db"), exit_sigma=sig,
                            exit_frames=_num(raw, "exit.frames", int, 1), output=raw["output"],
                            nu_max=nu_max, raw=raw)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Fully resolved mapping that parses back to an equivalent config."""
    link = cfg.link
    return {
        "grid": {"N": link.grid.N, "M": link.grid.M, "delta_f": link.grid.delta_f, "G": link.grid.G},
        "modulation": link.modulation,
        "channel": {"paths": link.n_paths, "nu_max": link.nu_max, "velocity_kmh": None, "carrier_hz": None,
                    "decay": link.profile.decay, "max_delay": link.profile.max_delay},
        "filter": {"rolloff": link.filt.rolloff, "span": link.filt.span_symbols},
        "truncation": {"E": link.E},
        "mp": {"damping": link.params.damping, "conv_threshold": link.params.conv_threshold,
               "max_iters": link.params.max_iters, "turbo_iters": link.params.turbo_iters},
        "receivers": [r.label for r in cfg.receivers],
        "snr_db": list(cfg.snr_db),
        "frames": cfg.frames,
        "seed": link.seed,
        "csi_epsilon": cfg.csi_epsilon,
        "exit": {"snr_db": list(cfg.exit_snr_db), "sigma": list(cfg.exit_sigma), "frames": cfg.exit_frames},
        "output": cfg.output,
    }


def load_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    raw = {}
    if path:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config: invalid YAML in {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a mapping")
    ch = raw.get("channel") or {}
    if ch.get("nu_max") is not None and ("velocity_kmh" in ch or "carrier_hz" in ch):
        log.warning("channel.nu_max given explicitly; ignoring velocity_kmh/carrier_hz")
    raw = _merge(raw, overrides or {})
    return parse_config(raw)


def _output_path(cfg: ExperimentConfig, explicit: str | None, default_name: str) -> Path:
    if explicit:
        return Path(explicit)
    if cfg.output:
        return Path(cfg.output)
    return Path(os.environ.get(OUTPUT_ENV, ".")) / default_name


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def cmd_simulate(cfg: ExperimentConfig, output: str | None = None) -> int:
    def progress(done, total):
        log.info("frame %d/%d", done, total)

    results = ber_sweep(cfg.link, cfg.receivers, cfg.snr_db, cfg.frames, progress=progress)
    path = _output_path(cfg, output, "ber.csv")
    _write(path, SimReport(ber=results).ber_csv())
    print(f"{'receiver':<20} {'snr_db':>7} {'ber':>12} {'errors':>8}")
    for pts in results.values():
        for p in pts:
            print(f"{p.receiver:<20} {p.snr_db:>7g} {p.ber:>12.4e} {p.bit_errors:>8d}")
    print(f"wrote {path}")
    return 0


def cmd_exit_chart(cfg: ExperimentConfig, output: str | None = None) -> int:
    charts = {}
    for snr in cfg.exit_snr_db:
        charts[snr] = exit_chart(cfg.link, snr, cfg.exit_sigma, frames=cfg.exit_frames)
    path = _output_path(cfg, output, "exit.csv")
    _write(path, exit_csv(charts))
    for snr, chart in charts.items():
        for p in chart.curve:
            print(f"snr={snr:g} sigma={p.sigma_Li:g} I_i={p.I_i:.4f} I_e={p.I_e:.4f}")
    print(f"wrote {path}")
    return 0


def verification_checks(seed: int = 0) -> list:
    """Closed-form and counter checks at small sizes; returns (name, passed, detail) tuples."""
    out = []
    grid = DDGridConfig(N=8, M=16, G=2)
    filt = RolloffFilter()
    worst = 0.0
    for c in range(3):
        spec = RngSpec(seed, c)
        ch = draw_channel(grid, spec, L=4)
        xs = crandn(spec.generator("data"), (5, grid.N, grid.M))
        for g in range(grid.G):
            H = build_branch_matrix(ch, g, TruncationSpec(grid.N // 2), grid, filt)
            for x in xs:
                y = time_domain_oracle(x, ch, g, grid, filt).reshape(-1)
                worst = max(worst, np.linalg.norm(H @ x.reshape(-1) - y) / np.linalg.norm(y))
    out.append(("closed-form matrix vs time-domain chain", worst < 1e-8, f"max rel err {worst:.2e}"))

    T = grid.T
    dev = max(abs(rect_cross_ambiguity(n * T, m * grid.delta_f, T) - (n == 0 and m == 0))
              for n in range(-3, 4) for m in range(-3, 4))
    out.append(("rectangular bi-orthogonality", dev < 1e-9, f"max dev {dev:.1e}"))

    q = np.arange(-2 * grid.N, 2 * grid.N + 1)
    th = theta(q, 0.0, grid.N)
    ok = np.array_equal(th, np.where(q % grid.N == 0, grid.N, 0).astype(complex))
    out.append(("on-grid Doppler kernel is N*delta", ok, ""))

    ch = draw_channel(grid, RngSpec(seed, 99), L=4, on_grid=True)
    same = all(build_on_grid_matrix(ch, g, grid, filt).entries()
               == build_branch_matrix(ch, g, TruncationSpec(0), grid, filt).entries() for g in range(grid.G))
    out.append(("on-grid builder equals E=0 builder", same, ""))

    x = crandn(RngSpec(seed, 0).generator("misc"), (grid.N, grid.M))
    rt = demodulate(modulate(x, grid, cp_len=6), grid)
    err = float(np.max(np.abs(rt - x)))
    out.append(("modem round trip", err < 1e-9, f"max err {err:.1e}"))

    ch = draw_channel(grid, RngSpec(seed, 1), L=3)
    Hs = [build_branch_matrix(ch, g, TruncationSpec(1), grid, filt) for g in range(grid.G)]
    y = [H @ x.reshape(-1) for H in Hs]
    params = MPParams(max_iters=4, turbo_iters=2, early_stop=False)
    Hst = stack_branches(Hs)
    _, _, rep = icmp_run(np.concatenate(y), Hst, np.full((grid.size, 4), 0.25), 0.1, params)
    ok_i = rep.cm_count == params.max_iters * cm_per_iteration(Hst.nnz, 4) == rep.predicted
    _, rep_t = tmp_run(y[0], y[1], Hs[0], Hs[1], 0.1, params)
    ok_t = rep_t.cm_count == params.turbo_iters * params.max_iters * cm_per_iteration(Hst.nnz, 4)
    out.append(("complexity counters", ok_i and ok_t, f"ICMP {rep.cm_count}, TMP {rep_t.cm_count}"))
    return out


def cmd_verify(cfg: ExperimentConfig) -> int:
    failed = 0
    for name, ok, detail in verification_checks(cfg.link.seed):
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
        failed += not ok
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="otfs-fss", description="OTFS fractionally spaced receiver simulator")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "BER sweep over SNR for the selected receivers"),
                        ("exit-chart", "extrinsic information transfer curves"),
                        ("verify", "closed-form and complexity self-checks")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("-c", "--config", help="YAML experiment file")
        p.add_argument("--seed", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
        if name != "verify":
            p.add_argument("-o", "--output", help=f"CSV path (default: ${OUTPUT_ENV} or the working directory)")
            p.add_argument("--frames", type=int)
            p.add_argument("--snr", type=float, nargs="+", help="SNR grid in dB")
        if name == "simulate":
            p.add_argument("--receivers", nargs="+", help="e.g. TMP ICMP SSS S-TMP:R=50 TMP:eps=0.05")
            p.add_argument("--csi-epsilon", type=float)
            p.add_argument("--E", type=int, help="Doppler spread truncation")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "frames", None) is not None:
        over["frames"] = args.frames
        over["exit"] = {"frames": args.frames}
    if getattr(args, "snr", None):
        key = "snr_db" if args.command == "simulate" else "exit"
        if key == "exit":
            over.setdefault("exit", {})["snr_db"] = args.snr
        else:
            over["snr_db"] = args.snr
    if getattr(args, "receivers", None):
        over["receivers"] = args.receivers
    if getattr(args, "csi_epsilon", None) is not None:
        over["csi_epsilon"] = args.csi_epsilon
    if getattr(args, "E", None) is not None:
        over["truncation"] = {"E": args.E}
    try:
        cfg = load_config(args.config, over)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.output)
        if args.command == "exit-chart":
            return cmd_exit_chart(cfg, args.output)
        return cmd_verify(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
