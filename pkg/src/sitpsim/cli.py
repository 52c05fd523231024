"""Experiment runner CLI.

Subcommands: loss-model, loss-sim, latency, interleave, ber-validate.
Every run writes its CSV outputs plus a run_manifest.json snapshot of the
resolved configuration into --out. Given the same inputs, CSV bytes are
identical for any --threads value; exit codes double as tolerance gates.
"""

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .channel import ber_from_snr, db_to_linear, qam_awgn_ber
from .config import BurstSchedule, ConfigError, dump_config, load_config, \
    validate_burst, with_stack
from .features import DEFAULT_BITS_PER_SYMBOL, DEFAULT_FEATURE_LEN, \
    synthetic_group
from .lossmodel import p_cross_fail
from .simulator import CAUSE_ORDER, map_blocks, \
    run_burst_experiment, run_latency_experiment, run_loss_experiment

THREADS_ENV_VAR = "SITPSIM_THREADS"

# Enough expected errors for the 5% BER gate to have statistical power.
BER_TARGET_ERRORS = 5000
BER_MAX_BITS = 60_000_000

# Default per-order Eb/N0 grids spanning the analytic BER decades where the
# closed form is tight (roughly 2e-2 down to 1e-5).
BER_DEFAULT_GRIDS = {
    4: "4:9:6",
    16: "8:13:6",
    64: "11:16:6",
}

CAUSE_COLUMNS = ("none", "sync_fail", "ph_fail", "dalink_crc_fail",
                 "net_fail", "transport_fail", "app_fail")


def fmt(value):
    """Stable CSV cell rendering: shortest round-trip repr for floats."""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(cell) for cell in row])


def parse_grid(text):
    """Grid spec: 'start:stop:count' (inclusive linspace) or comma list."""
    if ":" in text:
        start, stop, count = text.split(":")
        return [float(x) for x in np.linspace(float(start), float(stop),
                                              int(count))]
    return [float(x) for x in text.split(",")]


def parse_int_list(text):
    """Integer list spec: 'start:stop' (half-open range) or comma list."""
    if ":" in text:
        start, stop = (int(x) for x in text.split(":"))
        return list(range(start, stop))
    return [int(x) for x in text.split(",")]


def _resolve_threads(args):
    env = os.environ.get(THREADS_ENV_VAR)
    if args.threads is not None:
        return max(1, args.threads)
    if env is not None:
        return max(1, int(env))
    return 1


def _out_dir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _write_manifest(args, cfg, seed, threads, started, extra):
    manifest = {
        "subcommand": args.command,
        "tool_version": __version__,
        "seed": seed,
        "threads": threads,
        "out": args.out,
        "config": dump_config(cfg),
        "args": extra,
        "duration_s": time.monotonic() - started,
    }
    path = os.path.join(args.out, "run_manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _maybe_plot(args, render):
    if not args.plot:
        return
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    render(plt)


def _sweep_stacks(cfg, args):
    """StackConfig per (protocol, modulation, payload) combination."""
    protocols = args.protocols.split(",") if args.protocols \
        else [cfg.stack.protocol]
    mods = parse_int_list(args.mods) if args.mods \
        else [cfg.stack.modulation_order]
    payloads = parse_int_list(args.payloads) if args.payloads \
        else [cfg.stack.payload_len_bits]
    for protocol in protocols:
        for order in mods:
            for payload in payloads:
                yield with_stack(cfg, protocol=protocol.strip().upper(),
                                 modulation_order=order,
                                 payload_len_bits=payload).stack


def cmd_loss_model(args, cfg, seed, threads):
    grid = parse_grid(args.grid)
    if not grid:
        raise ConfigError("empty Eb/N0 grid")
    rows = []
    for stack in _sweep_stacks(cfg, args):
        for ebn0_db in grid:
            pb = ber_from_snr(db_to_linear(ebn0_db), stack.modulation_order)
            bd = p_cross_fail(pb, stack)
            rows.append([stack.protocol, stack.modulation_order,
                         stack.payload_len_bits, ebn0_db, pb, bd.p_phy_fail,
                         bd.p_dalink_fail, bd.p_net_fail, bd.p_transport_fail,
                         bd.p_app_fail, bd.p_cross_fail])
    path = os.path.join(_out_dir(args), "loss_model.csv")
    write_csv(path, ["protocol", "modulation", "payload_bits", "ebn0_db",
                     "pb", "p_phy", "p_dalink", "p_net", "p_transport",
                     "p_app", "p_cross"], rows)

    def render(plt):
        fig, ax = plt.subplots(figsize=(7, 5))
        for key in sorted({(r[0], r[1], r[2]) for r in rows}):
            pts = [(r[3], r[10]) for r in rows
                   if (r[0], r[1], r[2]) == key]
            ax.semilogy([p[0] for p in pts], [max(p[1], 1e-12) for p in pts],
                        label=f"{key[0]} M={key[1]} L={key[2]}")
        ax.set_xlabel("Eb/N0 (dB)")
        ax.set_ylabel("packet loss probability")
        ax.legend(fontsize=7)
        fig.savefig(os.path.join(args.out, "loss_model.svg"))

    _maybe_plot(args, render)
    return 0


def cmd_loss_sim(args, cfg, seed, threads):
    grid = parse_grid(args.grid)
    rows = []
    outside = 0
    total_points = 0
    for stack in _sweep_stacks(cfg, args):
        report = run_loss_experiment(stack, grid, args.frames, seed,
                                     threads=threads)
        for point in report:
            total_points += 1
            if abs(point.measured - point.analytic) > point.ci3sigma:
                outside += 1
            row = [point.protocol, point.modulation, point.payload_bits,
                   point.ebn0_db, point.pb, point.analytic, point.measured,
                   point.frames, point.ci3sigma]
            row.extend(point.cause_counts[cause] for cause in CAUSE_ORDER)
            rows.append(row)
    header = ["protocol", "modulation", "payload_bits", "ebn0_db", "pb",
              "analytic", "measured", "frames", "ci3sigma"]
    header.extend(CAUSE_COLUMNS)
    write_csv(os.path.join(_out_dir(args), "loss.csv"), header, rows)

    def render(plt):
        fig, ax = plt.subplots(figsize=(7, 5))
        for key in sorted({(r[0], r[1], r[2]) for r in rows}):
            pts = [(r[3], r[5], r[6]) for r in rows
                   if (r[0], r[1], r[2]) == key]
            label = f"{key[0]} M={key[1]} L={key[2]}"
            ax.semilogy([p[0] for p in pts], [max(p[1], 1e-12) for p in pts],
                        "-", label=f"{label} analytic")
            ax.semilogy([p[0] for p in pts], [max(p[2], 1e-12) for p in pts],
                        "o", label=f"{label} measured")
        ax.set_xlabel("Eb/N0 (dB)")
        ax.set_ylabel("packet loss probability")
        ax.legend(fontsize=7)
        fig.savefig(os.path.join(args.out, "loss_sim.svg"))

    _maybe_plot(args, render)
    frac = outside / total_points if total_points else 0.0
    print(f"loss-sim: {outside}/{total_points} grid points outside 3 sigma")
    return 0 if frac <= 0.10 else 1


def cmd_latency(args, cfg, seed, threads):
    samples, summary = run_latency_experiment(cfg.latency, seed,
                                              threads=threads)
    out = _out_dir(args)
    write_csv(os.path.join(out, "latency.csv"),
              ["protocol", "trial", "latency_ms", "attempts", "delivered"],
              [[s.protocol, s.trial, s.latency_ms, s.attempts, s.delivered]
               for s in samples])
    write_csv(os.path.join(out, "latency_summary.csv"),
              ["protocol", "mean_ms", "median_ms", "p95_ms", "p99_ms",
               "delivery_rate"],
              [[proto, st["mean_ms"], st["median_ms"], st["p95_ms"],
                st["p99_ms"], st["delivery_rate"]]
               for proto, st in summary.items()])
    print(f"{'protocol':<8} {'mean':>8} {'median':>8} {'p95':>8} "
          f"{'p99':>8} {'delivery':>9}")
    for proto, st in summary.items():
        print(f"{proto:<8} {st['mean_ms']:>8.2f} {st['median_ms']:>8.2f} "
              f"{st['p95_ms']:>8.2f} {st['p99_ms']:>8.2f} "
              f"{st['delivery_rate']:>9.4f}")

    def render(plt):
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        for proto in summary:
            lat = np.array([s.latency_ms for s in samples
                            if s.protocol == proto
                            and (s.delivered or proto != "TCP")])
            axes[0].hist(lat, bins=80, density=True, alpha=0.5, label=proto)
            xs = np.sort(lat)
            axes[1].plot(xs, np.arange(1, xs.size + 1) / xs.size, label=proto)
        axes[0].set_xlabel("latency (ms)")
        axes[0].set_ylabel("pdf")
        axes[1].set_xlabel("latency (ms)")
        axes[1].set_ylabel("cdf")
        axes[0].legend()
        axes[1].legend()
        fig.savefig(os.path.join(args.out, "latency.svg"))

    _maybe_plot(args, render)
    return 0


def cmd_interleave(args, cfg, seed, threads):
    depths = parse_int_list(args.depths)
    seeds = parse_int_list(args.seeds)
    feature_len = args.feature_len
    b = args.bits_per_symbol
    base = cfg.burst
    cells = [(depth, run_seed, interleaved)
             for depth in depths
             for run_seed in seeds
             for interleaved in (False, True)]

    def run_cell(idx):
        depth, run_seed, interleaved = cells[idx]
        group = synthetic_group(depth, feature_len, b, run_seed)
        total = group.total_bits // cfg.stack.payload_len_bits
        schedule = validate_burst(BurstSchedule(
            gamma_high_db=base.gamma_high_db, gamma_low_db=base.gamma_low_db,
            t1=0, t2=base.fade_len, total_packets=total))
        return run_burst_experiment(cfg.stack, schedule, group, interleaved,
                                    run_seed)

    results = map_blocks(run_cell, len(cells), threads)
    rows = []
    for (depth, run_seed, interleaved), result in zip(cells, results):
        for image_index in range(depth):
            rows.append([depth, run_seed, interleaved, image_index,
                         float(result.erasure_fractions[image_index]),
                         float(result.mses[image_index])])
    write_csv(os.path.join(_out_dir(args), "burst.csv"),
              ["depth", "seed", "interleave", "image_index",
               "erasure_fraction", "mse"], rows)

    def render(plt):
        fig, ax = plt.subplots(figsize=(7, 4))
        for interleaved in (0, 1):
            for depth in depths:
                sel = [r for r in rows if r[0] == depth
                       and int(r[2]) == interleaved]
                label = f"depth {depth} {'with' if interleaved else 'no'} intlv"
                ax.plot([r[3] for r in sel], [r[4] for r in sel], "o",
                        alpha=0.4, label=label)
        ax.set_xlabel("image index")
        ax.set_ylabel("erasure fraction")
        ax.legend(fontsize=7)
        fig.savefig(os.path.join(args.out, "burst.svg"))

    _maybe_plot(args, render)
    return 0


def ber_point_bits(requested, analytic):
    """Top low-BER points up so the 5% gate has enough expected errors."""
    if analytic <= 0:
        return requested
    needed = int(math.ceil(BER_TARGET_ERRORS / analytic))
    return max(requested, min(needed, BER_MAX_BITS))


def cmd_ber_validate(args, cfg, seed, threads):
    mods = parse_int_list(args.mods)
    rows = []
    failed = 0
    for order in mods:
        grid = parse_grid(args.grid) if args.grid \
            else parse_grid(BER_DEFAULT_GRIDS[order])
        k = int(math.log2(order))
        for ebn0_db in grid:
            ebn0 = db_to_linear(ebn0_db)
            analytic = ber_from_snr(ebn0, order)
            nbits = ber_point_bits(args.nbits, analytic)
            nbits += (-nbits) % k
            es_n0 = ebn0 * k
            measured = qam_awgn_ber(order, es_n0, nbits, seed)
            rel_err = abs(measured - analytic) / analytic if analytic else 0.0
            binding = analytic >= 1e-4
            if binding and rel_err > 0.05:
                failed += 1
            rows.append([order, ebn0_db, analytic, measured, nbits, rel_err,
                         binding])
    write_csv(os.path.join(_out_dir(args), "ber_validate.csv"),
              ["modulation", "ebn0_db", "analytic", "measured", "nbits",
               "rel_err", "binding"], rows)

    def render(plt):
        fig, ax = plt.subplots(figsize=(7, 5))
        for order in mods:
            pts = [r for r in rows if r[0] == order]
            ax.semilogy([r[1] for r in pts], [max(r[2], 1e-12) for r in pts],
                        "-", label=f"M={order} analytic")
            ax.semilogy([r[1] for r in pts], [max(r[3], 1e-12) for r in pts],
                        "o", label=f"M={order} measured")
        ax.set_xlabel("Eb/N0 (dB)")
        ax.set_ylabel("BER")
        ax.legend(fontsize=8)
        fig.savefig(os.path.join(args.out, "ber_validate.svg"))

    _maybe_plot(args, render)
    print(f"ber-validate: {failed} binding points over 5% relative error")
    return 0 if failed == 0 else 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file of key = value lines")
    common.add_argument("--set", action="append", default=[], metavar="K=V",
                        help="override a config key (repeatable)")
    common.add_argument("--seed", type=int, default=None,
                        help="master RNG seed (default: config rng_seed)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--plot", action="store_true",
                        help="also render SVG plots from the CSVs")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (or ${THREADS_ENV_VAR}); "
                        "never affects results")

    parser = argparse.ArgumentParser(
        prog="sitpsim",
        description="Cross-layer transport protocol and channel simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("loss-model", parents=[common],
                       help="closed-form loss curves over an Eb/N0 grid")
    p.add_argument("--grid", default="0:20:21",
                   help="Eb/N0 grid, 'start:stop:count' or comma list (dB)")
    p.add_argument("--protocols", default="SITP,UDP,TCP")
    p.add_argument("--mods", default="4,16,64")
    p.add_argument("--payloads", default="256,512,1024")
    p.set_defaults(func=cmd_loss_model)

    p = sub.add_parser("loss-sim", parents=[common],
                       help="frame-level Monte Carlo vs the analytic model")
    p.add_argument("--grid", default="6:15:10")
    p.add_argument("--frames", type=int, default=100000,
                   help="frames per grid point")
    p.add_argument("--protocols", default=None,
                   help="comma list (default: configured protocol)")
    p.add_argument("--mods", default=None)
    p.add_argument("--payloads", default=None)
    p.set_defaults(func=cmd_loss_sim)

    p = sub.add_parser("latency", parents=[common],
                       help="three-protocol single-packet latency Monte Carlo")
    p.set_defaults(func=cmd_latency)

    p = sub.add_parser("interleave", parents=[common],
                       help="burst-fade erasures with/without interleaving")
    p.add_argument("--depths", default="4,8,16",
                   help="interleaving depths (images per group)")
    p.add_argument("--seeds", default="0:10",
                   help="run seeds, 'start:stop' or comma list")
    p.add_argument("--feature-len", type=int, default=DEFAULT_FEATURE_LEN)
    p.add_argument("--bits-per-symbol", type=int,
                   default=DEFAULT_BITS_PER_SYMBOL)
    p.set_defaults(func=cmd_interleave)

    p = sub.add_parser("ber-validate", parents=[common],
                       help="Gray-QAM AWGN simulation vs the BER formula")
    p.add_argument("--mods", default="4,16,64")
    p.add_argument("--grid", default=None,
                   help="Eb/N0 grid shared by all orders "
                   "(default: per-order transition grids)")
    p.add_argument("--nbits", type=int, default=2_000_000,
                   help="minimum simulated bits per point (low-BER points "
                   "are topped up for statistical power)")
    p.set_defaults(func=cmd_ber_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.monotonic()
    try:
        cfg = load_config(args.config, args.set)
        threads = _resolve_threads(args)
        seed = args.seed if args.seed is not None else cfg.stack.rng_seed
        code = args.func(args, cfg, seed, threads)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    extra = {key: value for key, value in vars(args).items()
             if key not in {"func", "command", "config", "set", "seed",
                            "out", "plot", "threads"}}
    _write_manifest(args, cfg, seed, threads, started, extra)
    return code


if __name__ == "__main__":
    sys.exit(main())
