"""Command-line tools: conv-check, perf, power, noise-sweep, resources.

Every command reads one optional JSON config (--config), writes CSV artifacts
into --out, and prints a short summary.  Exit codes: 0 success, 1 a checked
tolerance or assertion failed, 2 config or I/O trouble.  All randomness is
seeded, so a fixed config+seed reproduces output files byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys

import numpy as np

from . import nn
from .config import Config, ConfigError, load_config, parse_config
from .perf import CONVENTIONS, network_time, power_report
from .resources import CONNECTION_LIMIT, feasibility
from .winograd import WinogradPlan, make_plan, oracle_check

__all__ = ["main", "console_main"]


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _load(args) -> Config:
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = parse_config({})
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    return cfg


def _plan(cfg: Config) -> WinogradPlan:
    try:
        return make_plan(cfg.plan_m, cfg.plan_r)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write_csv(cfg: Config, name: str, header: list[str], rows) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else
                             (repr(float(v)) if isinstance(v, float) else v)
                             for v in row])
    return path


# ---------------------------------------------------------------------------
# conv-check


def _misprinted_f43() -> WinogradPlan:
    """A known-bad F(4,3) transcription that circulates in writeups: B^T is
    missing the [0, 2, -1, -2, 1, 0] row and A^T's last row ends in 0."""
    at = [[1, 1, 1, 1, 1, 0],
          [0, 1, -1, 2, -2, 0],
          [0, 1, 1, 4, 4, 0],
          [0, 1, -1, 8, -8, 0]]
    bt = [[4, 0, -5, 0, 1, 0],
          [0, -4, -4, 1, 1, 0],
          [0, 4, -4, -1, 1, 0],
          [0, -2, -1, 2, 1, 0],
          [0, 4, 0, -5, 0, 1],
          [0, 0, 0, 0, 0, 0]]
    g = [[1 / 4, 0, 0],
         [-1 / 6, -1 / 6, -1 / 6],
         [-1 / 6, 1 / 6, -1 / 6],
         [1 / 24, 1 / 12, 1 / 6],
         [1 / 24, -1 / 12, 1 / 6],
         [0, 0, 1]]
    return WinogradPlan(4, 3, np.array(at, float), np.array(bt, float),
                        np.array(g, float))


def cmd_conv_check(args) -> int:
    cfg = _load(args)
    plans = [make_plan(2, 3), make_plan(4, 3)]
    if args.erratum_demo:
        plans.append(_misprinted_f43())
    ok = True
    for plan in plans:
        result = oracle_check(plan, trials=args.trials, seed=cfg.seed,
                              tolerance=args.tolerance)
        print(result.describe())
        if not result.passed:
            ok = False
            wc = result.worst_case or {}
            print(f"  worst case: trial {wc.get('trial')}, "
                  f"input {wc.get('shape_x')}, filters {wc.get('shape_f')}, "
                  f"max err {wc.get('err'):.3e}")
            if "x" in wc:
                np.set_printoptions(precision=4, suppress=True)
                print(f"  input:\n{wc['x']}")
                print(f"  filters:\n{wc['f']}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# perf


def cmd_perf(args) -> int:
    cfg = _load(args)
    if not cfg.layers:
        raise ConfigError("perf needs a non-empty layer list")
    timing = cfg.timing
    if args.clock is not None:
        timing = dataclasses.replace(timing, f_clock_hz=args.clock)
    report = network_time(cfg.layers, timing)
    header = ["record", "name", "h", "w", "c", "n_filters", "m", "padding",
              "tiles", "work_items", "cycles", "time_s", "gops"]
    rows = []
    for spec, lt in zip(cfg.layers, report.layers):
        rows.append(["layer", lt.name, spec.h, spec.w, spec.c, spec.n_filters,
                     spec.m, spec.padding, lt.tiles, lt.work_items, lt.cycles,
                     lt.time_s, None])
    rows.append(["total", "network", None, None, None, None, None, None,
                 sum(l.tiles for l in report.layers),
                 sum(l.work_items for l in report.layers),
                 report.total_cycles, report.total_time_s, None])
    for conv in CONVENTIONS:
        if conv in report.throughput:
            rows.append(["throughput", conv, None, None, None, None, None, None,
                         None, None, None, None, report.throughput[conv]])
    path = _write_csv(cfg, "timing.csv", header, rows)
    print(f"{len(report.layers)} layers, {report.total_cycles} cycles, "
          f"{report.total_time_s:.4e} s at {timing.f_clock_hz:.3e} Hz "
          f"({timing.parallel_paths} parallel paths)")
    for conv, gops in report.throughput.items():
        print(f"throughput[{conv}]: {gops:g} GOP/s per path")
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# power


def cmd_power(args) -> int:
    cfg = _load(args)
    plan = _plan(cfg)
    total_time = layer_count = None
    if cfg.layers:
        rep = network_time(cfg.layers, cfg.timing)
        total_time, layer_count = rep.total_time_s, len(cfg.layers)
    try:
        report = power_report(cfg.device, cfg.timing, cfg.component_powers,
                              plan=plan, convention=cfg.convention,
                              layer_count=layer_count, total_time_s=total_time)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    header = ["record", "name", "watts", "gops", "gops_per_w", "speed_ratio",
              "power_ratio", "efficiency_ratio", "note"]
    rows = []
    for name, watts in report.component_watts.items():
        rows.append(["component", name, watts, None, None, None, None, None,
                     report.notes[name]])
    rows.append(["total", "full_system", report.total_w, report.throughput_gops,
                 report.efficiency_gops_per_w, None, None, None,
                 f"throughput convention: {report.convention}"])
    rows.append(["total", "photonic_core", report.core_w, report.throughput_gops,
                 report.core_efficiency_gops_per_w, None, None, None,
                 "laser + photodiodes + mrr_tuning only"])
    our_eff = report.efficiency_gops_per_w
    for name, base in sorted(cfg.baselines.items()):
        base_eff = base.speed_gops / base.power_w
        rows.append(["baseline", name, base.power_w, base.speed_gops, base_eff,
                     report.throughput_gops / base.speed_gops,
                     report.total_w / base.power_w,
                     our_eff / base_eff, base.source_note])
    path = _write_csv(cfg, "power.csv", header, rows)
    print(f"full system: {report.total_w:.4g} W, "
          f"{report.efficiency_gops_per_w:.4g} GOP/s/W "
          f"({report.throughput_gops:g} GOP/s, {report.convention} convention)")
    print(f"photonic core: {report.core_w:.4g} W, "
          f"{report.core_efficiency_gops_per_w:.4g} GOP/s/W")
    if not cfg.baselines:
        print("no baselines configured (supply baselines with source notes "
              "to compare)")
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# noise sweep


def _resolve_dataset(cfg: Config) -> nn.Dataset:
    ds = cfg.dataset
    try:
        if ds.source == "digits8x8":
            return nn.bundled_digits(test_count=ds.test_count,
                                     seed=ds.shuffle_seed,
                                     max_train=ds.max_train, max_test=ds.max_test)
        images, labels, k = nn.load_dataset(ds.source)
        return nn.split_dataset(images, labels, k, test_count=ds.test_count,
                                seed=ds.shuffle_seed, max_train=ds.max_train,
                                max_test=ds.max_test)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"dataset: {exc}") from exc


def cmd_noise_sweep(args) -> int:
    cfg = _load(args)
    plan = _plan(cfg)
    data = _resolve_dataset(cfg)
    settings = cfg.noise
    repeats = args.repeats if args.repeats is not None else settings.repeats

    def factory(seed: int) -> nn.SmallCNN:
        return nn.SmallCNN.init(seed=seed, image_shape=data.image_shape,
                                n_classes=data.n_classes, plan=plan)

    result = nn.noise_sweep(
        factory, data, train_fracs=settings.train_fracs,
        infer_fracs=settings.infer_fracs, repeats=repeats, seed=cfg.seed,
        train_kwargs={"epochs": settings.epochs, "lr": settings.lr,
                      "batch_size": settings.batch_size})

    header = ["train_noise", "infer_noise", "repeat", "accuracy"]
    rows = [[r["train_noise"], r["infer_noise"], r["repeat"], r["accuracy"]]
            for r in result.rows()]
    path = _write_csv(cfg, "noise_sweep.csv", header, rows)
    mean = result.mean_accuracy()
    for ti, tf in enumerate(result.train_fracs):
        line = ", ".join(f"{inf:g}: {mean[ti, fi]:.3f}"
                         for fi, inf in enumerate(result.infer_fracs))
        print(f"train_noise {tf:g} (clean {result.clean_accuracy[ti]:.3f}) -> {line}")
    print(f"wrote {path}")

    if args.assert_crossover:
        if 0.0 not in result.train_fracs:
            raise ConfigError("crossover check needs a 0.0 entry in train_fracs")
        nonzero = [f for f in result.train_fracs if f > 0]
        if not nonzero:
            raise ConfigError("crossover check needs a nonzero train_fracs entry")
        robust = min(nonzero)  # lowest noise-trained model vs. the clean one
        ti0 = result.train_fracs.index(0.0)
        tir = result.train_fracs.index(robust)
        clean_at_max = mean[ti0, -1]
        robust_at_max = mean[tir, -1]
        print(f"crossover at infer_noise {result.infer_fracs[-1]:g}: "
              f"noise-trained({robust:g}) {robust_at_max:.3f} vs "
              f"clean-trained {clean_at_max:.3f}")
        if robust_at_max <= clean_at_max:
            print("crossover NOT observed")
            return 1
        print("crossover observed")
    return 0


# ---------------------------------------------------------------------------
# resources


def cmd_resources(args) -> int:
    cfg = _load(args)
    plan = _plan(cfg)
    if not cfg.layers:
        raise ConfigError("resources needs a non-empty layer list")
    paths = args.paths if args.paths is not None else cfg.timing.parallel_paths
    report = feasibility(cfg.layers, plan, cfg.device, paths=paths)
    header = ["name", "c", "n_filters", "wavelengths_required",
              "wavelength_budget", "channels_ok", "batching_factor",
              "connections_required", "connections_limit", "connections_ok",
              "dynamic_range_required_db", "dynamic_range_db",
              "dynamic_range_ok", "weight_count", "feasible"]
    rows = [[l.name, l.c, l.n_filters, l.channels.channels_required,
             l.channels.budget, l.channels.feasible, l.channels.batching_factor,
             l.connections_required, CONNECTION_LIMIT, l.connections_ok,
             l.dynamic_range_required_db, cfg.device.dynamic_range_db,
             l.dynamic_range_ok, l.weight_count, l.feasible]
            for l in report.layers]
    path = _write_csv(cfg, "resources.csv", header, rows)
    for note in report.notes:
        print(f"note: {note}")
    print(f"rings ({paths} paths): {report.rings.ewmm} EWMM weighting rings + "
          f"{report.rings.input_transform} input-transform rings (lower bound)")
    print(f"analog weight storage: {report.weight_count} weights -> "
          f"{report.memristor_area_cm2_at_50um:.4g} cm^2 at 50 um cell edge")
    bad = [l.name for l in report.layers if not l.feasible]
    if bad:
        print(f"infeasible as-is: {', '.join(bad)} "
              f"(see batching_factor column for channel batching)")
    else:
        print("all layers feasible")
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def _add_common(p: argparse.ArgumentParser, top_level: bool) -> None:
    # present on the main parser and every subparser so the flags work in
    # either position; SUPPRESS keeps a subparser from clobbering a value
    # that was given before the subcommand
    default = None if top_level else argparse.SUPPRESS
    p.add_argument("--config", default=default,
                   help="JSON config file (defaults used if omitted)")
    p.add_argument("--seed", type=int, default=default,
                   help="override the config seed")
    p.add_argument("--out", default=default,
                   help="override the output directory")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="winophot",
        description="Analytical models of a Winograd-filtering photonic CNN "
                    "accelerator: convolution checks, timing, power, noise "
                    "sweeps, resource budgets.")
    _add_common(parser, top_level=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("conv-check",
                       help="randomized Winograd-vs-direct equivalence check")
    _add_common(p, top_level=False)
    p.add_argument("--trials", type=_positive_int, default=1000)
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--erratum-demo", action="store_true",
                   help="also run a known-bad F(4,3) transcription to "
                        "demonstrate failure reporting (exits 1 by design)")
    p.set_defaults(func=cmd_conv_check)

    p = sub.add_parser("perf", help="per-layer and network timing")
    _add_common(p, top_level=False)
    p.add_argument("--clock", type=float, help="override clock frequency in Hz")
    p.set_defaults(func=cmd_perf)

    p = sub.add_parser("power", help="component power totals and efficiency")
    _add_common(p, top_level=False)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("noise-sweep",
                       help="train under noise grids and sweep inference noise")
    _add_common(p, top_level=False)
    p.add_argument("--repeats", type=_positive_int,
                   help="noise redraws per grid point")
    p.add_argument("--assert-crossover", action="store_true",
                   help="exit 1 unless the lowest noise-trained model beats the "
                        "clean-trained model at the highest inference noise")
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("resources", help="wavelength/ring/storage feasibility")
    _add_common(p, top_level=False)
    p.add_argument("--paths", type=_positive_int,
                   help="parallel paths (defaults to timing.parallel_paths)")
    p.set_defaults(func=cmd_resources)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"invalid value: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
