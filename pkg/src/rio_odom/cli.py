"""Command line front end: ``rio-odom run|ablate|eval|synth``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .config import RunConfig, load_config
from .errors import RioError
from .evaluation import format_table, kitti_errors, write_metrics_csv
from .ingestion.datasets import write_imu_csv, write_scan
from .ingestion.synthetic import generate_synthetic
from .runner import ablation_suite, run
from .trajectory import read_csv, write_csv

log = logging.getLogger("rio_odom")

EXIT_IO = 5


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    from dataclasses import replace

    flags = {}
    if getattr(args, "mode", None):
        flags["mode"] = args.mode
    if getattr(args, "no_bias", False):
        flags["gyro_bias_on"] = False
    if getattr(args, "no_hpf", False):
        flags["hpf_on"] = False
    if flags:
        cfg = cfg.with_ablation(**flags)
    if getattr(args, "out", None):
        cfg = replace(cfg, outputs=replace(cfg.outputs, directory=Path(args.out)))
    if getattr(args, "no_plot", False):
        cfg = replace(cfg, outputs=replace(cfg.outputs, plot=False))
    if getattr(args, "no_timing", False):
        cfg = replace(cfg, timing=False)
    if getattr(args, "gyro_bias", None) is not None:
        cfg = replace(cfg, gyro_bias=args.gyro_bias)
    return cfg


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    result = run(cfg)
    if result.errors is not None:
        print(format_table([(cfg.ablation.mode, result.errors)]))
    if result.timings is not None and len(result.timings):
        means = result.timings.means()
        print("mean per-frame cost [ms]: " + ", ".join(f"{k[:-3]} {v:.2f}" for k, v in means.items()))
    if cfg.outputs.directory is not None:
        print(f"outputs written to {cfg.outputs.directory}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    rows = ablation_suite(cfg)
    print(format_table([(r.name, r.errors) for r in rows]))
    return 0 if all(r.errors is not None for r in rows) else 1


def cmd_eval(args) -> int:
    gt, est = read_csv(args.gt), read_csv(args.est)
    errors = kitti_errors(gt, est, step=args.step)
    rows = [(Path(args.est).stem, errors)]
    print(format_table(rows))
    if args.out:
        write_metrics_csv(args.out, rows)
    return 0


def cmd_synth(args) -> int:
    """Write a synthetic sequence as an on-disk dataset plus a run config."""
    with open(args.spec) as fh:
        data = yaml.safe_load(fh) or {}
    scene_data = data.get("scene", data)
    from .config import config_from_dict

    scene = config_from_dict({"scene": scene_data}).scene
    seq = generate_synthetic(scene)
    out = Path(args.out)
    radar = out / "radar"
    for img in seq.scans:
        write_scan(radar, img, layout="synthetic")
    write_imu_csv(out / "imu.csv", seq.imu)
    write_csv(seq.gt, out / "gt.csv")
    run_cfg = {
        "dataset": {
            "layout": "synthetic",
            "radar_dir": "radar",
            "imu_file": "imu.csv",
            "gt_file": "gt.csv",
            "meters_per_pixel": scene.meters_per_pixel,
            "image_size": scene.image_size,
            "gyro_bias": scene.gyro_bias,
        },
        "outputs": {"directory": "out"},
    }
    (out / "run.yaml").write_text(yaml.safe_dump(run_cfg, sort_keys=False))
    print(f"{len(seq.scans)} scans, {len(seq.imu)} IMU samples -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rio-odom", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp):
        sp.add_argument("config", help="run configuration (YAML)")
        sp.add_argument("--out", help="output directory (overrides outputs.directory)")
        sp.add_argument("--gyro-bias", type=float, help="gyro bias used for compensation [rad/s]")
        sp.add_argument("--no-plot", action="store_true")

    r = sub.add_parser("run", help="estimate one trajectory")
    run_flags(r)
    r.add_argument("--mode", choices=("fuse", "radar_only", "radar_kf", "imu_only"))
    r.add_argument("--no-bias", action="store_true", help="disable gyro bias compensation")
    r.add_argument("--no-hpf", action="store_true", help="disable the high-pass filter")
    r.add_argument("--no-timing", action="store_true")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("ablate", help="run the seven-row ablation matrix")
    run_flags(a)
    a.set_defaults(func=cmd_ablate)

    e = sub.add_parser("eval", help="score a trajectory CSV against ground truth")
    e.add_argument("--gt", required=True)
    e.add_argument("--est", required=True)
    e.add_argument("--step", type=int, default=1, help="segment start stride (poses)")
    e.add_argument("--out", help="metrics CSV")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="generate a synthetic dataset on disk")
    s.add_argument("spec", help="YAML with SyntheticSceneSpec fields (optionally under 'scene:')")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RioError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
