"""Subcommand front end: compare, simulate, noise, mix, split, eval-seg, report.

Every run writes its primary output plus a manifest (command, config echo,
input digests, seed, version) so results are reproducible from the manifest
alone. Exit codes are stable API: 0 ok, 2 config/validation, 3 I/O,
4 degenerate computation. Errors print one machine-parsable JSON line to
stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, dataset, io, metric, simulate
from .errors import ConfigError, DegenerateDataError, FormatError, ParseError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DEGENERATE = 4


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path, command: str, config: dict, inputs: list, seed=None) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "seed": seed,
        "version": __version__,
    }
    io.dump_json(manifest, str(out_path) + ".manifest.json")


def _load_run_config(args) -> io.RunConfig:
    """Config file first, then flag overrides."""
    raw = {}
    if getattr(args, "config", None):
        cfg_path = Path(args.config)
        try:
            with open(cfg_path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{cfg_path}: invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{cfg_path}: config root must be a JSON object")
    overrides = {
        "voxel_size_m": args.voxel_size,
        "lambda1": args.lambda1,
        "lambda2": args.lambda2,
        "lambda3": args.lambda3,
        "alpha": args.alpha,
        "epsilon": args.epsilon,
        "c2c_mode": args.c2c_mode,
        "eq3_weight_mode": args.eq3_weight_mode,
        "lambda_validation": args.lambda_validation,
        "seed": args.seed,
    }
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    return io.config_from_dict(raw)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_compare(args) -> int:
    cfg = _load_run_config(args)
    params = metric.MetricParams.from_run_config(cfg)
    real = io.read_cloud(args.real)
    synth = io.read_cloud(args.synthetic)

    if args.offset:
        magnitudes = [float(tok) for tok in args.offset.split(",") if tok.strip() != ""]
        vectors = metric.scalar_offsets_to_vectors(magnitudes)
        reports = metric.offset_sensitivity(real, synth, vectors, params)
        payload = {
            "report_type": "gap_series",
            "reports": [r.to_json_dict() for r in reports],
        }
        io.dump_json(payload, args.out)
    else:
        report = metric.dogss_pcl(real, synth, params)
        io.write_report(report, args.out)

    _write_manifest(
        args.out, "compare", cfg.to_json_dict(), [args.real, args.synthetic], seed=cfg.seed
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    mesh = io.read_mesh(args.mesh)
    with open(args.trajectory, "r", encoding="utf-8") as fh:
        try:
            samples = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.trajectory}: invalid JSON: {exc}") from exc
    try:
        trajectory = simulate.Trajectory.from_samples(samples)
    except ValueError as exc:
        raise ConfigError(f"{args.trajectory}: {exc}") from exc

    scan_cfg = simulate.ScanConfig()
    if args.scan_config:
        with open(args.scan_config, "r", encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.scan_config}: invalid JSON: {exc}") from exc
        try:
            scan_cfg = simulate.ScanConfig.from_json_dict(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{args.scan_config}: {exc}") from exc

    if args.sigma is not None and args.sigma > 0 and args.seed is None:
        raise ConfigError("--seed is required when applying noise (--sigma > 0)")
    seed = 0 if args.seed is None else args.seed
    scan = simulate.simulate_scan(mesh, trajectory, scan_cfg, seed=seed)
    if args.sigma is not None and args.sigma > 0:
        scan = simulate.apply_range_noise(scan, simulate.NoiseModel(args.sigma, seed))

    io.write_cloud(scan.cloud, args.out, fmt=args.format)
    origins_path = args.origins or (str(args.out) + ".origins")
    io.write_ray_origins(scan.ray_origins, origins_path)
    _write_manifest(
        args.out,
        "simulate",
        {"scan": scan_cfg.to_json_dict(), "sigma": args.sigma, "format": args.format},
        [args.mesh, args.trajectory] + ([args.scan_config] if args.scan_config else []),
        seed=seed,
    )
    return EXIT_OK


def cmd_noise(args) -> int:
    cloud = io.read_cloud(args.cloud)
    origins_path = args.origins or (str(args.cloud) + ".origins")
    origins = io.read_ray_origins(origins_path)
    if origins.shape[0] != len(cloud):
        raise ConfigError(
            f"{origins_path}: {origins.shape[0]} origins for {len(cloud)} points"
        )
    scan = simulate.SimulatedScan(cloud, origins)
    noisy = simulate.apply_range_noise(scan, simulate.NoiseModel(args.sigma, args.seed))
    io.write_cloud(noisy.cloud, args.out, fmt=args.format)
    _write_manifest(
        args.out, "noise", {"sigma": args.sigma, "format": args.format},
        [args.cloud, origins_path], seed=args.seed,
    )
    return EXIT_OK


def cmd_mix(args) -> int:
    real = io.read_cloud(args.real)
    synth = io.read_cloud(args.synthetic)
    try:
        spec = dataset.RatioMix(args.fraction, args.count, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    result = dataset.mix(real, synth, spec)
    io.write_cloud(result.cloud, args.out, fmt=args.format)
    with open(str(args.out) + ".provenance.txt", "w", encoding="utf-8", newline="\n") as fh:
        for is_real in result.provenance:
            fh.write("real\n" if is_real else "synthetic\n")
    n_real, n_synth = result.counts()
    _write_manifest(
        args.out,
        "mix",
        {
            "real_fraction": args.fraction,
            "target_count": args.count,
            "real_points": n_real,
            "synthetic_points": n_synth,
            "real_with_replacement": result.real_with_replacement,
            "synthetic_with_replacement": result.synthetic_with_replacement,
            "format": args.format,
        },
        [args.real, args.synthetic],
        seed=args.seed,
    )
    return EXIT_OK


def cmd_split(args) -> int:
    cloud = io.read_cloud(args.cloud)
    with open(args.spec, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.spec}: invalid JSON: {exc}") from exc
    spec = dataset.SplitSpec.from_json_dict(raw)
    parts = dataset.split(cloud, spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts = {}
    for name, part in parts.items():
        io.write_cloud(part, out_dir / f"{name}.xyzl", fmt=io.FORMAT_XYZL)
        counts[name] = len(part)
    _write_manifest(
        out_dir / "split", "split", {"regions": counts}, [args.cloud, args.spec]
    )
    return EXIT_OK


def cmd_eval_seg(args) -> int:
    truth = io.read_cloud(args.truth)
    pred = io.read_label_file(args.pred)
    if len(pred) != len(truth):
        raise ConfigError(
            f"{args.pred}: {len(pred)} labels for {len(truth)} ground-truth points"
        )
    report = dataset.evaluate_segmentation(truth, pred, synthetic_ratio=args.ratio)
    io.write_report(report, args.out)
    _write_manifest(args.out, "eval-seg", {"ratio": args.ratio}, [args.truth, args.pred])
    return EXIT_OK


def _flatten_gap_reports(paths) -> list[tuple[str, dict]]:
    rows = []
    for path in paths:
        doc = io.read_report(path)
        kind = doc.get("report_type")
        if kind == "gap":
            rows.append((str(path), doc))
        elif kind == "gap_series":
            for i, sub in enumerate(doc.get("reports", [])):
                rows.append((f"{path}[{i}]", sub))
        else:
            raise ConfigError(f"{path}: expected a gap report, found {kind!r}")
    return rows


_GAP_COLUMNS = ("m_dogss_pcl", "d", "d_mm3c2", "d_c2c", "miou", "f_miou")


def cmd_report(args) -> int:
    docs = [(str(p), io.read_report(p)) for p in args.reports]
    kinds = {d.get("report_type", "gap") for _, d in docs}
    kinds = {"gap" if k == "gap_series" else k for k in kinds}
    if len(kinds) > 1:
        offenders = ", ".join(f"{p} ({d.get('report_type')})" for p, d in docs)
        raise ConfigError(f"mixed report schemas: {offenders}")
    kind = kinds.pop()

    plot_series: dict = {}
    if kind == "gap":
        rows = _flatten_gap_reports(args.reports)
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("report", "offset_m") + _GAP_COLUMNS)
            for name, doc in rows:
                offset = doc.get("offset", [0.0, 0.0, 0.0])
                magnitude = float(np.linalg.norm(offset))
                writer.writerow([name, magnitude] + [doc[c] for c in _GAP_COLUMNS])
        plot_series = {
            col: [
                [float(np.linalg.norm(doc.get("offset", [0, 0, 0]))), doc[col]]
                for _, doc in rows
            ]
            for col in _GAP_COLUMNS
        }
    else:
        reports = [dataset.EvalReport.from_json_dict(d) for _, d in docs]
        ratios = [r.synthetic_ratio for r in reports]
        have_ratios = all(r is not None for r in ratios)
        order = np.argsort(ratios) if have_ratios else np.arange(len(reports))
        reports = [reports[i] for i in order]
        ratios = [ratios[i] for i in order]
        names = [docs[i][0] for i in order]

        with_corr = have_ratios and len(set(ratios)) >= 2
        header = ["class"] + [
            f"iou@{r}" if have_ratios else name for r, name in zip(ratios, names)
        ] + ["avg"] + (["corr"] if with_corr else [])
        from .core import NON_NOISE_CLASSES

        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for cls in NON_NOISE_CLASSES:
                ious = [r.per_class[cls].iou for r in reports]
                row = [cls.canonical_name] + ious + [float(np.mean(ious))]
                if with_corr:
                    corr = dataset.ratio_correlation(list(zip(ratios, ious)))
                    row.append("-" if corr is None else corr)
                writer.writerow(row)
                plot_series[cls.canonical_name] = [
                    [ratios[i] if have_ratios else i, ious[i]] for i in range(len(reports))
                ]
            mious = [r.miou for r in reports]
            row = ["mIoU"] + mious + [float(np.mean(mious))]
            if with_corr:
                corr = dataset.ratio_correlation(list(zip(ratios, mious)))
                row.append("-" if corr is None else corr)
            writer.writerow(row)
            plot_series["mIoU"] = [
                [ratios[i] if have_ratios else i, mious[i]] for i in range(len(reports))
            ]

    if args.plot_data:
        io.dump_json({"series": plot_series}, args.plot_data)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_cloud_format(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--format",
        default="auto",
        choices=("auto",) + io.CLOUD_FORMATS,
        help="output cloud format (auto: by file extension)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcgap",
        description="Domain-gap scoring, LiDAR scan simulation, and dataset tools "
        "for semantic point clouds.",
    )
    parser.add_argument("--version", action="version", version=f"pcgap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compare", help="score a synthetic cloud against its real twin")
    p.add_argument("--real", required=True)
    p.add_argument("--synthetic", "--synth", dest="synthetic", required=True)
    p.add_argument("--config", help="RunConfig JSON; flags override file values")
    p.add_argument("--offset", help="comma-separated offset magnitudes in meters, "
                   "applied along the unit diagonal (e.g. '0,0.1,0.3')")
    p.add_argument("--out", required=True)
    p.add_argument("--voxel-size", type=float, dest="voxel_size")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambda3", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--c2c-mode", choices=metric.C2C_MODES, dest="c2c_mode")
    p.add_argument("--eq3-weight-mode", choices=metric.EQ3_WEIGHT_MODES, dest="eq3_weight_mode")
    p.add_argument("--lambda-validation", choices=("strict", "relaxed"), dest="lambda_validation")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="simulate a labeled scan over a classed mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--trajectory", required=True, help="JSON array of {t, x, y, z, yaw}")
    p.add_argument("--scan-config", dest="scan_config")
    p.add_argument("--sigma", type=float, help="apply range noise inline (meters)")
    p.add_argument("--seed", type=int, help="mandatory when --sigma > 0")
    p.add_argument("--origins", help="ray-origin sidecar path (default: OUT.origins)")
    p.add_argument("--out", required=True)
    _add_cloud_format(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("noise", help="apply seeded range noise to a simulated cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--origins", help="ray-origin sidecar (default: CLOUD.origins)")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_cloud_format(p)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("mix", help="mix real and synthetic clouds at a fixed ratio")
    p.add_argument("--real", required=True)
    p.add_argument("--synthetic", "--synth", dest="synthetic", required=True)
    p.add_argument("--fraction", type=float, required=True, help="real fraction in [0, 1]")
    p.add_argument("--count", type=int, required=True, help="total output points")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_cloud_format(p)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("split", help="cut a cloud into named xy regions")
    p.add_argument("--cloud", required=True)
    p.add_argument("--spec", required=True, help="SplitSpec JSON")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("eval-seg", help="score per-point predictions against ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True, help="one label per line, cloud order")
    p.add_argument("--ratio", type=float, help="synthetic ratio tag for trend analysis")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_seg)

    p = sub.add_parser("report", help="summarize report JSONs into CSV")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--plot-data", dest="plot_data", help="write (x, y) series JSON")
    p.set_defaults(func=cmd_report)

    return parser


def _fail(code: int, message: str) -> int:
    sys.stderr.write(json.dumps({"error": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except DegenerateDataError as exc:
        return _fail(EXIT_DEGENERATE, str(exc))
    except (ParseError, FormatError, FileNotFoundError, OSError) as exc:
        return _fail(EXIT_IO, str(exc))


if __name__ == "__main__":
    sys.exit(main())
