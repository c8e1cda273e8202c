"""Command-line entry point: ``sinoplace {build,query,eval,sens,synth}``.

Every option can also come from a JSON or TOML config file (``--config``)
using the snake_case field names of :class:`RunConfig`. Command-line flags
override the file, which overrides the defaults. Every JSON output embeds the
resolved config. Failures print a JSON error object and exit nonzero.
"""

import argparse
import dataclasses
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .descriptor import (StoreWriter, coarse_descriptor, make_descriptor, read_store)
from .errors import NoCandidateError, ParameterError, SinoplaceError
from .evaluation import (Prediction, build_ground_truth, evaluate, export_tp_trajectory,
                         sensitivity_sweep, write_pr_csv, write_report_json)
from .ingest import ScanLayout, associate, list_scan_files, load_poses, load_scan
from .matcher import RetrievalConfig, RetrievalIndex
from .radon import offset_count, radon_transform
from .synth import (NoiseSpec, ScanGeometry, figure_eight, make_trajectory_dataset, random_scene,
                    square_loop)
from .warp import GridSpec, backward_warp

log = logging.getLogger("sinoplace")

FINE_STORE = "fine.rpdb"
COARSE_STORE = "coarse.rpdb"
MANIFEST = "manifest.json"


@dataclass
class RunConfig:
    side_pixels: int = 401
    meters_per_pixel: float = 1.0
    max_range: Optional[float] = None
    n_theta: int = 180
    coarse_factor: int = 4
    coarse_top_k: int = 10
    neighbor_window: int = 5
    exclusion_window: int = 90
    stride: int = 1
    top_k: int = 10
    normalized: bool = False
    boundary_m: float = 20.0
    thresholds: int = 200
    mode: str = "intra"
    layout: str = "raw"
    column_offset: int = 0
    range_resolution: float = 0.0438
    seed: int = 0
    workers: int = 1
    on_error: str = "abort"
    # paths
    scans: Optional[str] = None
    store: Optional[str] = None
    query_store: Optional[str] = None
    scan: Optional[str] = None
    references: List[str] = field(default_factory=list)
    poses: Optional[str] = None
    query_poses: Optional[str] = None
    out: Optional[str] = None
    # sensitivity
    rotations: List[float] = field(default_factory=lambda: [float(a) for a in range(0, 360, 10)])
    translations: List[float] = field(default_factory=lambda: [float(t) for t in range(-10, 11)])
    # synthesis
    trajectory: str = "square"
    frames: int = 100
    loop_side: float = 100.0
    scatterers: int = 150
    azimuths: int = 400
    range_bins: int = 1000
    synth_resolution: float = 0.2
    speckle_sigma: float = 0.0
    ring_bins: List[int] = field(default_factory=list)
    ring_amplitude: float = 0.0
    saturation_prob: float = 0.0
    clutter_floor: float = 0.0

    def grid(self) -> GridSpec:
        return GridSpec(self.side_pixels, self.meters_per_pixel, self.max_range)

    def scan_layout(self) -> ScanLayout:
        return ScanLayout(self.layout, self.column_offset, self.range_resolution)

    def retrieval(self, exclusion: Optional[int] = None) -> RetrievalConfig:
        return RetrievalConfig(self.coarse_factor, self.coarse_top_k, self.neighbor_window,
                               self.exclusion_window if exclusion is None else exclusion,
                               self.stride, self.top_k, self.normalized)

    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.speckle_sigma, tuple(self.ring_bins), self.ring_amplitude,
                         self.saturation_prob, self.clutter_floor)

    def validate(self, command: str) -> None:
        """Check ranges and inputs before any work starts."""
        self.grid()
        self.retrieval()
        self.noise()
        if self.n_theta < 2:
            raise ParameterError("n_theta must be >= 2")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        if self.on_error not in ("abort", "continue"):
            raise ParameterError("on_error must be 'abort' or 'continue'")
        if self.mode not in ("intra", "multi"):
            raise ParameterError("mode must be 'intra' or 'multi'")
        if self.thresholds < 1:
            raise ParameterError("thresholds must be >= 1")
        if self.boundary_m < 0:
            raise ParameterError("boundary_m must be >= 0")
        self.scan_layout()
        needed = {
            "build": ["scans", "out"],
            "query": ["store", "scan"],
            "eval": ["store", "poses", "out"] + (["query_store", "query_poses"] if self.mode == "multi" else []),
            "sens": ["scan", "references", "out"],
            "synth": ["out"],
        }[command]
        for name in needed:
            if not getattr(self, name):
                raise ParameterError(f"{command} needs --{name.replace('_', '-')}")
        for name in ("scans", "store", "query_store", "scan", "poses", "query_poses"):
            value = getattr(self, name)
            if value and name in needed and not Path(value).exists():
                raise ParameterError(f"--{name.replace('_', '-')} path does not exist: {value}")
        for ref in self.references if command == "sens" else ():
            if not Path(ref).exists():
                raise ParameterError(f"reference scan does not exist: {ref}")
        if command == "synth":
            if self.frames < 1:
                raise ParameterError("frames must be >= 1")
            if self.trajectory not in ("square", "eight"):
                raise ParameterError("trajectory must be 'square' or 'eight'")


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ParameterError(f"config file does not exist: {path}")
    if p.suffix.lower() == ".toml":
        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    else:
        data = json.loads(p.read_text(encoding="utf-8"))
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
    return data


def resolve_config(args: argparse.Namespace) -> RunConfig:
    merged = {}
    if getattr(args, "config", None):
        merged.update(_load_config_file(args.config))
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            merged[f.name] = value
    types = {f.name: f.type for f in fields(RunConfig)}
    cfg = RunConfig(**merged)
    # coerce config-file numbers to the declared scalar types
    for name, value in list(asdict(cfg).items()):
        t = types[name]
        if t is int and not isinstance(value, bool):
            setattr(cfg, name, int(value))
        elif t is float:
            setattr(cfg, name, float(value))
    return cfg


def _add_flags(p: argparse.ArgumentParser) -> None:
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type is bool:
            p.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
        elif f.name in ("references",):
            p.add_argument(flag, nargs="+", default=None)
        elif f.name in ("rotations", "translations"):
            p.add_argument(flag, nargs="+", type=float, default=None)
        elif f.name == "ring_bins":
            p.add_argument(flag, nargs="*", type=int, default=None)
        else:
            t = {int: int, float: float}.get(f.type, str)
            p.add_argument(flag, type=t, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sinoplace", description="Radar place recognition with Radon descriptors.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "build": "describe a directory of scans into fine and coarse stores",
        "query": "retrieve the best match for one scan",
        "eval": "score every frame against ground-truth poses",
        "sens": "distance curves for rotated and shifted copies of a scan",
        "synth": "render a synthetic trajectory dataset",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", default=None, help="JSON or TOML file of config values")
        p.add_argument("--verbose", action="store_true")
        _add_flags(p)
    return parser


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _describe_file(job):
    """Load one scan and return (fine rows, coarse rows, timestamp, stage seconds)."""
    path, layout, grid, n_theta, factor = job
    t0 = time.perf_counter()
    scan = load_scan(path, layout)
    t1 = time.perf_counter()
    img = backward_warp(scan, grid)
    t2 = time.perf_counter()
    sino = radon_transform(img, n_theta)
    t3 = time.perf_counter()
    fine = make_descriptor(sino)
    coarse = coarse_descriptor(sino, factor)
    t4 = time.perf_counter()
    return fine.rows, coarse.rows, scan.timestamp, (t1 - t0, t2 - t1, t3 - t2, t4 - t3)


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        for job in jobs:
            yield _safe(fn, job)
        return
    with ProcessPoolExecutor(max_workers=workers) as ex:
        yield from ex.map(_safe, [fn] * len(jobs), jobs)


def _safe(fn, job):
    try:
        return fn(job), None
    except (SinoplaceError, OSError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def cmd_build(cfg: RunConfig) -> dict:
    grid = cfg.grid()
    n_l = offset_count(grid.side_pixels)
    coarse_n_l = n_l if cfg.coarse_factor == 1 else math.ceil(n_l / cfg.coarse_factor)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = list_scan_files(cfg.scans, cfg.scan_layout())
    jobs = [(f, cfg.scan_layout(), grid, cfg.n_theta, cfg.coarse_factor) for f in files]
    stage = np.zeros(5)
    frames, errors = [], []
    with StoreWriter(out / FINE_STORE, cfg.n_theta, n_l, "fine") as wf, \
            StoreWriter(out / COARSE_STORE, cfg.n_theta, coarse_n_l, "coarse") as wc:
        for path, (result, err) in zip(files, _map(_describe_file, jobs, cfg.workers)):
            if err is not None:
                errors.append({"file": path.name, "error": err})
                if cfg.on_error == "abort":
                    raise SinoplaceError(f"{path.name}: {err}")
                log.warning("skipping %s: %s", path.name, err)
                continue
            fine, coarse, stamp, secs = result
            t0 = time.perf_counter()
            wf.append(fine)
            wc.append(coarse)
            stage[:4] += secs
            stage[4] += time.perf_counter() - t0
            frames.append({"index": len(frames), "file": path.name, "timestamp": int(stamp)})
    n = max(len(frames), 1)
    names = ["load", "polar_to_cartesian", "radon", "descriptor", "store"]
    manifest = {
        "command": "build",
        "config": asdict(cfg),
        "frame_count": len(frames),
        "fine_n_l": n_l,
        "coarse_n_l": coarse_n_l,
        "frames": frames,
        "errors": errors,
        "timing": {
            "total_s": {k: float(v) for k, v in zip(names, stage)},
            "mean_ms_per_frame": {k: float(v) * 1e3 / n for k, v in zip(names, stage)},
        },
    }
    _write_json(out / MANIFEST, manifest)
    return {k: manifest[k] for k in ("command", "frame_count", "fine_n_l", "coarse_n_l", "errors")}


def _open_index(store_dir, cfg: RunConfig, exclusion: Optional[int] = None) -> RetrievalIndex:
    d = Path(store_dir)
    fine = read_store(d / FINE_STORE, mmap=True)
    coarse = read_store(d / COARSE_STORE, mmap=True) if cfg.coarse_factor > 1 else None
    return RetrievalIndex(fine, coarse, cfg.retrieval(exclusion))


def _describe_scan(path, cfg: RunConfig):
    scan = load_scan(path, cfg.scan_layout())
    sino = radon_transform(backward_warp(scan, cfg.grid()), cfg.n_theta)
    coarse = coarse_descriptor(sino, cfg.coarse_factor) if cfg.coarse_factor > 1 else None
    return make_descriptor(sino), coarse


def cmd_query(cfg: RunConfig) -> dict:
    index = _open_index(cfg.store, cfg, exclusion=0)
    fine, coarse = _describe_scan(cfg.scan, cfg)
    result = index.query(fine, coarse)
    payload = {"command": "query", "config": asdict(cfg), "result": result.to_dict()}
    if cfg.out:
        Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
        _write_json(Path(cfg.out), payload)
    return payload


def _frame_poses(store_dir, poses_path) -> list:
    manifest = json.loads((Path(store_dir) / MANIFEST).read_text(encoding="utf-8"))
    stamps = [f["timestamp"] for f in manifest["frames"]]
    return associate(stamps, load_poses(poses_path))


def _query_store(index: RetrievalIndex, queries, intra: bool) -> List[Prediction]:
    preds = []
    for i in range(len(queries)):
        q = queries.descriptor(i)
        try:
            m = index.query(q, None, i if intra else None)
        except NoCandidateError:
            continue
        preds.append(Prediction(i, m.best_index, m.best_distance.d))
    return preds


def cmd_eval(cfg: RunConfig) -> dict:
    from .plotting import plot_pr

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    db_poses = _frame_poses(cfg.store, cfg.poses)
    index = _open_index(cfg.store, cfg)
    if cfg.mode == "intra":
        q_poses = db_poses
        gt = build_ground_truth(db_poses, cfg.boundary_m, "intra", cfg.exclusion_window)
        preds = _query_store(index, index.fine, intra=True)
    else:
        q_poses = _frame_poses(cfg.query_store, cfg.query_poses)
        gt = build_ground_truth(q_poses, cfg.boundary_m, "multi", cfg.exclusion_window, db_poses=db_poses)
        queries = read_store(Path(cfg.query_store) / FINE_STORE, mmap=True)
        preds = _query_store(index, queries, intra=False)
    report = evaluate(preds, gt, cfg.thresholds)
    write_report_json(report, out / "report.json", asdict(cfg))
    write_pr_csv(report, out / "pr.csv")
    export_tp_trajectory(report, q_poses, out / "tp.csv", out / "tp.svg")
    plot_pr(report, out / "pr.png")
    keys = ("auc", "max_f1", "recall_at_1", "tp_detection_rate", "tp_count", "fp_count", "fn_count", "gt_queries")
    return {"command": "eval", "queries": len(preds), **{k: getattr(report, k) for k in keys}}


def cmd_sens(cfg: RunConfig) -> dict:
    from .plotting import plot_sensitivity

    layout = cfg.scan_layout()
    scan = load_scan(cfg.scan, layout)
    refs = [load_scan(r, layout) for r in cfg.references]
    result = sensitivity_sweep(scan, refs, cfg.rotations, cfg.translations, grid=None, n_theta=cfg.n_theta)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    result.write_csv(out / "sensitivity.csv")
    plot_sensitivity(result, out / "sensitivity.png")
    payload = {"command": "sens", "config": asdict(cfg), "threshold": result.threshold,
               "rows": [{"kind": k, "value": v, "d": d, "normalized": n} for k, v, d, n in result.rows]}
    _write_json(out / "sensitivity.json", payload)
    worst = float(np.nanmax(result.normalized())) if result.rows else None
    return {"command": "sens", "threshold": result.threshold, "max_normalized": worst}


def cmd_synth(cfg: RunConfig) -> dict:
    geometry = ScanGeometry(cfg.azimuths, cfg.range_bins, cfg.synth_resolution)
    if cfg.trajectory == "square":
        wp = square_loop(cfg.loop_side, cfg.frames - 1, overlap=1)
    else:
        wp = figure_eight(cfg.frames, cfg.loop_side)
    margin = geometry.max_range
    lo = wp[:, :2].min(axis=0) - margin
    hi = wp[:, :2].max(axis=0) + margin
    scene = random_scene(cfg.seed, (lo[0], hi[0], lo[1], hi[1]), cfg.scatterers, noise=cfg.noise())
    ds = make_trajectory_dataset(scene, wp, geometry, out_dir=cfg.out, boundary_m=cfg.boundary_m,
                                 exclusion_window=cfg.exclusion_window)
    return {"command": "synth", "frames": len(ds.scans), "loop_pairs": len(ds.loop_pairs), "out": cfg.out}


COMMANDS = {"build": cmd_build, "query": cmd_query, "eval": cmd_eval, "sens": cmd_sens, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        cfg.validate(args.command)
    except (SinoplaceError, TypeError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "stage": "config"}))
        return 2
    try:
        payload = COMMANDS[args.command](cfg)
    except (SinoplaceError, OSError, ValueError, LookupError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "stage": args.command}))
        return 1
    print(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))
    return 0


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if dataclasses.is_dataclass(o):
        return asdict(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


if __name__ == "__main__":
    sys.exit(main())
