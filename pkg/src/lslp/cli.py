"""``lslp`` command line: ingest, train, synthesize, upsample, evaluate, render."""
from __future__ import annotations

import argparse
import logging
import shlex
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .data import (SHAPE_KINDS, MeshError, assign_split, build_ladder, load_dataset, read_obj,
                   save_dataset, synthetic_dataset)
from .metrics import JSD_DEFAULT_GRID, MetricReport, coverage, jsd, mmd, pairwise_distances
from .pipeline import PrerequisiteError, read_log, run_stages
from .pointcloud import ResolutionLadder, read_cloud, write_cloud
from .pyramid import load_pyramid, shape_seeds, synthesize, upsample_shape
from .utils import single_threaded, write_run_manifest

log = logging.getLogger("lslp")

CLOUD_SUFFIXES = (".pcld", ".xyz")


class CommandError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# helpers

def _ladder(args, cfg) -> ResolutionLadder:
    d = dict(cfg["ladder"])
    if getattr(args, "n0", None):
        d["n0"] = args.n0
    if getattr(args, "levels", None):
        d["K"] = args.levels
        d["latent_dims"] = [d.get("latent_dims", [128])[0]] * (args.levels + 1)
    return ResolutionLadder.from_dict(d)


def _cloud_files(directory: Path) -> list:
    return sorted(p for p in directory.iterdir() if p.suffix in CLOUD_SUFFIXES)


def _load_set(path: Path, level: int | None, split: str | None) -> list:
    if (path / "dataset.json").exists():
        ds = load_dataset(path)
        k = ds.ladder.K if level is None else level
        return list(ds.level(k, split))
    if path.is_dir():
        files = _cloud_files(path)
        if not files:
            raise CommandError(f"{path} contains no cloud files")
        return [read_cloud(p) for p in files]
    return [read_cloud(path)]


def _out(args) -> Path:
    if args.out is None:
        raise CommandError(f"{args.command} needs --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# commands

def cmd_ingest(args, cfg) -> list:
    out = _out(args)
    ladder = _ladder(args, cfg)
    data_cfg = cfg["data"]
    nested = data_cfg.get("nested", True)
    if args.synthetic is not None:
        kinds = args.classes.split(",") if args.classes else data_cfg.get("kinds", list(SHAPE_KINDS))
        kinds = kinds[: args.n_classes] if args.n_classes else kinds
        shapes = synthetic_dataset(args.synthetic, ladder, seed=args.seed, kinds=tuple(kinds))
        inputs = []
    else:
        src = Path(args.source)
        if not src.is_dir():
            raise CommandError(f"source {src} is not a directory")
        files = sorted(p for p in src.iterdir() if p.suffix in (".obj", *CLOUD_SUFFIXES))
        if not files:
            raise CommandError(f"source {src} holds no .obj/.xyz/.pcld files")
        shapes, failures = [], []
        for i, f in enumerate(files):
            try:
                source = read_obj(f) if f.suffix == ".obj" else read_cloud(f)
                shapes.append(build_ladder(source, ladder, args.seed + i, nested=nested,
                                           shape_id=f.stem, label=f.parent.name))
            except (MeshError, ValueError) as exc:
                failures.append(f"{f}: {exc}")
        for msg in failures:
            print(f"error: {msg}", file=sys.stderr)
        if failures:
            raise CommandError(f"{len(failures)} of {len(files)} source files failed")
        inputs = files
    split = assign_split(shapes, data_cfg.get("test_fraction", 0.25), args.seed)
    save_dataset(out, shapes, ladder, split, extra={"seed": args.seed})
    print(f"wrote {len(shapes)} shapes with sizes {ladder.sizes} to {out}")
    return inputs


def cmd_train(args, cfg) -> list:
    out = _out(args)
    ds = load_dataset(args.dataset)
    written = run_stages(ds, cfg, out, args.stage, seed=args.seed)
    for p in written:
        print(f"wrote {p}")
    return [Path(args.dataset)]


def _write_levels(out: Path, clouds_per_shape, first_level: int, fmt: str, names=None):
    for i, clouds in enumerate(clouds_per_shape):
        for j, cloud in enumerate(clouds):
            d = out / f"level{first_level + j}"
            d.mkdir(exist_ok=True)
            name = names[i] if names else f"shape_{i:04d}"
            write_cloud(d / f"{name}.{fmt}", cloud.astype(np.float32))


def cmd_synthesize(args, cfg) -> list:
    out = _out(args)
    pyr = load_pyramid(args.pyramid)
    rows = shape_seeds(args.seed, args.count, pyr.K + 1)
    _write_levels(out, [synthesize(pyr, row) for row in rows], 0, args.format)
    print(f"wrote {args.count} shapes x {pyr.K + 1} levels to {out}")
    return [Path(args.pyramid)]


def cmd_upsample(args, cfg) -> list:
    out = _out(args)
    pyr = load_pyramid(args.pyramid)
    src = Path(args.input)
    files = _cloud_files(src) if src.is_dir() else [src]
    rows = shape_seeds(args.seed, len(files), pyr.K)
    results = [upsample_shape(pyr, read_cloud(f), row) for f, row in zip(files, rows)]
    _write_levels(out, results, 1, args.format, names=[f.stem for f in files])
    print(f"upsampled {len(files)} clouds to {[pyr.ladder.size(k) for k in range(1, pyr.K + 1)]} points")
    return [Path(args.pyramid), *files]


def evaluate_sets(A, B, metrics, grid_res: int = JSD_DEFAULT_GRID, dist: str = "cd",
                  threads: int = 1) -> list:
    reports = []
    table = None
    for name in metrics:
        if name in ("cov", "mmd") and table is None:
            table = pairwise_distances(A, B, dist, workers=threads)
        if name == "jsd":
            reports.append(MetricReport("jsd", jsd(A, B, grid_res), {"grid_res": grid_res}))
        elif name == "cov":
            reports.append(MetricReport(f"cov-{dist}", coverage(A, B, table=table), {"dist": dist}))
        elif name == "mmd":
            reports.append(MetricReport(f"mmd-{dist}", mmd(A, B, table=table), {"dist": dist}))
        else:
            raise CommandError(f"unknown metric {name!r}; choose from jsd, cov, mmd")
    for r in reports:
        r.config.update({"n_a": len(A), "n_b": len(B)})
    return reports


def _display_table(reports) -> str:
    rows = []
    for r in reports:
        if r.name.startswith("cov"):
            rows.append(f"{r.name.upper():>10}  {100 * r.value:8.2f} %")
        else:
            rows.append(f"{r.name.upper():>10}  {1e3 * r.value:8.3f} x1e-3")
    return "\n".join(rows)


def cmd_evaluate(args, cfg) -> list:
    A = _load_set(Path(args.a), args.a_level, args.a_split)
    B = _load_set(Path(args.b), args.b_level, args.b_split)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    reports = evaluate_sets(A, B, metrics, args.grid_res, args.dist, args.threads)
    text = "\n".join(r.format() for r in reports) + "\n"
    sys.stdout.write(text)
    if args.table:
        print(_display_table(reports))
    if args.out:
        out = _out(args)
        (out / "report.txt").write_text(text)
        if args.plot:
            from .render import render_clouds
            render_clouds(A[:4] + B[:4], out / "evaluate.png",
                          titles=[f"A[{i}]" for i in range(min(4, len(A)))] + [f"B[{i}]" for i in range(min(4, len(B)))])
    return [Path(args.a), Path(args.b)]


def cmd_render(args, cfg) -> list:
    from .render import render_clouds, render_losses
    out = _out(args)
    inputs = []
    if args.clouds:
        files = []
        for p in map(Path, args.clouds):
            files += _cloud_files(p) if p.is_dir() else [p]
        render_clouds([read_cloud(f) for f in files[: args.max]], out / "clouds.png",
                      titles=[f.stem for f in files[: args.max]])
        inputs += files
    if args.logs:
        logs = {Path(p).stem: read_log(p) for p in args.logs}
        render_losses(logs, out / "losses.png")
        inputs += [Path(p) for p in args.logs]
    if not inputs:
        raise CommandError("render needs --clouds and/or --logs")
    return inputs


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "synthesize": cmd_synthesize,
    "upsample": cmd_upsample,
    "evaluate": cmd_evaluate,
    "render": cmd_render,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--config", help="YAML config overriding the preset")
    common.add_argument("--preset", choices=["desk", "paper"], help="named hyperparameter preset")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="BLAS / worker threads (default 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lslp", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lslp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="build a multi-resolution dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--source", help="directory of .obj meshes or .xyz/.pcld clouds")
    src.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic shapes")
    p.add_argument("--classes", help=f"comma-separated shape kinds (from {','.join(SHAPE_KINDS)})")
    p.add_argument("--n-classes", type=int, help="use the first N kinds")
    p.add_argument("--n0", type=int, help="base resolution")
    p.add_argument("--levels", type=int, help="number of refinement levels K")

    p = sub.add_parser("train", parents=[common], help="train pyramid stages")
    p.add_argument("--dataset", required=True)
    p.add_argument("--stage", default="all", help="all | ae-k | gan-k")

    p = sub.add_parser("synthesize", parents=[common], help="sample new shapes at every level")
    p.add_argument("--pyramid", required=True, help="pyramid.json manifest")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--format", choices=["pcld", "xyz"], default="pcld")

    p = sub.add_parser("upsample", parents=[common], help="refine n0-point clouds")
    p.add_argument("--pyramid", required=True)
    p.add_argument("--input", required=True, help="cloud file or directory of clouds")
    p.add_argument("--format", choices=["pcld", "xyz"], default="pcld")

    p = sub.add_parser("evaluate", parents=[common], help="JSD / COV / MMD between two sets")
    p.add_argument("--a", required=True, help="generated set: directory of clouds or dataset")
    p.add_argument("--b", required=True, help="reference set: directory of clouds or dataset")
    p.add_argument("--a-level", type=int)
    p.add_argument("--b-level", type=int)
    p.add_argument("--a-split", choices=["train", "test"])
    p.add_argument("--b-split", choices=["train", "test"])
    p.add_argument("--metrics", default="mmd,cov,jsd")
    p.add_argument("--grid-res", type=int, default=JSD_DEFAULT_GRID)
    p.add_argument("--dist", choices=["cd", "emd"], default="cd")
    p.add_argument("--table", action="store_true", help="also print scaled values (x1e-3, %%)")
    p.add_argument("--plot", action="store_true", help="write a scatter render next to the report")

    p = sub.add_parser("render", parents=[common], help="static images of clouds and loss curves")
    p.add_argument("--clouds", nargs="*", help="cloud files or directories")
    p.add_argument("--logs", nargs="*", help="per-epoch training logs")
    p.add_argument("--max", type=int, default=8, help="at most this many clouds")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        cfg = load_config(args.config, args.preset)
        with single_threaded(args.threads):
            inputs = COMMANDS[args.command](args, cfg)
    except (CommandError, PrerequisiteError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        out = Path(args.out)
        outputs = [p for p in sorted(out.rglob("*")) if p.is_file() and not p.name.startswith("run-")]
        command = shlex.join(["lslp", *(sys.argv[1:] if argv is None else argv)])
        write_run_manifest(out / f"run-{args.command}.json", command, cfg, {"seed": args.seed}, inputs, outputs,
                           started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
