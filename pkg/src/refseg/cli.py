"""Single executable for the pipeline: generate, split, stats, evaluate,
lgce-check, serve.

Exit codes: 0 success, 1 check failure, 2 input error. Option precedence is
flags > config file > defaults; the config file is YAML (same parser as the
taxonomy document) with keys named like the long flags."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from . import dataset, exprgen, lgce, metrics
from .maskgen import SpatialPredicateConfig
from .raster import RasterError, load_label_map
from .taxonomy import TaxonomyError, default_taxonomy, load_taxonomy

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2


class CliError(Exception):
    pass


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise CliError(f"config {path} must be a mapping")
    return doc


def _opt(args_value, config: dict, key: str, default):
    """flags > config file > defaults (flags use None to mean 'not given')."""
    if args_value is not None:
        return args_value
    if key in config:
        return config[key]
    return default


def _taxonomy(path: str | None):
    return load_taxonomy(path) if path else default_taxonomy()


def _predicate_config(args, config: dict) -> SpatialPredicateConfig:
    defaults = SpatialPredicateConfig()
    return SpatialPredicateConfig(
        buffer_radius=int(_opt(args.buffer_radius, config, "buffer_radius", defaults.buffer_radius)),
        tau_on=float(_opt(args.tau_on, config, "tau_on", defaults.tau_on)),
        tau_surround=float(_opt(args.tau_surround, config, "tau_surround", defaults.tau_surround)),
        connectivity=int(_opt(args.connectivity, config, "connectivity", defaults.connectivity)),
    )


def _parse_fractions(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise CliError(f"expected three comma-separated fractions, got {text!r}")
    return (parts[0], parts[1], parts[2])


def _load_scenes(scenes_dir: Path, tax) -> list[tuple[str, object, object]]:
    labels_dir = scenes_dir / "labels"
    if not labels_dir.is_dir():
        labels_dir = scenes_dir  # flat layout: the label rasters sit at the top
    label_files = sorted(labels_dir.glob("*.png"))
    if not label_files:
        raise CliError(f"no label rasters (*.png) found under {scenes_dir}")
    scenes = []
    for label_path in label_files:
        scene_id = label_path.stem
        label_map = load_label_map(label_path, tax)
        image = None
        image_path = scenes_dir / "images" / f"{scene_id}.png"
        if image_path.exists():
            image = np.asarray(Image.open(image_path).convert("RGB"))
        scenes.append((scene_id, label_map, image))
    return scenes


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    config = _load_config(args.config)
    scenes_dir = Path(_opt(args.scenes, config, "scenes", None) or _fail("--scenes is required"))
    out_dir = Path(_opt(args.out, config, "out", None) or _fail("--out is required"))
    if out_dir.exists() and any(out_dir.iterdir()) and not args.force:
        raise CliError(f"output directory {out_dir} is not empty; pass --force to overwrite")
    tax = _taxonomy(_opt(args.taxonomy, config, "taxonomy", None))
    cfg = _predicate_config(args, config)
    workers = int(_opt(args.workers, config, "workers", 1))

    scenes = _load_scenes(scenes_dir, tax)
    manifest = dataset.assemble(scenes, tax, cfg, out_dir, workers=workers)
    dataset.save_manifest(manifest, out_dir / "manifest.jsonl")
    total = len(scenes) * len(exprgen.enumerate_expressions(tax))
    print(f"scenes:        {len(scenes)}")
    print(f"triplets:      {len(manifest.records)}")
    print(f"dropped empty: {total - len(manifest.records)}")
    print(f"manifest:      {out_dir / 'manifest.jsonl'}")
    return EXIT_OK


def cmd_split(args) -> int:
    config = _load_config(args.config)
    manifest_path = Path(args.manifest)
    fractions = _parse_fractions(_opt(args.fractions, config, "fractions", "0.6,0.2,0.2"))
    seed = int(_opt(args.seed, config, "seed", 0))
    m = dataset.load_manifest(manifest_path)
    m = dataset.split_by_scene(m, fractions, seed)
    out_path = Path(args.out) if args.out else manifest_path
    dataset.save_manifest(m, out_path)
    scenes = m.scene_splits()
    for split in dataset.SPLITS:
        n_scenes = sum(1 for s in scenes.values() if split in s)
        n_records = sum(1 for r in m.records if r.split == split)
        print(f"{split:<6} {n_scenes:>6} scenes  {n_records:>7} triplets")
    return EXIT_OK


def cmd_stats(args) -> int:
    config = _load_config(args.config)
    m = dataset.load_manifest(Path(args.manifest), verify_files=False)
    if not m.records:
        raise CliError("manifest has no records")
    bin_width = float(_opt(args.bin_width, config, "bin_width", 0.05))
    hist = dataset.foreground_histogram(m, bin_width)
    peak = max(hist.counts) or 1
    for lo, hi, count in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
        bar = "#" * round(40 * count / peak)
        print(f"[{lo:5.2f}, {hi:5.2f}) {count:>7}  {bar}")
    csv_path = Path(args.csv) if args.csv else None
    if csv_path:
        csv_path.write_text(dataset.histogram_csv(hist), encoding="utf-8")
        print(f"histogram csv: {csv_path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    m = dataset.load_manifest(Path(args.manifest))
    split = _opt(args.split, config, "split", "test")
    thresholds = tuple(float(t) for t in _opt(args.thresholds, config, "thresholds",
                                              "0.5,0.6,0.7,0.8,0.9").split(","))
    strict = not args.at_least
    report, rows = metrics.evaluate_dirs(Path(args.pred), m, split=split,
                                         thresholds=thresholds, strict=strict)
    table = metrics.format_report(report)
    print(table)
    out_dir = Path(_opt(args.out, config, "out", "evaluation"))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(table + "\n", encoding="utf-8")
    (out_dir / "report.csv").write_text(metrics.report_csv(report), encoding="utf-8")
    (out_dir / "per_sample.csv").write_text(metrics.per_sample_csv(rows), encoding="utf-8")
    print(f"report files in {out_dir}")
    return EXIT_OK


def cmd_lgce_check(args) -> int:
    results = lgce.run_invariant_suite(
        seed=args.seed, trials=args.trials, fd_seeds=args.fd_seeds,
        inject_fault=args.inject_gradient_fault)
    width = max(len(r.name) for r in results)
    failed = False
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  [{r.seconds:6.2f}s]  {r.detail}")
        failed = failed or not r.passed
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    config = _load_config(args.config)
    manifest_path = Path(args.manifest)
    verdict_log = Path(_opt(args.verdict_log, config, "verdict_log",
                            manifest_path.parent / "verdicts.jsonl"))
    ui_dir = _opt(args.ui, config, "ui", None)
    app = create_app(manifest_path, verdict_log, ui_dir=Path(ui_dir) if ui_dir else None)
    host = _opt(args.host, config, "host", "127.0.0.1")
    port = int(_opt(args.port, config, "port", 8000))
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return EXIT_OK


def _fail(message: str):
    raise CliError(message)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="refseg",
        description="Referring-expression segmentation toolkit: synthesize triplets "
                    "from label rasters, split and inspect manifests, evaluate "
                    "predictions, verify the fusion module, and run the review server.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="synthesize triplets from label rasters")
    gen.add_argument("--scenes", help="scene directory (labels/*.png [+ images/*.png])")
    gen.add_argument("--out", help="output dataset directory")
    gen.add_argument("--taxonomy", help="taxonomy YAML (default: bundled aerial taxonomy)")
    gen.add_argument("--config", help="YAML config file")
    gen.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    gen.add_argument("--workers", type=int, help="parallel scene workers (default 1)")
    gen.add_argument("--buffer-radius", dest="buffer_radius", type=int,
                     help="spatial predicate buffer radius in px (default 3)")
    gen.add_argument("--tau-on", dest="tau_on", type=float,
                     help="containment threshold for on/in relations (default 0.5)")
    gen.add_argument("--tau-surround", dest="tau_surround", type=float,
                     help="containment threshold for surrounded-by (default 0.8)")
    gen.add_argument("--connectivity", type=int, choices=(4, 8),
                     help="instance connectivity (default 8)")
    gen.set_defaults(func=cmd_generate)

    spl = sub.add_parser("split", help="assign scene-disjoint train/val/test splits")
    spl.add_argument("--manifest", required=True)
    spl.add_argument("--fractions", help="train,val,test fractions (default 0.6,0.2,0.2)")
    spl.add_argument("--seed", type=int, help="shuffle seed (default 0)")
    spl.add_argument("--out", help="output manifest path (default: rewrite in place)")
    spl.add_argument("--config", help="YAML config file")
    spl.set_defaults(func=cmd_split)

    st = sub.add_parser("stats", help="foreground-proportion histogram")
    st.add_argument("--manifest", required=True)
    st.add_argument("--bin-width", dest="bin_width", type=float, help="bin width (default 0.05)")
    st.add_argument("--csv", help="also write bin_start,bin_end,count CSV here")
    st.add_argument("--config", help="YAML config file")
    st.set_defaults(func=cmd_stats)

    ev = sub.add_parser("evaluate", help="score prediction masks against a manifest")
    ev.add_argument("--pred", required=True, help="directory of <triplet id>.png prediction masks")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--split", help="manifest split to evaluate (default test)")
    ev.add_argument("--thresholds", help="comma-separated Pr thresholds (default 0.5..0.9)")
    ev.add_argument("--at-least", action="store_true",
                    help="count IoU == threshold as a hit (default: strictly greater)")
    ev.add_argument("--out", help="report output directory (default ./evaluation)")
    ev.add_argument("--config", help="YAML config file")
    ev.set_defaults(func=cmd_evaluate)

    ck = sub.add_parser("lgce-check", help="run the fusion-module invariant suite")
    ck.add_argument("--seed", type=int, default=0)
    ck.add_argument("--trials", type=int, default=50, help="randomized shape-contract trials")
    ck.add_argument("--fd-seeds", dest="fd_seeds", type=int, default=5,
                    help="seeds for the finite-difference gradient check (0 skips it)")
    ck.add_argument("--inject-gradient-fault", action="store_true", help=argparse.SUPPRESS)
    ck.set_defaults(func=cmd_lgce_check)

    sv = sub.add_parser("serve", help="run the curation review server")
    sv.add_argument("--manifest", required=True)
    sv.add_argument("--verdict-log", dest="verdict_log", help="verdict JSONL path "
                    "(default: verdicts.jsonl next to the manifest)")
    sv.add_argument("--ui", help="directory of built review UI files to serve at /")
    sv.add_argument("--host", help="bind host (default 127.0.0.1)")
    sv.add_argument("--port", type=int, help="bind port (default 8000)")
    sv.add_argument("--config", help="YAML config file")
    sv.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, RasterError, TaxonomyError, dataset.DatasetError,
            metrics.MetricsError, exprgen.ExpressionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
