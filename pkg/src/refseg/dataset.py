"""Triplet manifest assembly and bookkeeping: JSON-Lines persistence,
scene-disjoint splits, verdict filtering, and foreground-ratio statistics.

Manifest file layout: line 1 is a header object carrying the predicate-config
snapshot and taxonomy hash; every following line is one triplet record.
All paths inside a manifest are relative to the manifest's directory."""

from __future__ import annotations

import colorsys
import json
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .exprgen import Expression, ExpressionSpan, enumerate_expressions
from .maskgen import SpatialPredicateConfig, generate_mask
from .raster import BinaryMask, LabelMap, load_mask, save_label_map, save_mask
from .taxonomy import Taxonomy, taxonomy_hash

SPLITS = ("train", "val", "test")
VERDICTS = ("pending", "keep", "discard")

# Published statistics of the source corpus this pipeline mirrors, kept for
# documentation and split-policy tests; not reproduced here (the source
# imagery is not redistributed).
REFERENCE_DATASET_STATS = {
    "triplets": 4420,
    "scenes": 285,
    "splits": {
        "train": {"scenes": 151, "triplets": 2172},
        "val": {"scenes": 31, "triplets": 431},
        "test": {"scenes": 103, "triplets": 1817},
    },
}

_HEADER_KIND = "manifest-header"


class DatasetError(Exception):
    pass


class IoError(DatasetError):
    pass


class ParseError(DatasetError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SplitOverlap(DatasetError):
    pass


class MissingMaskFile(DatasetError):
    pass


class TooFewScenes(DatasetError):
    pass


class UnknownTripletId(DatasetError):
    pass


@dataclass
class TripletRecord:
    id: str
    scene_id: str
    image_path: str
    label_path: str
    mask_path: str
    expression: Expression
    split: str = "train"
    foreground_ratio: float = 0.0
    verdict: str = "pending"


@dataclass
class Manifest:
    records: list[TripletRecord]
    config: SpatialPredicateConfig
    taxonomy_hash: str
    root: Path | None = None  # directory record paths are relative to

    def resolve_path(self, rel: str) -> Path:
        return (self.root / rel) if self.root is not None else Path(rel)

    def record(self, triplet_id: str) -> TripletRecord:
        for r in self.records:
            if r.id == triplet_id:
                return r
        raise UnknownTripletId(f"unknown triplet id {triplet_id!r}")

    def scene_splits(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for r in self.records:
            out.setdefault(r.scene_id, set()).add(r.split)
        return out


@dataclass
class Histogram:
    """Left-closed right-open bins over [0, 1], last bin closed."""

    bin_edges: list[float]
    counts: list[int]


def triplet_id(scene_id: str, expression_text: str) -> str:
    return f"{scene_id}__{expression_text.replace(' ', '-')}"


def colorize_labels(label_map: LabelMap) -> np.ndarray:
    """Deterministic display rendering of a label raster (golden-ratio hues)."""
    palette = np.zeros((256, 3), dtype=np.uint8)
    for cid in range(256):
        r, g, b = colorsys.hsv_to_rgb((cid * 0.618034) % 1.0, 0.55, 0.95)
        palette[cid] = (int(r * 255), int(g * 255), int(b * 255))
    return palette[label_map.pixels]


def _assemble_scene(scene_id: str, label_map: LabelMap, image: np.ndarray | None,
                    tax: Taxonomy, cfg: SpatialPredicateConfig, out_dir: Path,
                    expressions: list[Expression]) -> list[TripletRecord]:
    label_rel = f"labels/{scene_id}.png"
    image_rel = f"images/{scene_id}.png"
    rgb = colorize_labels(label_map) if image is None else np.asarray(image, dtype=np.uint8)
    try:
        save_label_map(label_map, out_dir / label_rel)
        Image.fromarray(rgb, mode="RGB").save(out_dir / image_rel, format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write scene files for {scene_id!r}: {exc}") from exc
    records = []
    for e in expressions:
        mask = generate_mask(label_map, tax, e, cfg)
        if mask.is_empty():
            continue
        rec_id = triplet_id(scene_id, e.text)
        mask_rel = f"masks/{rec_id}.png"
        try:
            save_mask(mask, out_dir / mask_rel)
        except OSError as exc:
            raise IoError(f"cannot write mask {mask_rel!r}: {exc}") from exc
        records.append(TripletRecord(
            id=rec_id,
            scene_id=scene_id,
            image_path=image_rel,
            label_path=label_rel,
            mask_path=mask_rel,
            expression=e,
            split="train",
            foreground_ratio=mask.foreground_count / (mask.height * mask.width),
            verdict="pending",
        ))
    return records


def assemble(scenes: list[tuple[str, LabelMap, np.ndarray | None]], tax: Taxonomy,
             cfg: SpatialPredicateConfig, out_dir: str | Path, workers: int = 1) -> Manifest:
    """Enumerate expressions per scene, generate masks, drop empty-mask triplets
    (uninformative by construction), and write labels/images/masks under out_dir.
    Scenes are processed independently (optionally in parallel); record order is
    deterministic in scene id regardless of worker count."""
    if not scenes:
        raise DatasetError("no scenes to assemble")
    out_dir = Path(out_dir)
    try:
        for sub in ("labels", "images", "masks"):
            (out_dir / sub).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directories under {out_dir}: {exc}") from exc

    expressions = enumerate_expressions(tax)
    ordered = sorted(scenes, key=lambda s: s[0])
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_scene = list(pool.map(
                lambda s: _assemble_scene(s[0], s[1], s[2], tax, cfg, out_dir, expressions),
                ordered))
    else:
        per_scene = [_assemble_scene(s[0], s[1], s[2], tax, cfg, out_dir, expressions)
                     for s in ordered]
    records = [rec for scene_records in per_scene for rec in scene_records]
    return Manifest(records=records, config=cfg, taxonomy_hash=taxonomy_hash(tax), root=out_dir)


def _apportion(n: int, fractions: tuple[float, float, float]) -> list[int]:
    """Largest-remainder rounding of n into len(fractions) parts; every part
    with a nonzero fraction receives at least one item."""
    floors = [math.floor(n * f) for f in fractions]
    remainders = [n * f - fl for f, fl in zip(fractions, floors)]
    counts = list(floors)
    leftover = n - sum(counts)
    for i in sorted(range(len(fractions)), key=lambda i: (-remainders[i], i))[:leftover]:
        counts[i] += 1
    for i, f in enumerate(fractions):
        while f > 0 and counts[i] == 0:
            donor = max(range(len(counts)), key=lambda j: counts[j])
            if counts[donor] <= 1:
                break
            counts[donor] -= 1
            counts[i] += 1
    return counts


def split_by_scene(m: Manifest, fractions: tuple[float, float, float], seed: int) -> Manifest:
    """Shuffle scenes with a seeded PRNG and partition them by the given
    proportions; every record inherits its scene's split."""
    if any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError(f"fractions must be non-negative and sum to 1, got {fractions}")
    scenes = sorted({r.scene_id for r in m.records})
    nonzero = sum(1 for f in fractions if f > 0)
    if len(scenes) < nonzero:
        raise TooFewScenes(f"{len(scenes)} scene(s) cannot fill {nonzero} non-empty splits")
    rng = random.Random(seed)
    rng.shuffle(scenes)
    counts = _apportion(len(scenes), fractions)
    assignment: dict[str, str] = {}
    start = 0
    for split, count in zip(SPLITS, counts):
        for scene in scenes[start : start + count]:
            assignment[scene] = split
        start += count
    records = [replace(r, split=assignment[r.scene_id]) for r in m.records]
    return replace(m, records=records)


def apply_verdicts(m: Manifest, verdict_log: list[tuple[str, str]]) -> Manifest:
    """Apply (id, keep|discard) events in order; the last verdict per id wins."""
    known = {r.id for r in m.records}
    final: dict[str, str] = {}
    for triplet, verdict in verdict_log:
        if triplet not in known:
            raise UnknownTripletId(f"unknown triplet id {triplet!r}")
        if verdict not in ("keep", "discard"):
            raise ValueError(f"verdict must be keep or discard, got {verdict!r}")
        final[triplet] = verdict
    records = [replace(r, verdict=final.get(r.id, r.verdict)) for r in m.records]
    return replace(m, records=records)


def export_records(m: Manifest, include_pending: bool = True) -> list[TripletRecord]:
    """Curated view: discarded records are always excluded; pending ones only
    when include_pending is false."""
    out = [r for r in m.records if r.verdict != "discard"]
    if not include_pending:
        out = [r for r in out if r.verdict != "pending"]
    return out


def foreground_histogram(m: Manifest, bin_width: float) -> Histogram:
    if not (0.0 < bin_width <= 1.0):
        raise ValueError(f"bin_width must be in (0, 1], got {bin_width}")
    n_bins = int(math.floor(1.0 / bin_width + 1e-9))
    if n_bins * bin_width < 1.0 - 1e-12:
        n_bins += 1
    edges = [min(i * bin_width, 1.0) for i in range(n_bins + 1)]
    edges[-1] = 1.0
    ratios = [r.foreground_ratio for r in m.records]
    counts, _ = np.histogram(ratios, bins=edges)
    return Histogram(bin_edges=edges, counts=[int(c) for c in counts])


def histogram_csv(h: Histogram) -> str:
    lines = ["bin_start,bin_end,count"]
    for lo, hi, c in zip(h.bin_edges[:-1], h.bin_edges[1:], h.counts):
        lines.append(f"{lo:.6f},{hi:.6f},{c}")
    return "\n".join(lines) + "\n"


def _expression_to_json(e: Expression) -> dict:
    return {
        "category": e.category,
        "attribute": e.attribute,
        "relation": e.relation,
        "text": e.text,
        "spans": [{"role": s.role, "start": s.start, "end": s.end} for s in e.spans()],
    }


def _expression_from_json(d: dict) -> Expression:
    return Expression(category=d["category"], attribute=d["attribute"],
                      relation=d["relation"], text=d["text"])


def record_to_json(r: TripletRecord) -> dict:
    return {
        "id": r.id,
        "scene_id": r.scene_id,
        "image_path": r.image_path,
        "label_path": r.label_path,
        "mask_path": r.mask_path,
        "expression": _expression_to_json(r.expression),
        "split": r.split,
        "foreground_ratio": r.foreground_ratio,
        "verdict": r.verdict,
    }


def validate_manifest(m: Manifest, verify_files: bool = False) -> None:
    """Enforce manifest invariants: unique ids, legal split/verdict values,
    scene-disjoint splits, and (optionally) mask files present on disk."""
    seen_ids: set[str] = set()
    for r in m.records:
        if r.id in seen_ids:
            raise DatasetError(f"duplicate triplet id {r.id!r}")
        seen_ids.add(r.id)
        if r.split not in SPLITS:
            raise DatasetError(f"record {r.id!r}: bad split {r.split!r}")
        if r.verdict not in VERDICTS:
            raise DatasetError(f"record {r.id!r}: bad verdict {r.verdict!r}")
    for scene, splits in m.scene_splits().items():
        if len(splits) > 1:
            raise SplitOverlap(f"scene {scene!r} appears in splits {sorted(splits)}")
    if verify_files:
        for r in m.records:
            if not m.resolve_path(r.mask_path).exists():
                raise MissingMaskFile(f"record {r.id!r}: {r.mask_path} not found")


def check_mask_ratios(m: Manifest) -> list[str]:
    """Ids whose stored foreground_ratio disagrees with the mask file (stale manifest)."""
    stale = []
    for r in m.records:
        mask = load_mask(m.resolve_path(r.mask_path))
        if mask.foreground_count / (mask.height * mask.width) != r.foreground_ratio:
            stale.append(r.id)
    return stale


def save_manifest(m: Manifest, path: str | Path) -> None:
    path = Path(path)
    header = {
        "kind": _HEADER_KIND,
        "version": 1,
        "predicate_config": m.config.to_dict(),
        "taxonomy_hash": m.taxonomy_hash,
    }
    lines = [json.dumps(header, ensure_ascii=False)]
    lines.extend(json.dumps(record_to_json(r), ensure_ascii=False) for r in m.records)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path: str | Path, verify_files: bool = True) -> Manifest:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError(1, "empty manifest")

    def _parse_line(i: int, text: str) -> dict:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(i, f"invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ParseError(i, "expected a JSON object")
        return obj

    header = _parse_line(1, lines[0])
    if header.get("kind") != _HEADER_KIND:
        raise ParseError(1, f"first line must be the manifest header, got kind={header.get('kind')!r}")
    try:
        config = SpatialPredicateConfig.from_dict(header["predicate_config"])
        tax_hash = str(header["taxonomy_hash"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(1, f"bad header: {exc}") from exc

    records = []
    for i, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        obj = _parse_line(i, text)
        try:
            records.append(TripletRecord(
                id=str(obj["id"]),
                scene_id=str(obj["scene_id"]),
                image_path=str(obj["image_path"]),
                label_path=str(obj["label_path"]),
                mask_path=str(obj["mask_path"]),
                expression=_expression_from_json(obj["expression"]),
                split=str(obj["split"]),
                foreground_ratio=float(obj["foreground_ratio"]),
                verdict=str(obj["verdict"]),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(i, f"bad record: {exc}") from exc

    m = Manifest(records=records, config=config, taxonomy_hash=tax_hash, root=path.parent)
    validate_manifest(m, verify_files=verify_files)
    return m
