"""Referring-segmentation evaluation: per-sample IoU, overall IoU (size-weighted),
mean IoU, and precision at IoU thresholds. All counting is exact integer
arithmetic; division happens only at reporting time."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .raster import BinaryMask, load_mask

DEFAULT_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)

# Published benchmark rows on the source corpus (test split, 1817 samples),
# kept as report-format fixtures; desk-scale runs cannot reproduce them.
REFERENCE_BENCHMARK_ROWS = {
    "transformer-baseline": {
        "pr": {0.5: 0.7144, 0.6: 0.5740, 0.7: 0.3214, 0.8: 0.1541, 0.9: 0.0451},
        "oiou": 0.7646, "miou": 0.5774, "n": 1817,
    },
    "cross-scale-enhanced": {
        "pr": {0.5: 0.7375, 0.6: 0.6114, 0.7: 0.3946, 0.8: 0.1602, 0.9: 0.0545},
        "oiou": 0.7681, "miou": 0.5996, "n": 1817,
    },
}


class MetricsError(Exception):
    pass


class DimMismatch(MetricsError):
    pass


class EmptySampleSet(MetricsError):
    pass


class MissingPrediction(MetricsError):
    def __init__(self, sample_id: str):
        super().__init__(f"no prediction mask for sample {sample_id!r}")
        self.sample_id = sample_id


@dataclass
class EvalSample:
    pred: BinaryMask
    gt: BinaryMask
    id: str = ""


@dataclass
class EvalReport:
    """One benchmark row: precision at each threshold, overall IoU, mean IoU, sample count."""

    pr: dict[float, float]
    oiou: float
    miou: float
    n: int


def intersection_union(pred: BinaryMask, gt: BinaryMask) -> tuple[int, int]:
    """Exact pixel counts of (intersection, union)."""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise DimMismatch(f"pred {pred.height}x{pred.width} vs gt {gt.height}x{gt.width}")
    inter = int(np.count_nonzero(pred.bits & gt.bits))
    union = int(np.count_nonzero(pred.bits | gt.bits))
    return inter, union


def _iou_fraction(inter: int, union: int) -> Fraction:
    # Both masks empty counts as a perfect match; a one-sided empty mask
    # scores 0 through the plain ratio.
    return Fraction(1) if union == 0 else Fraction(inter, union)


def iou(pred: BinaryMask, gt: BinaryMask) -> float:
    """|pred & gt| / |pred | gt|; 1.0 when both masks are empty."""
    return float(_iou_fraction(*intersection_union(pred, gt)))


def overall_iou(samples: list[EvalSample]) -> float:
    """Total intersection over total union across all samples (size-weighted)."""
    if not samples:
        raise EmptySampleSet("overall_iou needs at least one sample")
    pairs = [intersection_union(s.pred, s.gt) for s in samples]
    total_union = sum(u for _, u in pairs)
    if total_union == 0:
        return 1.0
    return float(Fraction(sum(i for i, _ in pairs), total_union))


def mean_iou(samples: list[EvalSample]) -> float:
    """Arithmetic mean of per-sample IoU values (size-agnostic)."""
    if not samples:
        raise EmptySampleSet("mean_iou needs at least one sample")
    total = sum(_iou_fraction(*intersection_union(s.pred, s.gt)) for s in samples)
    return float(total / len(samples))


def precision_at(samples: list[EvalSample], threshold: float, strict: bool = True) -> float:
    """Fraction of samples whose IoU exceeds the threshold (strictly by default).
    The threshold is read as an exact decimal: an IoU of exactly 3/5 does not
    strictly exceed 0.6, even though float(0.6) sits just below it."""
    if not samples:
        raise EmptySampleSet("precision_at needs at least one sample")
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    exact = Fraction(str(threshold))
    hits = 0
    for s in samples:
        v = _iou_fraction(*intersection_union(s.pred, s.gt))
        if (v > exact) if strict else (v >= exact):
            hits += 1
    return float(Fraction(hits, len(samples)))


def evaluate_samples(samples: list[EvalSample],
                     thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
                     strict: bool = True) -> EvalReport:
    if not samples:
        raise EmptySampleSet("evaluate_samples needs at least one sample")
    pr = {t: precision_at(samples, t, strict) for t in thresholds}
    return EvalReport(pr=pr, oiou=overall_iou(samples), miou=mean_iou(samples), n=len(samples))


def evaluate_dirs(pred_dir: str | Path, manifest, split: str = "test",
                  thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
                  strict: bool = True) -> tuple[EvalReport, list[tuple[str, int, int, float]]]:
    """Pair prediction masks (<id>.png under pred_dir) with a manifest's
    ground truth for one split; returns the report and per-sample
    (id, intersection, union, iou) rows."""
    pred_dir = Path(pred_dir)
    records = sorted((r for r in manifest.records if r.split == split), key=lambda r: r.id)
    samples = []
    for rec in records:
        pred_path = pred_dir / f"{rec.id}.png"
        if not pred_path.exists():
            raise MissingPrediction(rec.id)
        pred = load_mask(pred_path)
        gt = load_mask(manifest.resolve_path(rec.mask_path))
        if (pred.height, pred.width) != (gt.height, gt.width):
            raise DimMismatch(f"sample {rec.id!r}: pred {pred.height}x{pred.width} "
                              f"vs gt {gt.height}x{gt.width}")
        samples.append(EvalSample(pred=pred, gt=gt, id=rec.id))
    if not samples:
        raise EmptySampleSet(f"no records in split {split!r}")
    rows = []
    for s in samples:
        inter, union = intersection_union(s.pred, s.gt)
        rows.append((s.id, inter, union, float(_iou_fraction(inter, union))))
    return evaluate_samples(samples, thresholds, strict), rows


def format_report(report: EvalReport) -> str:
    """Aligned plain-text benchmark row: Pr@t columns in ascending t, then oIoU, mIoU."""
    headers = [f"Pr@{t:g}" for t in sorted(report.pr)] + ["oIoU", "mIoU"]
    values = [f"{report.pr[t]:.4f}" for t in sorted(report.pr)] + [
        f"{report.oiou:.4f}", f"{report.miou:.4f}"]
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    head = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    row = "  ".join(v.rjust(w) for v, w in zip(values, widths))
    return f"{head}\n{row}"


def report_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    headers = [f"Pr@{t:g}" for t in sorted(report.pr)] + ["oIoU", "mIoU", "n"]
    values = [f"{report.pr[t]:.6f}" for t in sorted(report.pr)] + [
        f"{report.oiou:.6f}", f"{report.miou:.6f}", str(report.n)]
    writer.writerow(headers)
    writer.writerow(values)
    return buf.getvalue()


def per_sample_csv(rows: list[tuple[str, int, int, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["id", "intersection", "union", "iou"])
    for sample_id, inter, union, value in rows:
        writer.writerow([sample_id, inter, union, f"{value:.6f}"])
    return buf.getvalue()
