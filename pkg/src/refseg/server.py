"""HTTP backend for the human curation loop: serves triplets and mask
overlays, persists keep/discard verdicts to an append-only JSONL log (durable
before the response), and exports the filtered manifest.

The server is a thin stateful shell over the dataset module: verdicts live in
the dataset's verdict-log format, mutation is serialized through one writer,
and a restart plus log replay reproduces the same state."""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel

from . import dataset
from .dataset import Manifest, load_manifest, record_to_json, save_manifest
from .raster import load_mask

OVERLAY_TINT = (255, 0, 0)


@dataclass(frozen=True)
class VerdictEvent:
    triplet_id: str
    verdict: str  # "keep" | "discard" | "pending" (explicit revert, used by undo)
    reason: str | None
    timestamp: int  # UTC seconds

    def to_json(self) -> dict:
        return {"id": self.triplet_id, "verdict": self.verdict,
                "reason": self.reason, "timestamp": self.timestamp}


def load_verdict_log(path: Path) -> list[VerdictEvent]:
    if not path.exists():
        return []
    events = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        events.append(VerdictEvent(triplet_id=obj["id"], verdict=obj["verdict"],
                                   reason=obj.get("reason"), timestamp=int(obj["timestamp"])))
    return events


class ReviewState:
    """Manifest plus the replayed verdict log; single-writer on the log.

    Besides keep/discard, the log accepts an explicit "pending" event that
    reverts a triplet to the unreviewed state - that is how the UI's undo of
    a first verdict is persisted without breaking append-only logging."""

    def __init__(self, manifest: Manifest, log_path: Path):
        self.manifest = manifest
        self.log_path = log_path
        self._lock = threading.Lock()
        self.verdicts: dict[str, str] = {}
        known = {r.id for r in manifest.records}
        for event in load_verdict_log(log_path):
            if event.triplet_id in known:
                self._absorb(event.triplet_id, event.verdict)

    def _absorb(self, triplet_id: str, verdict: str) -> None:
        if verdict == "pending":
            self.verdicts.pop(triplet_id, None)
        else:
            self.verdicts[triplet_id] = verdict

    def known_ids(self) -> set[str]:
        return {r.id for r in self.manifest.records}

    def effective_verdict(self, triplet_id: str) -> str:
        return self.verdicts.get(triplet_id, "pending")

    def record_verdict(self, event: VerdictEvent) -> None:
        line = json.dumps(event.to_json(), ensure_ascii=False)
        with self._lock:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._absorb(event.triplet_id, event.verdict)

    def verdicted_manifest(self) -> Manifest:
        # only keep/discard remain after absorption, as apply_verdicts expects
        return dataset.apply_verdicts(self.manifest, list(self.verdicts.items()))


def overlay_png(image_path: Path, mask_path: Path, alpha: float) -> bytes:
    """Source image with the mask's foreground tinted at the given opacity."""
    image = np.asarray(Image.open(image_path).convert("RGB"), dtype=np.float64)
    mask = load_mask(mask_path)
    if mask.bits.shape != image.shape[:2]:
        raise ValueError(f"mask {mask.bits.shape} does not match image {image.shape[:2]}")
    m = mask.bits[:, :, None].astype(np.float64) * alpha
    tint = np.array(OVERLAY_TINT, dtype=np.float64)
    blended = np.rint(image * (1.0 - m) + tint * m).clip(0, 255).astype(np.uint8)
    import io

    buf = io.BytesIO()
    Image.fromarray(blended, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


class VerdictIn(BaseModel):
    id: str
    verdict: str
    reason: str | None = None


class ExportIn(BaseModel):
    path: str | None = None
    include_pending: bool = True


def create_app(manifest_path: str | Path, verdict_log_path: str | Path,
               ui_dir: Path | None = None) -> FastAPI:
    manifest_path = Path(manifest_path)
    state = ReviewState(load_manifest(manifest_path), Path(verdict_log_path))
    app = FastAPI(title="refseg review server")
    app.state.review = state

    @app.get("/api/triplets")
    def list_triplets(split: str | None = None, status: str | None = None,
                      page: int = 1, page_size: int = 50):
        if split is not None and split not in dataset.SPLITS:
            raise HTTPException(400, f"unknown split {split!r}")
        if status is not None and status not in dataset.VERDICTS:
            raise HTTPException(400, f"unknown status {status!r}")
        if page < 1 or page_size < 1 or page_size > 500:
            raise HTTPException(400, f"bad paging page={page} page_size={page_size}")
        records = sorted(state.manifest.records, key=lambda r: r.id)
        if split is not None:
            records = [r for r in records if r.split == split]
        if status is not None:
            records = [r for r in records if state.effective_verdict(r.id) == status]
        total = len(records)
        pages = max(1, math.ceil(total / page_size))
        chunk = records[(page - 1) * page_size : page * page_size]
        payload = []
        for r in chunk:
            obj = record_to_json(r)
            obj["verdict"] = state.effective_verdict(r.id)
            payload.append(obj)
        return {"page": page, "page_size": page_size, "total": total,
                "pages": pages, "records": payload}

    @app.get("/api/overlay/{triplet_id}")
    def overlay(triplet_id: str, alpha: float = 0.5):
        if not (0.0 <= alpha <= 1.0):
            raise HTTPException(400, f"alpha must be in [0, 1], got {alpha}")
        try:
            rec = state.manifest.record(triplet_id)
        except dataset.UnknownTripletId:
            raise HTTPException(404, f"unknown triplet {triplet_id!r}")
        png = overlay_png(state.manifest.resolve_path(rec.image_path),
                          state.manifest.resolve_path(rec.mask_path), alpha)
        return Response(content=png, media_type="image/png")

    @app.post("/api/verdicts", status_code=204)
    def post_verdict(body: VerdictIn):
        if body.verdict not in ("keep", "discard", "pending"):
            raise HTTPException(
                400, f"verdict must be keep, discard, or pending (undo), got {body.verdict!r}")
        if body.id not in state.known_ids():
            raise HTTPException(404, f"unknown triplet {body.id!r}")
        state.record_verdict(VerdictEvent(triplet_id=body.id, verdict=body.verdict,
                                          reason=body.reason, timestamp=int(time.time())))
        return Response(status_code=204)

    @app.post("/api/export")
    def export(body: ExportIn | None = None):
        body = body or ExportIn()
        curated = state.verdicted_manifest()
        kept = dataset.export_records(curated, include_pending=body.include_pending)
        out = dataset.Manifest(records=kept, config=curated.config,
                               taxonomy_hash=curated.taxonomy_hash, root=curated.root)
        dataset.validate_manifest(out)
        out_path = Path(body.path) if body.path else manifest_path.with_name("manifest.curated.jsonl")
        save_manifest(out, out_path)
        return {"path": str(out_path), "records": len(kept)}

    @app.get("/api/stats")
    def stats():
        counts = {"pending": 0, "keep": 0, "discard": 0}
        splits: dict[str, dict[str, int]] = {}
        for r in state.manifest.records:
            verdict = state.effective_verdict(r.id)
            counts[verdict] += 1
            per = splits.setdefault(r.split, {"pending": 0, "keep": 0, "discard": 0, "total": 0})
            per[verdict] += 1
            per["total"] += 1
        return {**counts, "total": len(state.manifest.records), "splits": splits}

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
