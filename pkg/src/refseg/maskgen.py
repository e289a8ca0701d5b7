"""Ground-truth mask synthesis: category union over resolved class ids, then
per-instance spatial-relation filtering with a buffered (dilated) neighborhood.

Adjacency holds when the instance's buffer ring touches the reference mask.
Containment is scored on the ring as well - the fraction of surrounding
context belonging to the reference class - because classes are mutually
exclusive per pixel, so subset-style containment would never hold."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exprgen import Expression
from .raster import BinaryMask, LabelMap, class_mask, connected_components, dilate
from .taxonomy import Taxonomy, resolve_category, resolve_reference


@dataclass(frozen=True)
class SpatialPredicateConfig:
    """Buffer radius (px), containment thresholds, and instance connectivity."""

    buffer_radius: int = 3
    tau_on: float = 0.5
    tau_surround: float = 0.8
    connectivity: int = 8

    def __post_init__(self):
        if self.buffer_radius < 0:
            raise ValueError(f"buffer_radius must be >= 0, got {self.buffer_radius}")
        if not (0.0 <= self.tau_on <= self.tau_surround <= 1.0):
            raise ValueError(
                f"thresholds must satisfy 0 <= tau_on <= tau_surround <= 1, "
                f"got {self.tau_on}/{self.tau_surround}")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")

    def to_dict(self) -> dict:
        return {
            "buffer_radius": self.buffer_radius,
            "tau_on": self.tau_on,
            "tau_surround": self.tau_surround,
            "connectivity": self.connectivity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpatialPredicateConfig":
        return cls(**d)


def category_mask(label_map: LabelMap, tax: Taxonomy, category: str,
                  attribute: str | None = None) -> BinaryMask:
    """Binary mask of a category (union of its resolved class ids)."""
    return class_mask(label_map, resolve_category(tax, category, attribute))


def _instance_bits(instance: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    bits = np.zeros(dims, dtype=bool)
    bits.flat[instance] = True
    return bits


def ring(instance: np.ndarray, cfg: SpatialPredicateConfig, dims: tuple[int, int]) -> BinaryMask:
    """Buffer ring of an instance: dilation by buffer_radius minus the instance."""
    if instance.size == 0:
        raise ValueError("instance must be non-empty")
    bits = _instance_bits(instance, dims)
    return BinaryMask(dilate(BinaryMask(bits), cfg.buffer_radius).bits & ~bits)


def adjacency_holds(instance: np.ndarray, reference: BinaryMask,
                    cfg: SpatialPredicateConfig) -> bool:
    """True iff the instance's buffer ring intersects the reference mask."""
    band = ring(instance, cfg, (reference.height, reference.width))
    return bool((band.bits & reference.bits).any())


def containment_holds(instance: np.ndarray, reference: BinaryMask,
                      cfg: SpatialPredicateConfig, strength: str) -> bool:
    """True iff the reference fraction of the buffer ring reaches the threshold
    for the requested strength ("on" -> tau_on, "surrounded" -> tau_surround).
    An empty ring counts as fraction 0."""
    if strength not in ("on", "surrounded"):
        raise ValueError(f"strength must be 'on' or 'surrounded', got {strength!r}")
    band = ring(instance, cfg, (reference.height, reference.width))
    total = band.foreground_count
    if total == 0:
        return False
    inside = int(np.count_nonzero(band.bits & reference.bits))
    tau = cfg.tau_on if strength == "on" else cfg.tau_surround
    return inside / total >= tau


def generate_mask(label_map: LabelMap, tax: Taxonomy, e: Expression,
                  cfg: SpatialPredicateConfig) -> BinaryMask:
    """Ground-truth mask for an expression: the category mask directly, or, with
    a spatial relation, the union of instances that satisfy the relation's
    predicate against the reference mask (possibly empty)."""
    cmask = category_mask(label_map, tax, e.category, e.attribute)
    if e.relation is None:
        return cmask
    rel = tax.relation(e.relation)
    reference = class_mask(label_map, resolve_reference(tax, rel.reference))
    instances = connected_components(cmask, cfg.connectivity)
    keep = np.zeros((label_map.height, label_map.width), dtype=bool)
    for inst in instances.instances:
        if rel.kind == "adjacency":
            ok = adjacency_holds(inst, reference, cfg)
        else:
            ok = containment_holds(inst, reference, cfg, rel.strength)
        if ok:
            keep.flat[inst] = True
    return BinaryMask(keep)
