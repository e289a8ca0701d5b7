"""Acceptance suite: one test per release criterion, each printing a pass/fail
line (run with `pytest tests/test_acceptance.py -v -s`). Tolerances and time
budgets are asserted inside the tests themselves."""

from __future__ import annotations

import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from refseg import cli, dataset, lgce
from refseg.dataset import (
    Manifest,
    TripletRecord,
    apply_verdicts,
    assemble,
    load_manifest,
    save_manifest,
    split_by_scene,
)
from refseg.exprgen import Expression, enumerate_expressions
from refseg.maskgen import SpatialPredicateConfig, generate_mask
from refseg.metrics import EvalSample, evaluate_samples, intersection_union
from refseg.raster import BinaryMask, LabelMap, TileSpec, connected_components, dilate, save_mask, tile_crops
from refseg.taxonomy import default_taxonomy

from oracles import (
    brute_dilate,
    flood_fill_components,
    oracle_generate_mask,
    oracle_report,
    pixel_metrics,
    random_label_map,
)

# bundled-taxonomy class ids used to build synthetic scenes
LOW_VEG, PAVED_ROAD, NONPAVED_ROAD = 0, 1, 2
PAVED_PARKING, NONPAVED_PARKING = 3, 4
BUILDING, CAR, VAN, TRUCK, TREE = 10, 11, 13, 14, 19
SCENE_IDS = [PAVED_ROAD, NONPAVED_ROAD, PAVED_PARKING, CAR, VAN, BUILDING, TREE, TRUCK]


@contextmanager
def criterion(name: str, budget_seconds: float | None = None):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[acceptance] FAIL {name}")
        raise
    elapsed = time.perf_counter() - t0
    if budget_seconds is not None:
        assert elapsed < budget_seconds, f"{name}: {elapsed:.1f}s exceeds {budget_seconds:.0f}s"
        print(f"[acceptance] PASS {name} ({elapsed:.1f}s < {budget_seconds:.0f}s)")
    else:
        print(f"[acceptance] PASS {name}")


def test_mask_pipeline_oracle():
    """200 randomized label maps (<=64x64, <=6 classes), all relation kinds:
    generate_mask is bit-identical to the flood-fill + exhaustive-distance oracle."""
    with criterion("mask-pipeline-oracle", budget_seconds=30):
        tax = default_taxonomy()
        cfg = SpatialPredicateConfig(buffer_radius=2)
        rng = np.random.default_rng(2024)
        relation_pool = [e for e in enumerate_expressions(tax) if e.relation is not None]
        plain_pool = [e for e in enumerate_expressions(tax) if e.relation is None]
        covered_relations: set[str] = set()
        covered_kinds: set[str] = set()
        for i in range(200):
            side = int(rng.integers(32, 65))
            ids = list(rng.choice(SCENE_IDS, size=5, replace=False))
            pixels = random_label_map(rng, side, ids, LOW_VEG, blobs=7)
            m = LabelMap(pixels)
            sampled = list(rng.choice(relation_pool, size=8, replace=False))
            sampled += list(rng.choice(plain_pool, size=2, replace=False))
            for e in sampled:
                got = generate_mask(m, tax, e, cfg)
                expected = oracle_generate_mask(pixels, tax, e.category, e.attribute,
                                                e.relation, cfg)
                assert np.array_equal(got.bits, expected), f"map {i}: {e.text}"
                if e.relation is not None:
                    covered_relations.add(e.relation)
                    covered_kinds.add(tax.relation(e.relation).kind)
        assert covered_relations == {r.name for r in tax.relations}
        assert covered_kinds == {"adjacency", "containment"}


def test_morphology_and_metrics_exactness():
    """connected_components, dilate, and every metric match brute-force
    per-pixel oracles with zero tolerance on 500 random cases."""
    with criterion("morphology-metrics-exactness", budget_seconds=30):
        rng = np.random.default_rng(7)
        metric_pairs = []
        for i in range(500):
            bits = rng.random((32, 32)) < rng.uniform(0.05, 0.7)
            connectivity = 4 if i % 2 == 0 else 8
            got = connected_components(BinaryMask(bits), connectivity)
            assert [g.tolist() for g in got.instances] == flood_fill_components(bits, connectivity)
            radius = int(rng.integers(1, 4))
            assert np.array_equal(dilate(BinaryMask(bits), radius).bits,
                                  brute_dilate(bits, radius))
            pred = rng.random((32, 32)) < rng.uniform(0.1, 0.9)
            gt = rng.random((32, 32)) < rng.uniform(0.1, 0.9)
            assert intersection_union(BinaryMask(pred), BinaryMask(gt)) == pixel_metrics(pred, gt)
            metric_pairs.append((pred, gt))
        thresholds = (0.5, 0.6, 0.7, 0.8, 0.9)
        samples = [EvalSample(BinaryMask(p), BinaryMask(g), str(i))
                   for i, (p, g) in enumerate(metric_pairs)]
        report = evaluate_samples(samples, thresholds)
        expected = oracle_report(metric_pairs, thresholds)
        assert report.oiou == expected["oiou"]
        assert report.miou == expected["miou"]
        assert report.pr == expected["pr"]


def _masks_with_counts(inter: int, union: int) -> tuple[BinaryMask, BinaryMask]:
    pred = np.zeros((1, union + 1), dtype=bool)
    gt = np.zeros((1, union + 1), dtype=bool)
    pred[0, :union] = True
    gt[0, :inter] = True
    return BinaryMask(pred), BinaryMask(gt)


def test_metric_contrast_fixture():
    """(2,4) and (9,10) intersections/unions: mIoU = 7/10 and oIoU = 11/14,
    the size-weighting contrast between the two aggregates. Exact rationals."""
    with criterion("metric-contrast-fixture"):
        counts = [(2, 4), (9, 10)]
        samples = [EvalSample(*_masks_with_counts(i, u), str(k))
                   for k, (i, u) in enumerate(counts)]
        pairs = [intersection_union(s.pred, s.gt) for s in samples]
        assert pairs == counts
        miou_exact = sum(Fraction(i, u) for i, u in pairs) / len(pairs)
        oiou_exact = Fraction(sum(i for i, _ in pairs), sum(u for _, u in pairs))
        assert miou_exact == Fraction(7, 10)
        assert oiou_exact == Fraction(11, 14)
        report = evaluate_samples(samples)
        assert report.miou == float(Fraction(7, 10))
        assert report.oiou == float(Fraction(11, 14))


def test_lgce_gradient_suite():
    """Central finite differences (h=1e-5, rel err < 1e-4, abs floor 1e-7) over
    every parameter group and both visual inputs, fixture config, 5 seeds."""
    with criterion("lgce-gradient-suite", budget_seconds=120):
        result = lgce.check_finite_difference(seeds=5, h=1e-5, rel_tol=1e-4, abs_floor=1e-7)
        assert result.passed, result.detail


def test_lgce_structural_invariants():
    """Shape contract over 50 random configs, identity-at-zero, bit-exact word
    permutation and split/concat inverses, attention rows sum to 1 +- 1e-12."""
    with criterion("lgce-structural-invariants", budget_seconds=60):
        for check in (lgce.check_shape_contract(seed=1, trials=50),
                      lgce.check_identity_at_zero(1),
                      lgce.check_word_permutation(1),
                      lgce.check_split_concat_inverse(1),
                      lgce.check_attention_rows(1, tol=1e-12)):
            assert check.passed, f"{check.name}: {check.detail}"


def _toy_manifest(n_scenes: int) -> Manifest:
    records = []
    for s in range(n_scenes):
        records.append(TripletRecord(
            id=f"s{s}__car", scene_id=f"s{s}", image_path="i.png", label_path="l.png",
            mask_path="m.png", expression=Expression("car", None, None, "car")))
    return Manifest(records=records, config=SpatialPredicateConfig(), taxonomy_hash="h")


def test_dataset_invariants(tmp_path):
    """Scene-disjoint splits over 100 draws, manifest round-trip, verdict replay
    determinism, and the 285-scene reference split 151/31/103."""
    with criterion("dataset-invariants", budget_seconds=10):
        import random as pyrandom

        rng = pyrandom.Random(3)
        for draw in range(100):
            m = _toy_manifest(rng.randint(3, 60))
            out = split_by_scene(m, (0.6, 0.2, 0.2), seed=draw)
            for splits in out.scene_splits().values():
                assert len(splits) == 1

        tax = default_taxonomy()
        scenes = []
        gen = np.random.default_rng(0)
        for i in range(2):
            pixels = random_label_map(gen, 24, [PAVED_ROAD, CAR, BUILDING, TREE], LOW_VEG)
            scenes.append((f"scene{i}", LabelMap(pixels), None))
        built = assemble(scenes, tax, SpatialPredicateConfig(), tmp_path / "d")
        path = tmp_path / "d" / "manifest.jsonl"
        save_manifest(built, path)
        loaded = load_manifest(path)
        assert loaded.records == built.records
        assert loaded.config == built.config
        assert loaded.taxonomy_hash == built.taxonomy_hash

        ids = [r.id for r in built.records]
        log = [(ids[i % len(ids)], "keep" if i % 3 else "discard") for i in range(40)]
        once = apply_verdicts(built, log)
        twice = apply_verdicts(built, list(log))
        assert [r.verdict for r in once.records] == [r.verdict for r in twice.records]
        final = {}
        for i, v in log:
            final[i] = v
        for r in once.records:
            assert r.verdict == final.get(r.id, "pending")

        reference = _toy_manifest(285)
        for fractions in [(151 / 285, 31 / 285, 103 / 285), (0.53, 0.11, 0.36)]:
            out = split_by_scene(reference, fractions, seed=11)
            counts = {"train": 0, "val": 0, "test": 0}
            for splits in out.scene_splits().values():
                counts[next(iter(splits))] += 1
            assert (counts["train"], counts["val"], counts["test"]) == (151, 31, 103)


def test_tiling_arithmetic():
    """A full source tile (5616x3744) under window 1200 / stride 600 yields
    exactly 40 full crops."""
    with criterion("tiling-arithmetic"):
        crops = tile_crops((5616, 3744), TileSpec(window=1200, stride=600, output_side=512))
        assert len(crops) == 40
        assert len({(x, y) for x, y, _ in crops}) == 40


def test_report_format(tmp_path, capsys):
    """The evaluate command prints the seven benchmark columns in order and the
    values match hand-computed numbers to 4 decimal places on a 6-pair fixture."""
    with criterion("report-format"):
        counts = [(10, 10), (9, 10), (3, 4), (3, 5), (1, 2), (1, 4)]
        data_dir = tmp_path / "fx"
        (data_dir / "masks").mkdir(parents=True)
        pred_dir = tmp_path / "pred"
        pred_dir.mkdir()
        records = []
        for k, (inter, union) in enumerate(counts):
            pred, gt = _masks_with_counts(inter, union)
            rec_id = f"fixture__{k}"
            save_mask(gt, data_dir / "masks" / f"{rec_id}.png")
            save_mask(pred, pred_dir / f"{rec_id}.png")
            records.append(TripletRecord(
                id=rec_id, scene_id=f"sc{k}", image_path="i.png", label_path="l.png",
                mask_path=f"masks/{rec_id}.png",
                expression=Expression("car", None, None, "car"),
                split="test",
                foreground_ratio=gt.foreground_count / (gt.height * gt.width)))
        manifest = Manifest(records=records, config=SpatialPredicateConfig(),
                            taxonomy_hash="fx", root=data_dir)
        save_manifest(manifest, data_dir / "manifest.jsonl")

        code = cli.main(["evaluate", "--pred", str(pred_dir),
                         "--manifest", str(data_dir / "manifest.jsonl"),
                         "--split", "test", "--out", str(tmp_path / "eval")])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].split() == ["Pr@0.5", "Pr@0.6", "Pr@0.7", "Pr@0.8", "Pr@0.9",
                                    "oIoU", "mIoU"]
        # ious: 1.0, 0.9, 0.75, 0.6, 0.5, 0.25 -> strict Pr; oIoU 27/35; mIoU 4/6
        assert lines[1].split() == ["0.6667", "0.5000", "0.5000", "0.3333", "0.1667",
                                    "0.7714", "0.6667"]
