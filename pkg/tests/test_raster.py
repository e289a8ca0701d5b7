from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp
from PIL import Image

from refseg.raster import (
    BinaryMask,
    DecodeError,
    EmptyIdSet,
    LabelMap,
    NonSquareInput,
    TileSpec,
    UnknownClassId,
    WindowTooLarge,
    class_mask,
    connected_components,
    crop_label_map,
    dilate,
    load_label_map,
    load_mask,
    resample_labels,
    save_mask,
    tile_crops,
)
from refseg.taxonomy import default_taxonomy

from oracles import brute_dilate, flood_fill_components


@pytest.fixture(scope="module")
def tax():
    return default_taxonomy()


def _mask(bits) -> BinaryMask:
    return BinaryMask(np.asarray(bits, dtype=bool))


class TestLoadLabelMap:
    def test_identity_decode(self, tmp_path, tax):
        path = tmp_path / "flat.png"
        Image.fromarray(np.zeros((2, 2), dtype=np.uint8), mode="L").save(path)
        m = load_label_map(path, tax)
        assert (m.width, m.height) == (2, 2)
        assert m.pixels.tolist() == [[0, 0], [0, 0]]

    def test_unknown_class_id_reports_coordinates(self, tmp_path, tax):
        pixels = np.zeros((3, 4), dtype=np.uint8)
        pixels[1, 2] = 99
        path = tmp_path / "bad.png"
        Image.fromarray(pixels, mode="L").save(path)
        with pytest.raises(UnknownClassId) as err:
            load_label_map(path, tax)
        assert err.value.value == 99
        assert (err.value.row, err.value.col) == (1, 2)

    def test_rejects_multichannel(self, tmp_path, tax):
        path = tmp_path / "rgb.png"
        Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8), mode="RGB").save(path)
        with pytest.raises(DecodeError):
            load_label_map(path, tax)

    def test_full_tile_pixel_count(self, tmp_path, tax):
        # full source tiles are 5616x3744
        pixels = np.zeros((3744, 5616), dtype=np.uint8)
        path = tmp_path / "tile.png"
        Image.fromarray(pixels, mode="L").save(path)
        m = load_label_map(path, tax)
        assert m.width * m.height == 21_026_304


class TestMaskIo:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        mask = _mask(rng.random((13, 9)) < 0.4)
        save_mask(mask, tmp_path / "m.png")
        assert load_mask(tmp_path / "m.png") == mask

    def test_values_are_0_and_255(self, tmp_path):
        save_mask(_mask([[1, 0]]), tmp_path / "m.png")
        raw = np.asarray(Image.open(tmp_path / "m.png"))
        assert sorted(set(raw.ravel().tolist())) == [0, 255]


class TestClassMask:
    def test_direct_membership(self):
        m = LabelMap(np.array([[2, 1], [1, 3]], dtype=np.uint8))
        assert class_mask(m, {2, 3}).bits.tolist() == [[True, False], [False, True]]

    def test_all_ids_gives_full_foreground(self, tax):
        rng = np.random.default_rng(0)
        m = LabelMap(rng.integers(0, 20, size=(16, 16)).astype(np.uint8))
        assert class_mask(m, tax.class_ids()).foreground_count == 256

    def test_empty_id_set(self):
        with pytest.raises(EmptyIdSet):
            class_mask(LabelMap(np.zeros((2, 2), dtype=np.uint8)), set())

    def test_union_is_or_of_singletons(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            m = LabelMap(rng.integers(0, 6, size=(64, 64)).astype(np.uint8))
            a, b = 1, 4
            union = class_mask(m, {a, b})
            expected = class_mask(m, {a}).bits | class_mask(m, {b}).bits
            assert np.array_equal(union.bits, expected)


class TestConnectedComponents:
    def test_two_components(self):
        bits = np.zeros((4, 4), dtype=bool)
        bits[0, 0] = bits[0, 1] = bits[3, 3] = True
        assert len(connected_components(_mask(bits), 4)) == 2

    def test_diagonal_adjacency(self):
        bits = np.zeros((3, 3), dtype=bool)
        bits[0, 0] = bits[1, 1] = True
        assert len(connected_components(_mask(bits), 8)) == 1
        assert len(connected_components(_mask(bits), 4)) == 2

    def test_empty_mask(self):
        assert len(connected_components(_mask(np.zeros((3, 3))), 8)) == 0

    @pytest.mark.parametrize("connectivity", [4, 8])
    def test_matches_flood_fill_oracle(self, connectivity):
        rng = np.random.default_rng(11)
        for _ in range(200):
            bits = rng.random((32, 32)) < rng.uniform(0.2, 0.7)
            got = connected_components(_mask(bits), connectivity)
            expected = flood_fill_components(bits, connectivity)
            assert [g.tolist() for g in got.instances] == expected

    def test_partition_covers_foreground(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            bits = rng.random((24, 24)) < 0.5
            inst = connected_components(_mask(bits), 8)
            union = np.zeros(24 * 24, dtype=bool)
            total = 0
            for idx in inst.instances:
                assert not union[idx].any()  # disjoint
                union[idx] = True
                total += idx.size
            assert total == int(bits.sum())
            assert np.array_equal(union.reshape(24, 24), bits)


class TestDilate:
    def test_single_pixel_radius_one(self):
        bits = np.zeros((5, 5), dtype=bool)
        bits[2, 2] = True
        out = dilate(_mask(bits), 1)
        expected = np.zeros((5, 5), dtype=bool)
        expected[1:4, 1:4] = True
        assert np.array_equal(out.bits, expected)

    def test_radius_zero_is_identity(self):
        rng = np.random.default_rng(1)
        bits = rng.random((8, 8)) < 0.3
        assert np.array_equal(dilate(_mask(bits), 0).bits, bits)

    @pytest.mark.parametrize("radius", [1, 2, 3])
    def test_matches_distance_oracle(self, radius):
        rng = np.random.default_rng(radius)
        for _ in range(200):
            bits = rng.random((32, 32)) < 0.1
            if not bits.any():
                continue
            assert np.array_equal(dilate(_mask(bits), radius).bits, brute_dilate(bits, radius))

    def test_monotone_and_extensive(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            bits = rng.random((20, 20)) < 0.2
            m = _mask(bits)
            small = dilate(m, 1).bits
            big = dilate(m, 3).bits
            assert (bits <= small).all()  # extensive
            assert (small <= big).all()  # monotone in radius


class TestTileCrops:
    def test_full_tile_yields_40_crops(self):
        crops = tile_crops((5616, 3744), TileSpec(window=1200, stride=600, output_side=512))
        assert len(crops) == 40

    def test_exact_fit(self):
        assert tile_crops((1200, 1200), TileSpec(1200, 600, 512)) == [(0, 0, 1200)]

    def test_window_too_large(self):
        with pytest.raises(WindowTooLarge):
            tile_crops((1000, 1000), TileSpec(1200, 600, 512))

    def test_count_formula_and_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            w, h = int(rng.integers(10, 200)), int(rng.integers(10, 200))
            window = int(rng.integers(1, min(w, h) + 1))
            stride = int(rng.integers(1, window + 1))
            crops = tile_crops((w, h), TileSpec(window, stride, 8))
            nx = (w - window) // stride + 1
            ny = (h - window) // stride + 1
            assert len(crops) == nx * ny
            for x, y, side in crops:
                assert 0 <= x and x + side <= w
                assert 0 <= y and y + side <= h

    def test_crop_extraction(self):
        m = LabelMap(np.arange(36, dtype=np.uint8).reshape(6, 6))
        crop = crop_label_map(m, (2, 1, 3))
        assert np.array_equal(crop.pixels, m.pixels[1:4, 2:5])


class TestProperties:
    """Hypothesis-driven invariants over arbitrary masks and id sets."""

    @given(bits=hnp.arrays(bool, (12, 12)), radius=st.integers(0, 4))
    @settings(max_examples=60, deadline=None)
    def test_dilation_extensive_and_monotone(self, bits, radius):
        m = _mask(bits)
        grown = dilate(m, radius)
        assert (bits <= grown.bits).all()
        assert (grown.bits <= dilate(m, radius + 1).bits).all()

    @given(pixels=hnp.arrays(np.uint8, (10, 10), elements=st.integers(0, 5)),
           a=st.sets(st.integers(0, 5), min_size=1, max_size=3),
           b=st.sets(st.integers(0, 5), min_size=1, max_size=3))
    @settings(max_examples=60, deadline=None)
    def test_class_mask_union_distributes(self, pixels, a, b):
        m = LabelMap(pixels)
        union = class_mask(m, a | b).bits
        assert np.array_equal(union, class_mask(m, a).bits | class_mask(m, b).bits)

    @given(bits=hnp.arrays(bool, (10, 10)), connectivity=st.sampled_from([4, 8]))
    @settings(max_examples=60, deadline=None)
    def test_components_partition_foreground(self, bits, connectivity):
        inst = connected_components(_mask(bits), connectivity)
        covered = np.zeros(100, dtype=bool)
        for idx in inst.instances:
            assert not covered[idx].any()
            covered[idx] = True
        assert np.array_equal(covered.reshape(10, 10), bits)


class TestResampleLabels:
    def test_constant_field(self):
        m = LabelMap(np.full((4, 4), 7, dtype=np.uint8))
        out = resample_labels(m, 2)
        assert np.array_equal(out.pixels, np.full((2, 2), 7, dtype=np.uint8))

    def test_identity(self):
        m = LabelMap(np.array([[1, 2], [3, 4]], dtype=np.uint8))
        assert resample_labels(m, 2) == m

    def test_non_square_rejected(self):
        with pytest.raises(NonSquareInput):
            resample_labels(LabelMap(np.zeros((2, 3), dtype=np.uint8)), 2)

    def test_index_mapping(self):
        rng = np.random.default_rng(4)
        src = LabelMap(rng.integers(0, 255, size=(1200, 1200)).astype(np.uint8))
        out = resample_labels(src, 512)
        assert (out.height, out.width) == (512, 512)
        for r, c in rng.integers(0, 512, size=(50, 2)).tolist():
            assert out.pixels[r, c] == src.pixels[(r * 1200) // 512, (c * 1200) // 512]
