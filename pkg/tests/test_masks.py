import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lce.masks import (
    BinaryMask,
    DatasetStats,
    Image,
    area,
    bounding_box,
    composite,
    decode_rle,
    encode_rle,
    overlap_ratio,
    union,
)
from lce.validation import ContractViolationError, EmptyMaskError, IngestionError


def mask_from_rows(rows):
    return BinaryMask(np.array([[ch == "1" for ch in row] for row in rows]))


bool_grids = hnp.arrays(
    dtype=bool,
    shape=st.tuples(st.integers(1, 12), st.integers(1, 12)),
)


class TestArea:
    def test_empty(self):
        assert area(BinaryMask.zeros(4, 4)) == 0

    def test_full(self):
        assert area(BinaryMask.ones(4, 4)) == 16

    def test_checkerboard(self):
        bits = np.indices((4, 4)).sum(axis=0) % 2 == 0
        assert area(BinaryMask(bits)) == 8


class TestOverlapRatio:
    def test_identity(self):
        m = mask_from_rows(["0110", "0110"])
        assert overlap_ratio(m, m) == 1.0

    def test_disjoint(self):
        a = mask_from_rows(["1100", "0000"])
        b = mask_from_rows(["0011", "0000"])
        assert overlap_ratio(a, b) == 0.0

    def test_hand_built_95_percent(self):
        # |a| = 100, |b| = 80, |a & b| = 76 on a 20x20 grid.
        grid = np.arange(400).reshape(20, 20)
        a = BinaryMask(grid < 100)
        b = BinaryMask((grid >= 24) & (grid < 104))
        assert a.pixel_count == 100 and b.pixel_count == 80
        assert np.count_nonzero(a.bits & b.bits) == 76
        assert overlap_ratio(a, b) == 76 / 80 == 0.95

    def test_both_empty_is_zero(self):
        assert overlap_ratio(BinaryMask.zeros(3, 3), BinaryMask.zeros(3, 3)) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolationError):
            overlap_ratio(BinaryMask.ones(3, 3), BinaryMask.ones(4, 3))

    @given(bool_grids, bool_grids.map(lambda a: a))
    def test_symmetric(self, a_bits, b_bits):
        if a_bits.shape != b_bits.shape:
            b_bits = np.resize(b_bits, a_bits.shape)
        a, b = BinaryMask(a_bits), BinaryMask(b_bits)
        assert overlap_ratio(a, b) == overlap_ratio(b, a)


class TestComposite:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.original = Image(rng.uniform(0, 1, (6, 8, 1)).astype(np.float32))
        self.fill = Image(rng.uniform(0, 1, (6, 8, 1)).astype(np.float32))

    def test_keep_all_is_identity(self):
        out = composite(self.original, BinaryMask.ones(8, 6), self.fill)
        assert out == self.original

    def test_keep_none_is_fill(self):
        out = composite(self.original, BinaryMask.zeros(8, 6), self.fill)
        assert out == self.fill

    def test_left_half_pixelwise(self):
        bits = np.zeros((6, 8), dtype=bool)
        bits[:, :4] = True
        out = composite(self.original, BinaryMask(bits), self.fill)
        assert np.array_equal(out.data[:, :4], self.original.data[:, :4])
        assert np.array_equal(out.data[:, 4:], self.fill.data[:, 4:])

    def test_composite_then_restore(self):
        bits = np.zeros((6, 8), dtype=bool)
        bits[2:4, 1:7] = True
        keep = BinaryMask(bits)
        once = composite(self.original, keep, self.fill)
        back = composite(once, keep, self.original)
        assert back == self.original

    def test_channel_mismatch(self):
        rgb = Image(np.zeros((6, 8, 3), dtype=np.float32))
        with pytest.raises(ContractViolationError):
            composite(self.original, BinaryMask.ones(8, 6), rgb)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolationError):
            composite(self.original, BinaryMask.ones(9, 6), self.fill)


class TestUnion:
    def test_idempotent(self):
        m = mask_from_rows(["10", "01"])
        assert union([m, m]) == m

    def test_complementary_halves(self):
        left = mask_from_rows(["10", "10"])
        right = mask_from_rows(["01", "01"])
        assert union([left, right]) == BinaryMask.ones(2, 2)

    def test_order_invariant(self):
        rng = np.random.default_rng(5)
        masks = [BinaryMask(rng.uniform(size=(5, 5)) < 0.4) for _ in range(4)]
        assert union(masks) == union(masks[::-1])

    def test_empty_list_needs_dims(self):
        assert union([], width=3, height=2) == BinaryMask.zeros(3, 2)
        with pytest.raises(ContractViolationError):
            union([])

    @given(st.lists(bool_grids, min_size=1, max_size=4))
    def test_area_subadditive(self, grids):
        shape = grids[0].shape
        masks = [BinaryMask(np.resize(g, shape)) for g in grids]
        total = union(masks)
        assert area(total) <= sum(area(m) for m in masks)
        overlap_free = all(
            not np.any(a.bits & b.bits)
            for i, a in enumerate(masks)
            for b in masks[i + 1 :]
        )
        if overlap_free:
            assert area(total) == sum(area(m) for m in masks)


class TestBoundingBox:
    def test_single_bit(self):
        bits = np.zeros((8, 8), dtype=bool)
        bits[5, 3] = True
        assert bounding_box(BinaryMask(bits)) == (3, 5, 3, 5)

    def test_full(self):
        assert bounding_box(BinaryMask.ones(7, 5)) == (0, 0, 6, 4)

    def test_l_shape_against_scan(self):
        bits = np.zeros((10, 10), dtype=bool)
        bits[2:8, 3] = True
        bits[7, 3:9] = True
        mask = BinaryMask(bits)
        coords = [(x, y) for y in range(10) for x in range(10) if bits[y, x]]
        x1 = min(x for x, _ in coords)
        x2 = max(x for x, _ in coords)
        y1 = min(y for _, y in coords)
        y2 = max(y for _, y in coords)
        assert bounding_box(mask) == (x1, y1, x2, y2)

    def test_empty_raises(self):
        with pytest.raises(EmptyMaskError):
            bounding_box(BinaryMask.zeros(4, 4))


class TestRle:
    @pytest.mark.parametrize(
        "rows, expected",
        [
            (["0011100"], "2 3 2"),
            (["1111"], "0 4"),
            (["0000", "0000", "0000", "0000"], "16"),
            (["10", "01"], "0 1 2 1"),
        ],
    )
    def test_canonical_encoding(self, rows, expected):
        assert encode_rle(mask_from_rows(rows)) == expected

    @given(bool_grids)
    def test_round_trip(self, bits):
        mask = BinaryMask(bits)
        decoded = decode_rle(encode_rle(mask), mask.width, mask.height)
        assert decoded == mask

    def test_decode_validates_total(self):
        with pytest.raises(IngestionError):
            decode_rle("2 3", 4, 4)

    def test_decode_rejects_negative(self):
        with pytest.raises(IngestionError):
            decode_rle("-1 17", 4, 4)


class TestImage:
    def test_rejects_out_of_range(self):
        with pytest.raises(ContractViolationError):
            Image(np.full((2, 2, 1), 1.5, dtype=np.float32))

    def test_rejects_non_finite(self):
        with pytest.raises(IngestionError):
            Image(np.full((2, 2, 1), np.nan, dtype=np.float32))

    def test_from_uint8(self):
        img = Image.from_array(np.array([[0, 255]], dtype=np.uint8))
        assert img.data[0, 0, 0] == 0.0 and img.data[0, 1, 0] == 1.0

    def test_immutable(self):
        img = Image(np.zeros((2, 2, 1), dtype=np.float32))
        with pytest.raises((ValueError, AttributeError)):
            img.data[0, 0, 0] = 1.0


class TestDatasetStats:
    def test_requires_positive_std(self):
        with pytest.raises(ContractViolationError):
            DatasetStats((0.5,), (0.0,))

    def test_channels(self):
        stats = DatasetStats((0.2, 0.3, 0.4), (0.1, 0.1, 0.1))
        assert stats.channels == 3
