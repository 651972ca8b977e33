import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewreserve import (
    FUTURE,
    HOLDOUT,
    OBSERVED,
    TriangleError,
    calendar_index,
    cumulative,
    holdout_split,
    load_chan2008,
    log_transform,
    parse_triangle,
    serialize_triangle,
    summary_stats,
)

LONG3 = "accident_year,dev_year,amount\n1,1,100\n1,2,50\n2,1,200\n"


class TestParse:
    def test_smallest_complete_triangle(self, tiny_triangle):
        t = tiny_triangle
        assert t.n == 2
        assert t.mask_name(1, 1) == "observed"
        assert t.mask_name(1, 2) == "observed"
        assert t.mask_name(2, 1) == "observed"
        assert t.mask_name(2, 2) == "future"
        assert t.amounts[0, 0] == 100 and t.amounts[0, 1] == 50 and t.amounts[1, 0] == 200
        assert np.isnan(t.amounts[1, 1])

    def test_chan2008_shape(self, chan):
        assert chan.n == 18
        assert chan.origin_year == 1978
        assert sum(1 for _ in chan.cells(tags=(OBSERVED,))) == 171
        assert chan.amounts[0, 13] == 0.0  # the 1978 dev-14 zero cell
        assert chan.amounts[17, 0] == 2827.0

    def test_duplicate_cell_reports_both_rows(self):
        text = "accident_year,dev_year,amount\n1,1,100\n1,2,50\n2,1,200\n1,1,7\n"
        with pytest.raises(TriangleError, match=r"rows 2 and 5"):
            parse_triangle(text)

    def test_negative_amount_rejected(self):
        with pytest.raises(TriangleError, match="negative"):
            parse_triangle("accident_year,dev_year,amount\n1,1,-3\n")

    def test_incomplete_triangle_rejected(self):
        with pytest.raises(TriangleError, match="incomplete"):
            parse_triangle("accident_year,dev_year,amount\n1,1,100\n2,1,200\n")

    def test_wide_roundtrip_and_ragged_rejection(self, tiny_triangle):
        wide = serialize_triangle(tiny_triangle, "wide-csv")
        again = parse_triangle(wide, "wide-csv")
        assert np.array_equal(again.mask, tiny_triangle.mask)
        ragged = "1,100,50,3\n2,200,\n"
        with pytest.raises(TriangleError, match="dev columns"):
            parse_triangle(ragged, "wide-csv")

    @given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=25, deadline=None)
    def test_long_roundtrip_bit_exact(self, n, seed):
        rng = np.random.default_rng(seed)
        lines = ["accident_year,dev_year,amount"]
        for i in range(1, n + 1):
            for j in range(1, n - i + 2):
                lines.append(f"{1990 + i},{j},{float(rng.uniform(0, 1e6))!r}")
        text = "\n".join(lines) + "\n"
        tri = parse_triangle(text)
        assert serialize_triangle(tri, "long-csv") == text
        wide = serialize_triangle(tri, "wide-csv")
        tri2 = parse_triangle(wide, "wide-csv")
        assert np.array_equal(
            tri2.amounts[~np.isnan(tri2.amounts)], tri.amounts[~np.isnan(tri.amounts)]
        )


class TestLogTransform:
    def test_log_identity_both_policies(self, tiny_triangle):
        for policy in ("drop", ("offset", 1.0)):
            text = f"accident_year,dev_year,amount\n1,1,{math.e!r}\n1,2,1\n2,1,1\n"
            lt = log_transform(parse_triangle(text), policy)
            assert lt.values[0, 0] == pytest.approx(1.0)

    def test_chan_zero_drop_records_cells(self, chan):
        lt = log_transform(chan, "drop")
        assert lt.zero_policy["policy"] == "drop"
        assert sorted(lt.zero_policy["cells"]) == [(1, 14), (2, 17)]
        assert np.isnan(lt.values[0, 13])
        # 171 cells minus the two dropped zeros
        assert sum(1 for _ in lt.cells(tags=(OBSERVED, HOLDOUT))) == 169

    def test_offset_zero_maps_to_log_one(self, chan):
        lt = log_transform(chan, ("offset", 1.0))
        assert lt.values[0, 13] == 0.0
        assert lt.zero_policy["offset"] == 1.0


class TestHoldoutSplit:
    def test_chan_training_91_cells(self, chan):
        split = holdout_split(chan, 5)
        assert sum(1 for _ in split.cells(tags=(OBSERVED,))) == 91
        assert sum(1 for _ in split.cells(tags=(HOLDOUT,))) == 80

    def test_k0_identity(self, chan):
        split = holdout_split(holdout_split(chan, 5), 0)
        assert np.array_equal(split.mask, chan.mask)

    def test_n3_k1_diagonal(self):
        text = "accident_year,dev_year,amount\n" + "\n".join(
            f"{i},{j},1" for i in range(1, 4) for j in range(1, 5 - i)
        )
        split = holdout_split(parse_triangle(text), 1)
        held = {(i, j) for i, j, _ in split.cells(tags=(HOLDOUT,))}
        assert held == {(1, 3), (2, 2), (3, 1)}

    def test_k_out_of_range(self, tiny_triangle):
        with pytest.raises(TriangleError):
            holdout_split(tiny_triangle, 2)

    @given(st.integers(min_value=2, max_value=9), st.data())
    @settings(max_examples=30, deadline=None)
    def test_mask_rule(self, n, data):
        k = data.draw(st.integers(min_value=0, max_value=n - 1))
        text = "accident_year,dev_year,amount\n" + "\n".join(
            f"{i},{j},1" for i in range(1, n + 1) for j in range(1, n - i + 2)
        )
        split = holdout_split(parse_triangle(text), k)
        for i in range(1, n + 1):
            for j in range(1, n - i + 2):
                expected = HOLDOUT if i + j - 1 > n - k else OBSERVED
                assert split.mask[i - 1, j - 1] == expected


class TestCumulative:
    def test_running_sum(self, tiny_triangle):
        c = cumulative(tiny_triangle)
        assert c.amounts[0, 0] == 100 and c.amounts[0, 1] == 150 and c.amounts[1, 0] == 200

    def test_single_cell_row_identity(self, chan):
        assert cumulative(chan).amounts[17, 0] == 2827.0

    def test_monotone_for_nonnegative(self, chan):
        c = cumulative(chan)
        for i in range(1, chan.n + 1):
            row = c.amounts[i - 1, : chan.n - i + 1]
            assert np.all(np.diff(row) >= 0)


def test_calendar_index():
    assert calendar_index(1, 1) == 1
    assert calendar_index(2, 6) == 7
    assert calendar_index(18, 1, n=18) == 18
    with pytest.raises(TriangleError):
        calendar_index(0, 1)
    with pytest.raises(TriangleError):
        calendar_index(3, 5, n=4)


def test_summary_stats_convention():
    z = np.array([1.0, 2.0, 3.0, 4.0])
    s = summary_stats(z)
    assert s["mean"] == 2.5
    assert s["median"] == 2.5
    assert s["sd"] == pytest.approx(np.std(z, ddof=1))
    assert s["skewness"] == pytest.approx(0.0)
