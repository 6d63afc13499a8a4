import io
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import frac_field, sparse_fields
from lattice_blowup import (
    Field,
    FieldError,
    field_max,
    field_min,
    field_sum,
    l1_ball_count,
    lattice_points,
    make_field,
    neighbor_average,
    read_snapshots,
    support_radius,
    write_snapshot,
)


def brute_count(d, R):
    return sum(1 for n in itertools.product(range(-R, R + 1), repeat=d) if sum(map(abs, n)) <= R)


class TestMakeField:
    def test_empty(self):
        f = make_field(1, [])
        assert f.radius == 0 and field_sum(f) == 0

    def test_single_entry(self):
        f = make_field(2, [((0, 0), 1.0)])
        assert f.radius == 0 and f[(0, 0)] == 1.0

    def test_radius_is_max_norm(self):
        f = make_field(1, [((2,), 0.5), ((-1,), 1.0)])
        assert f.radius == 2

    def test_zero_values_do_not_widen(self):
        assert make_field(1, [((7,), 0.0), ((1,), 2.0)]).radius == 1

    @pytest.mark.parametrize(
        "d, entries",
        [(2, [((0,), 1.0)]), (1, [((1,), 1.0), ((1,), 2.0)]), (0, [])],
    )
    def test_rejects(self, d, entries):
        with pytest.raises(FieldError):
            make_field(d, entries)

    def test_exact_inferred_from_fractions(self):
        assert make_field(1, [((0,), Fraction(1, 3))]).exact
        assert not make_field(1, [((0,), 0.5)]).exact

    def test_absent_points_read_zero(self):
        f = make_field(2, [((1, 0), 3.0)])
        assert f[(5, 5)] == 0.0 and f[(0, 1)] == 0.0

    def test_arity_checked_on_lookup(self):
        with pytest.raises(FieldError):
            make_field(2, [])[(0,)]

    def test_mixed_modes_rejected(self):
        with pytest.raises(FieldError):
            make_field(1, [((0,), 1.0)]) + frac_field(1, [((0,), 1)])


class TestNeighborAverage:
    def test_point_mass_d1(self):
        v = neighbor_average(make_field(1, [((0,), 1.0)]))
        assert v.radius == 1
        assert v[(1,)] == 0.5 and v[(-1,)] == 0.5 and v[(0,)] == 0.0

    def test_point_mass_d2(self):
        v = neighbor_average(make_field(2, [((0, 0), 1.0)]))
        for n in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
            assert v[n] == 0.25
        assert v[(0, 0)] == 0.0 and v[(1, 1)] == 0.0

    def test_constant_interior(self):
        f = make_field(2, [(n, 3.5) for n in lattice_points(2, 4)])
        v = neighbor_average(f)
        for n in lattice_points(2, 3):
            assert v[n] == 3.5

    @given(sparse_fields())
    def test_mass_preserved_float(self, f):
        a, b = field_sum(f), field_sum(neighbor_average(f))
        scale = math.fsum(abs(x) for x in f.data.reshape(-1))
        assert abs(a - b) <= 4 * np.finfo(float).eps * max(scale, 1.0)

    @given(sparse_fields(exact=True, max_entries=30))
    def test_mass_preserved_exact(self, f):
        assert field_sum(neighbor_average(f)) == field_sum(f)

    @given(sparse_fields())
    def test_cone_growth(self, f):
        assert support_radius(neighbor_average(f)) <= support_radius(f) + 1

    @given(
        sparse_fields(d=2, exact=True, max_entries=20),
        sparse_fields(d=2, exact=True, max_entries=20),
        st.fractions(-3, 3, max_denominator=7),
        st.fractions(-3, 3, max_denominator=7),
    )
    def test_linear(self, f, g, a, b):
        lhs = neighbor_average(f * a + g * b)
        rhs = neighbor_average(f) * a + neighbor_average(g) * b
        assert lhs == rhs


class TestReductions:
    def test_sum_examples(self):
        assert field_sum(Field.zeros(3)) == 0
        assert field_sum(make_field(1, [((0,), 1.0), ((1,), 2.0)])) == 3.0

    def test_sum_exact(self):
        f = frac_field(1, [((0,), Fraction(1, 3)), ((1,), Fraction(1, 6))])
        assert field_sum(f) == Fraction(1, 2)

    def test_sum_order_independent(self):
        vals = [1e16, 1.0, -1e16, 1.0]
        f = make_field(1, [((i,), v) for i, v in enumerate(vals)])
        assert field_sum(f) == 2.0

    def test_max_zero_field(self):
        assert field_max(Field.zeros(2)) == (0.0, (0, 0))

    def test_max_single_negative(self):
        assert field_max(make_field(1, [((0,), -1.0)])) == (-1.0, (0,))

    def test_max_tie_break(self):
        assert field_max(make_field(1, [((-1,), 2.0), ((1,), 2.0)])) == (2.0, (-1,))

    def test_max_counts_implicit_zeros(self):
        assert field_max(make_field(1, [((1,), -1.0)])) == (0.0, (-1,))

    def test_min(self):
        assert field_min(make_field(2, [((0, 1), -2.0), ((1, 0), -2.0)])) == (-2.0, (0, 1))

    def test_max_ignores_box_corners(self):
        # corners of the box lie outside the l1 ball and never count
        f = make_field(2, [((1, 0), -1.0), ((0, 1), -1.0), ((-1, 0), -1.0), ((0, -1), -1.0), ((0, 0), -1.0)])
        assert field_max(f) == (-1.0, (-1, 0))

    def test_support_radius(self):
        assert support_radius(Field.zeros(2)) == 0
        assert support_radius(make_field(2, [((1, 1), 3.0)])) == 2
        assert support_radius(make_field(2, [((3, 0), 0.0), ((1, 0), 1.0)])) == 1


class TestBallCount:
    @pytest.mark.parametrize("d, R, n", [(1, 2, 5), (2, 1, 5), (3, 2, 25), (1, 0, 1), (4, 0, 1)])
    def test_examples(self, d, R, n):
        assert l1_ball_count(d, R) == n

    def test_matches_enumeration(self):
        for d in range(1, 5):
            for R in range(13):
                assert l1_ball_count(d, R) == brute_count(d, R)

    def test_big_values_exact(self):
        # Python integers never overflow; compare with an independent recursion
        def rec(d, R):
            if d == 1:
                return 2 * R + 1
            return sum(rec(d - 1, R - abs(i)) for i in range(-R, R + 1))

        assert l1_ball_count(3, 40) == rec(3, 40)
        assert l1_ball_count(12, 10**6) > 2**63

    def test_rejects(self):
        with pytest.raises(ValueError):
            l1_ball_count(0, 1)
        with pytest.raises(ValueError):
            l1_ball_count(2, -1)

    @given(st.integers(1, 4), st.integers(0, 6))
    def test_lattice_points_lex_and_complete(self, d, R):
        pts = list(lattice_points(d, R))
        assert pts == sorted(pts)
        assert len(pts) == len(set(pts)) == l1_ball_count(d, R)


class TestFieldOps:
    def test_expand_keeps_values(self):
        f = make_field(2, [((1, 0), 2.0)])
        g = f.expand(4)
        assert g.radius == 4 and g == f and g[(1, 0)] == 2.0

    def test_expand_cannot_shrink(self):
        with pytest.raises(FieldError):
            make_field(1, [((2,), 1.0)]).expand(1)

    def test_trim(self):
        f = make_field(2, [((1, 0), 2.0)]).expand(5).trim()
        assert f.radius == 1 and f[(1, 0)] == 2.0

    def test_outside_ball_zeroed(self):
        data = np.ones((3, 3))
        f = Field(2, 1, data)
        assert f.data[0, 0] == 0.0 and field_sum(f) == 5.0

    def test_immutable(self):
        f = make_field(1, [((0,), 1.0)])
        with pytest.raises(ValueError):
            f.data[0] = 2.0

    def test_exact_roundtrip(self):
        f = make_field(1, [((0,), 0.1)])
        assert f.to_exact().to_float() == f
        assert f.to_exact()[(0,)] == Fraction(0.1)

    def test_items_lex_order(self):
        f = make_field(2, [((1, 0), 1.0), ((-1, 0), 2.0), ((0, 1), 3.0)])
        assert [n for n, _ in f.items()] == [(-1, 0), (0, 1), (1, 0)]


class TestSnapshots:
    @given(sparse_fields(max_entries=20))
    def test_roundtrip(self, f):
        buf = io.StringIO()
        write_snapshot(f, buf, tau=3)
        write_snapshot(f * 2.0, buf)
        buf.seek(0)
        a, b = read_snapshots(buf)
        assert a == f and b == f * 2.0
        assert a.radius == f.radius

    def test_header_format(self):
        buf = io.StringIO()
        write_snapshot(make_field(2, [((1, -1), 0.5)]), buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == '{"d": 2, "radius": 2}'
        assert lines[1] == '{"n": [1, -1], "v": 0.5}'

    def test_entry_before_header(self):
        with pytest.raises(FieldError):
            read_snapshots(io.StringIO('{"n": [0], "v": 1.0}\n'))
