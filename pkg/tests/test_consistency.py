import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lattice_blowup.consistency import (
    NOISE_FLOOR,
    SmoothSampler,
    catalog,
    default_points,
    expansion_residual,
    gaussian_cos,
    linear_in_t,
    polynomial,
    refinement_study,
    scheme_residual,
    truncation_residual,
    write_consistency_csv,
    write_consistency_json,
    zero_sampler,
)

DELTAS = (0.04, 0.02, 0.01)


def constant(d, c):
    def u(t, x):
        return c

    def zero(t, x):
        return 0.0

    return SmoothSampler(f"const_d{d}", d, u, zero, zero)


class TestSamplers:
    @pytest.mark.parametrize("s", catalog((1, 2, 3)), ids=lambda s: s.name)
    def test_self_test(self, s):
        for t, x in default_points(s.d)[:5]:
            assert s.self_test(t, x, 1e-3) < 1e-6

    def test_catalog(self):
        names = [s.name for s in catalog()]
        assert names == ["gaussian_cos_d1", "polynomial_d1", "linear_in_t_d1",
                         "gaussian_cos_d2", "polynomial_d2", "linear_in_t_d2"]

    def test_default_points(self):
        pts = default_points(2)
        assert len(pts) == 27 and all(t > 0 for t, _ in pts)

    def test_amplitude_below_half_threshold(self):
        for s in catalog():
            assert max(abs(s.u(t, x)) for t, x in default_points(s.d)) < 0.5


class TestResidual:
    def test_zero(self):
        s = zero_sampler(2)
        assert truncation_residual(s, 0.3, (0.1, 0.2), 0.1, 3.0) == 0.0

    def test_constant(self):
        # time and space differences vanish; only the nonlinearity mismatch remains
        c, p, dl = 0.2, 3.0, 0.05
        r = truncation_residual(constant(1, c), 0.5, (0.0,), dl, p)
        expected = -(4 * c / (2 - dl * dl * c ** (p - 1)) - 2 * c) / dl**2 + c**p
        assert r == pytest.approx(expected, rel=1e-9)
        assert abs(r) == pytest.approx(dl**2 * c ** (2 * p - 1) / 2, rel=1e-2)

    def test_bad_point(self):
        with pytest.raises(ValueError):
            truncation_residual(gaussian_cos(2), 0.5, (0.0,), 0.1, 3.0)

    def test_denominator(self):
        with pytest.raises(ValueError):
            truncation_residual(constant(1, 5.0), 0.5, (0.0,), 1.0, 2.0)

    @pytest.mark.parametrize("s", [gaussian_cos(1), polynomial(2)], ids=lambda s: s.name)
    def test_halving_ratio(self, s):
        t, x = 0.9, (0.45,) * s.d
        r1, r2 = (abs(truncation_residual(s, t, x, dl, 3.0)) for dl in (0.02, 0.01))
        assert r1 / r2 == pytest.approx(4, rel=0.05)

    @given(st.floats(0.2, 1.5), st.floats(-1, 1), st.sampled_from([1.5, 2.0, 3.0]))
    def test_small_for_small_delta(self, t, x, p):
        assert abs(truncation_residual(gaussian_cos(1), t, (x,), 0.01, p)) < 1e-2


class TestRefinement:
    @pytest.mark.parametrize("s", catalog(), ids=lambda s: s.name)
    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_order_two(self, s, p):
        st_ = refinement_study(s, DELTAS, p=p)
        assert st_.status == "ok" and 1.8 <= st_.slope <= 2.2

    def test_zero_exact(self):
        st_ = refinement_study(zero_sampler(1), DELTAS)
        assert st_.status == "exact" and st_.slope is None

    def test_forms_agree_to_next_order(self):
        def diff(s, t, x, dl, p):
            return (scheme_residual(s, t, x, dl, p) - expansion_residual(s, t, x, dl, p)) / dl**2

        st_ = refinement_study(gaussian_cos(1), DELTAS, residual=diff)
        assert st_.slope >= 1.8

    @pytest.mark.parametrize("deltas", [(0.04, 0.02), (0.04, 0.02, 0.015), (0.01, 0.02, 0.04)])
    def test_rejects(self, deltas):
        with pytest.raises(ValueError):
            refinement_study(gaussian_cos(1), deltas)

    def test_noise_floor(self):
        def tiny(s, t, x, dl, p):
            return NOISE_FLOOR / 2 if dl < 0.03 else 1.0

        st_ = refinement_study(gaussian_cos(1), DELTAS, residual=tiny)
        assert st_.status == "insufficient" and st_.used == [0]


def test_writers():
    studies = [refinement_study(s, DELTAS) for s in (gaussian_cos(1), zero_sampler(1))]
    buf = io.StringIO()
    write_consistency_csv(studies, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "sampler,d,p,delta,max_residual" and len(lines) == 7
    assert lines[1].startswith("gaussian_cos_d1,1,3.0,0.04,")
    buf = io.StringIO()
    write_consistency_json(studies, buf)
    doc = json.loads(buf.getvalue())
    assert [s["status"] for s in doc["studies"]] == ["ok", "exact"]
