import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from token2wave.diagnostics import grad_check, PointRejectedError
from token2wave.exceptions import ConsistencyError, DimensionError
from token2wave.tensor_core import make_rng
from token2wave.wave_repr import (
    WaveRepr,
    compute_global_semantics,
    compute_phase,
    restore_embedding,
    to_cartesian,
    token2wave,
    vjp_wave_repr,
)

# atan2(0.8, 0.6) to double precision (mpmath, 30 digits: 0.927295218001612232428512462922)
ALPHA_3_4_5 = 0.9272952180016122

embeddings = arrays(
    np.float64,
    st.tuples(st.integers(1, 8), st.integers(1, 8)),
    elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False),
)


class TestGlobalSemantics:
    def test_three_four_five(self):
        np.testing.assert_array_equal(compute_global_semantics([[3.0, 0.0], [4.0, 0.0]]), [5.0, 0.0])

    def test_single_token(self):
        np.testing.assert_array_equal(compute_global_semantics([[-2.5]]), [2.5])

    def test_zero(self):
        np.testing.assert_array_equal(compute_global_semantics(np.zeros((3, 4))), np.zeros(4))

    def test_mask_drops_rows(self):
        e = np.array([[3.0, 1.0], [4.0, 1.0], [100.0, -7.0]])
        g = compute_global_semantics(e, mask=[True, True, False])
        np.testing.assert_allclose(g, [5.0, np.sqrt(2)])

    def test_batched(self):
        e = make_rng(0).standard_normal((3, 5, 4))
        g = compute_global_semantics(e)
        for b in range(3):
            np.testing.assert_allclose(g[b], np.linalg.norm(e[b], axis=0))

    @pytest.mark.parametrize("bad", [np.zeros(3), np.zeros((0, 2)), np.zeros((2, 0))])
    def test_bad_shapes(self, bad):
        with pytest.raises(DimensionError):
            compute_global_semantics(bad)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            compute_global_semantics([[np.inf, 1.0]])


class TestPhase:
    def test_three_four_five(self):
        alpha = compute_phase([[3.0], [4.0]], np.array([5.0]))
        assert alpha[0, 0] == pytest.approx(ALPHA_3_4_5, abs=1e-15)

    def test_ratio_one(self):
        assert compute_phase([[2.0]], np.array([2.0]))[0, 0] == 0.0

    def test_ratio_minus_one(self):
        assert compute_phase([[-2.0]], np.array([2.0]))[0, 0] == pytest.approx(np.pi)

    def test_zero_column(self):
        alpha = compute_phase(np.zeros((2, 1)), np.zeros(1))
        np.testing.assert_array_equal(alpha, 0.0)

    def test_inconsistent_magnitude(self):
        with pytest.raises(ConsistencyError):
            compute_phase([[3.0], [4.0]], np.array([3.5]))

    def test_magnitude_shape(self):
        with pytest.raises(DimensionError):
            compute_phase([[3.0], [4.0]], np.array([5.0, 1.0]))

    def test_range(self):
        e = make_rng(1).standard_normal((6, 5))
        alpha = WaveRepr.from_embedding(e).phase
        assert np.all((alpha >= 0) & (alpha <= np.pi))


class TestCartesian:
    def test_three_four_five(self):
        real, imag = to_cartesian(WaveRepr.from_embedding([[3.0, 0.0], [4.0, 0.0]]))
        np.testing.assert_allclose(real[:, 0], [3.0, 4.0], atol=1e-12)
        np.testing.assert_allclose(imag[:, 0], [4.0, 3.0], atol=1e-12)

    def test_single_token_has_no_imaginary_part(self):
        _, imag = to_cartesian(WaveRepr.from_embedding(make_rng(2).standard_normal((1, 6))))
        np.testing.assert_allclose(imag, 0.0, atol=1e-15)

    def test_quarter_phase(self):
        real, imag = to_cartesian(WaveRepr.from_embedding([[0.0], [2.0]]))
        assert real[0, 0] == pytest.approx(0.0, abs=1e-15)
        assert imag[0, 0] == pytest.approx(2.0)

    def test_masked_rows_zero(self):
        e = make_rng(3).standard_normal((4, 3))
        real, imag = to_cartesian(WaveRepr.from_embedding(e, mask=[True, True, True, False]))
        np.testing.assert_array_equal(real[3], 0.0)
        np.testing.assert_array_equal(imag[3], 0.0)

    def test_token2wave_matches_polar(self):
        e = make_rng(4).standard_normal((2, 5, 3))
        real, imag = token2wave(e)
        r_polar, i_polar = to_cartesian(WaveRepr.from_embedding(e))
        np.testing.assert_allclose(real, r_polar, atol=1e-12)
        np.testing.assert_array_equal(imag, i_polar)

    def test_padding_does_not_change_wave(self):
        e = make_rng(5).standard_normal((3, 4))
        padded = np.vstack([e, make_rng(6).standard_normal((2, 4))])
        mask = np.array([True, True, True, False, False])
        real, imag = token2wave(padded, mask)
        r0, i0 = token2wave(e)
        np.testing.assert_array_equal(real[:3], r0)
        np.testing.assert_allclose(imag[:3], i0, atol=1e-15)


class TestRestore:
    def test_round_trip(self):
        e = make_rng(7).standard_normal((5, 8))
        assert np.max(np.abs(restore_embedding(WaveRepr.from_embedding(e)) - e)) < 1e-9

    def test_cosine(self):
        r = WaveRepr(np.array([5.0]), np.array([[0.927295]]))
        assert restore_embedding(r)[0, 0] == pytest.approx(3.0, abs=1e-5)

    def test_zero(self):
        np.testing.assert_array_equal(restore_embedding(WaveRepr.from_embedding(np.zeros((3, 2)))), 0.0)


class TestVjp:
    def test_zero_imag_upstream(self):
        rng = make_rng(8)
        e, up = rng.standard_normal((2, 4, 3))
        np.testing.assert_array_equal(vjp_wave_repr(e, up, np.zeros_like(e)), up)

    def test_single_token(self):
        rng = make_rng(9)
        e, up_r, up_i = rng.standard_normal((3, 1, 5))
        np.testing.assert_array_equal(vjp_wave_repr(e, up_r, up_i), up_r)

    def test_finite_difference(self):
        assert grad_check("wave_repr", rng=10) < 1e-4

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            vjp_wave_repr(np.ones((2, 2)), np.ones((2, 3)), np.ones((2, 2)))

    def test_masked_rows_get_zero(self):
        rng = make_rng(11)
        e, up_r, up_i = rng.standard_normal((3, 4, 3))
        grad = vjp_wave_repr(e, up_r, up_i, mask=[True, True, False, True])
        np.testing.assert_array_equal(grad[2], 0.0)

    def test_twenty_trials(self):
        rng = make_rng(12)
        errors = []
        while len(errors) < 20:
            try:
                errors.append(grad_check("wave_repr", rng=rng))
            except PointRejectedError:
                continue
        assert max(errors) < 1e-4


def test_phase_quadrature_orthogonality():
    n = 1_000_000
    alpha = np.arange(n) * (2 * np.pi / n)
    assert abs(np.sum(np.sin(alpha) * np.cos(alpha)) * (2 * np.pi / n)) < 1e-6


@settings(max_examples=60, deadline=None)
@given(embeddings)
def test_round_trip_property(e):
    restored = restore_embedding(WaveRepr.from_embedding(e))
    scale = max(1.0, np.max(np.abs(e)))
    assert np.max(np.abs(restored - e)) < 1e-9 * scale


@settings(max_examples=60, deadline=None)
@given(embeddings)
def test_pythagoras_and_leave_one_out(e):
    r = WaveRepr.from_embedding(e)
    real, imag = to_cartesian(r)
    g2 = r.magnitude[None, :] ** 2
    scale = max(1.0, float(np.max(g2)))
    assert np.max(np.abs(real**2 + imag**2 - g2)) < 1e-9 * scale
    assert np.max(np.abs(imag**2 - (g2 - e**2))) < 1e-9 * scale
