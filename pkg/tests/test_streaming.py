"""Accumulator algebra: chunked == one-shot (floating point and exact
arithmetic), merge is abelian, the safe running-max path is stable."""

from fractions import Fraction

import numpy as np
import pytest
from exact_ring import SYMBOLIC_EXP
from hypothesis import given, settings
from hypothesis import strategies as st

from ncstream import streaming
from ncstream.normalizers import (
    SIGNED_L1,
    SOFTMAX,
    SPHERICAL,
    DegenerateDenominatorError,
    normalized_contraction,
)
from ncstream.streaming import (
    accumulate,
    accumulate_safe,
    finalize,
    finalize_safe,
    init_safe_state,
    init_state,
    merge,
    streamed_normalized_contraction,
)


class TestInitAndAccumulate:
    def test_init_contraction(self):
        st0 = init_state()
        assert st0.o == 0 and st0.z == 0

    def test_init_attention(self):
        st0 = init_state("attention", k=3)
        assert st0.o.tolist() == [0.0, 0.0, 0.0] and st0.z == 0.0

    def test_init_attention_needs_k(self):
        with pytest.raises(ValueError):
            init_state("attention")

    def test_single_chunk_matches_direct_contraction(self):
        x = np.array([0.5, -1.5, 2.0])
        y = np.array([1.0, 2.0, 3.0])
        st1 = accumulate(init_state(), x, y, SPHERICAL)
        assert finalize(st1, SPHERICAL) == pytest.approx(
            normalized_contraction(x, y, SPHERICAL), abs=1e-15)

    def test_accumulate_trace(self):
        # a1 = identity, a2 = square: ([3],[1]) -> (3, 9), then ([4],[1]) -> (7, 25)
        st1 = accumulate(init_state(), [3.0], [1.0], SPHERICAL)
        assert (st1.o, st1.z) == (3.0, 9.0)
        st2 = accumulate(st1, [4.0], [1.0], SPHERICAL)
        assert (st2.o, st2.z) == (7.0, 25.0)
        assert finalize(st2, SPHERICAL) == pytest.approx(1.4, abs=1e-15)

    def test_empty_chunk_is_identity(self):
        st1 = accumulate(init_state(), [3.0], [1.0], SPHERICAL)
        st2 = accumulate(st1, [], [], SPHERICAL)
        assert (st2.o, st2.z) == (st1.o, st1.z)

    def test_attention_mode_vector_numerator(self):
        st1 = accumulate(init_state("attention", k=2), [2.0], [[10.0, -1.0]], SPHERICAL)
        assert st1.o.tolist() == [20.0, -2.0] and st1.z == 4.0

    def test_chunk_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            accumulate(init_state(), [1.0, 2.0], [1.0], SPHERICAL)


class TestMerge:
    def test_componentwise_sum(self):
        a = streaming.StreamState(streaming.CONTRACTION, 3.0, 9.0)
        b = streaming.StreamState(streaming.CONTRACTION, 4.0, 16.0)
        out = merge(a, b)
        assert (out.o, out.z) == (7.0, 25.0)

    def test_zero_state_is_identity(self):
        a = streaming.StreamState(streaming.CONTRACTION, 1.25, 7.5)
        out = merge(a, init_state())
        assert (out.o, out.z) == (1.25, 7.5)

    def test_merge_equals_sequential_accumulate(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n1, n2 = rng.integers(1, 30, 2)
            x1, y1 = rng.standard_normal(n1), rng.standard_normal(n1)
            x2, y2 = rng.standard_normal(n2), rng.standard_normal(n2)
            for spec in (SPHERICAL, SOFTMAX, SIGNED_L1):
                merged = merge(accumulate(init_state(), x1, y1, spec),
                               accumulate(init_state(), x2, y2, spec))
                seq = accumulate(accumulate(init_state(), x1, y1, spec), x2, y2, spec)
                assert merged.o == pytest.approx(seq.o, rel=1e-12, abs=1e-15)
                assert merged.z == pytest.approx(seq.z, rel=1e-12, abs=1e-15)

    def test_mode_mismatch(self):
        with pytest.raises(ValueError, match="mode"):
            merge(init_state(), init_state("attention", k=2))


class TestFinalize:
    def test_spherical_trace(self):
        assert finalize(streaming.StreamState("contraction", 7.0, 25.0), SPHERICAL) == 1.4

    def test_softmax_identity_at_one(self):
        assert finalize(streaming.StreamState("contraction", 0.37, 1.0), SOFTMAX) == 0.37

    @pytest.mark.parametrize("spec", [SPHERICAL, SOFTMAX, SIGNED_L1], ids=lambda s: s.name)
    def test_empty_state_errors_never_silently_returns(self, spec):
        with pytest.raises(DegenerateDenominatorError):
            finalize(init_state(), spec)


class TestStreamedContraction:
    def test_chunk_size_one_trace(self):
        got = streamed_normalized_contraction(np.array([3.0, 4.0]), np.array([1.0, 1.0]), SPHERICAL, 1)
        assert got == pytest.approx(1.4, abs=1e-15)

    def test_single_chunk_identical_to_one_shot(self):
        rng = np.random.default_rng(1)
        x, y = rng.standard_normal(9), rng.standard_normal(9)
        for spec in (SPHERICAL, SOFTMAX, SIGNED_L1):
            assert streamed_normalized_contraction(x, y, spec, 64) == \
                normalized_contraction(x, y, spec)

    def test_partial_last_chunk(self):
        rng = np.random.default_rng(2)
        x, y = rng.standard_normal(7), rng.standard_normal(7)
        got = streamed_normalized_contraction(x, y, SPHERICAL, 3)
        want = normalized_contraction(x, y, SPHERICAL)
        assert got == pytest.approx(want, rel=1e-12)

    def test_empty_total_input_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            streamed_normalized_contraction(np.zeros(0), np.zeros(0), SPHERICAL, 1)

    @given(
        data=st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=60),
        chunk=st.integers(1, 64),
    )
    @settings(max_examples=300, deadline=None)
    def test_morphism_property(self, data, chunk):
        x = np.array([d[0] for d in data])
        y = np.array([d[1] for d in data])
        for spec in (SPHERICAL, SOFTMAX, SIGNED_L1):
            try:
                want = normalized_contraction(x, y, spec)
            except DegenerateDenominatorError:
                # both sides must refuse degenerate rows, never silently return
                with pytest.raises(DegenerateDenominatorError):
                    streamed_normalized_contraction(x, y, spec, chunk)
                continue
            got = streamed_normalized_contraction(x, y, spec, chunk)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-13)

    def test_z_tracks_sum_of_a2(self):
        rng = np.random.default_rng(3)
        x, y = rng.standard_normal(50), rng.standard_normal(50)
        st0 = init_state()
        for lo in range(0, 50, 7):
            st0 = accumulate(st0, x[lo:lo + 7], y[lo:lo + 7], SPHERICAL)
        assert st0.z == pytest.approx(float((x * x).sum()), rel=1e-12)


class TestExactArithmetic:
    def test_polynomial_specs_stream_exactly(self):
        rng = np.random.default_rng(4)
        for spec in (SPHERICAL, SIGNED_L1):
            for _ in range(25):
                n = int(rng.integers(1, 12))
                xs = [Fraction(int(v)) for v in rng.integers(-5, 6, n)]
                ys = [Fraction(int(v)) for v in rng.integers(-5, 6, n)]
                one_shot = accumulate(init_state(), xs, ys, spec)
                chunked = init_state()
                c = int(rng.integers(1, n + 1))
                for lo in range(0, n, c):
                    chunked = accumulate(chunked, xs[lo:lo + c], ys[lo:lo + c], spec)
                assert chunked.o == one_shot.o and chunked.z == one_shot.z

    def test_signed_l1_value_exact(self):
        xs = [Fraction(3), Fraction(-1), Fraction(2)]
        ys = [Fraction(1), Fraction(4), Fraction(-2)]
        got = streamed_normalized_contraction(xs, ys, SIGNED_L1, 2)
        # (3*1 + (-1)*4 + 2*(-2)) / (3 + 1 + 2) = -5/6, exactly
        assert got == Fraction(-5, 6)

    def test_exponential_spec_streams_exactly_in_symbolic_ring(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            n = int(rng.integers(1, 10))
            xs = [int(v) for v in rng.integers(-4, 5, n)]
            ys = [Fraction(int(v)) for v in rng.integers(-5, 6, n)]
            one_shot = accumulate(init_state(), xs, ys, SYMBOLIC_EXP)
            chunked = init_state()
            c = int(rng.integers(1, n + 1))
            for lo in range(0, n, c):
                chunked = accumulate(chunked, xs[lo:lo + c], ys[lo:lo + c], SYMBOLIC_EXP)
            assert chunked.o == one_shot.o and chunked.z == one_shot.z


class TestSafePath:
    def test_matches_plain_softmax_on_nonpositive_scores(self):
        rng = np.random.default_rng(6)
        scores = -np.abs(rng.standard_normal(20))
        values = rng.standard_normal(20)
        plain = streamed_normalized_contraction(scores, values, SOFTMAX, 6)
        st0 = init_safe_state()
        for lo in range(0, 20, 6):
            st0 = accumulate_safe(st0, scores[lo:lo + 6], values[lo:lo + 6])
        assert finalize_safe(st0) == pytest.approx(plain, rel=1e-12)

    def test_finite_where_plain_overflows(self):
        scores = np.array([1000.0, 999.0])
        values = np.array([1.0, 3.0])
        # e^1000 overflows float64: the plain path lands on an unusable denominator
        with np.errstate(over="ignore"), pytest.raises(DegenerateDenominatorError):
            streamed_normalized_contraction(scores, values, SOFTMAX, 1)
        st0 = accumulate_safe(init_safe_state(), scores, values)
        out = finalize_safe(st0)
        assert np.isfinite(out)
        # exact weights: e^0 and e^-1 normalized
        w = np.exp([0.0, -1.0])
        assert out == pytest.approx(float(w @ values / w.sum()), rel=1e-12)

    def test_running_max_invariant(self):
        rng = np.random.default_rng(7)
        scores = rng.standard_normal(30) * 5
        values = rng.standard_normal(30)
        st0 = init_safe_state()
        seen = []
        for lo in range(0, 30, 7):
            st0 = accumulate_safe(st0, scores[lo:lo + 7], values[lo:lo + 7])
            seen.extend(scores[lo:lo + 7])
            assert st0.m == max(seen)

    def test_state_is_plain_state_scaled_by_exp_minus_m(self):
        rng = np.random.default_rng(8)
        scores = rng.standard_normal(12)
        values = rng.standard_normal(12)
        safe = accumulate_safe(init_safe_state(), scores, values)
        plain = accumulate(init_state(), scores, values, SOFTMAX)
        scale = np.exp(-safe.m)
        assert safe.o == pytest.approx(plain.o * scale, rel=1e-12)
        assert safe.z == pytest.approx(plain.z * scale, rel=1e-12)

    def test_chunk_order_permutation_stable(self):
        rng = np.random.default_rng(9)
        scores = rng.standard_normal(40) * 3
        values = rng.standard_normal(40)
        chunks = [(scores[lo:lo + 5], values[lo:lo + 5]) for lo in range(0, 40, 5)]
        def run(order):
            st0 = init_safe_state()
            for i in order:
                st0 = accumulate_safe(st0, *chunks[i])
            return finalize_safe(st0)
        base = run(range(len(chunks)))
        for _ in range(10):
            perm = rng.permutation(len(chunks))
            assert run(perm) == pytest.approx(base, rel=1e-9)

    def test_empty_chunk_identity(self):
        st0 = accumulate_safe(init_safe_state(), [1.0], [2.0])
        st1 = accumulate_safe(st0, [], [])
        assert (st1.o, st1.z, st1.m) == (st0.o, st0.z, st0.m)

    def test_empty_state_finalize_errors(self):
        with pytest.raises(DegenerateDenominatorError):
            finalize_safe(init_safe_state())


class TestFaultInjection:
    def test_flipped_accumulator_breaks_morphism(self):
        x = np.array([3.0, 4.0])
        y = np.array([1.0, 1.0])
        streaming.set_fault_injection(True)
        try:
            got = streamed_normalized_contraction(x, y, SPHERICAL, 1)
        finally:
            streaming.set_fault_injection(False)
        assert got == pytest.approx(-1.4, abs=1e-15)
        assert streamed_normalized_contraction(x, y, SPHERICAL, 1) == pytest.approx(1.4, abs=1e-15)
