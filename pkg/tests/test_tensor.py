"""Tensor carrier: matmul/transpose against brute-force oracles, f16 rounding
against the bit-level struct oracle, comparison reports, NCT1 container."""

import struct

import numpy as np
import pytest

from ncstream.tensor import (
    DenseTensor,
    ShapeMismatchError,
    allclose,
    load_tensor,
    matmul,
    quantize_f16,
    save_tensor,
    transpose,
)


def triple_loop_matmul(a, b):
    """Independent oracle: the definition, one scalar at a time."""
    m, kk = a.shape
    kk2, n = b.shape
    assert kk == kk2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(kk):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def f16_struct_oracle(value):
    """Nearest binary16 neighbor via the struct codec, not numpy."""
    return struct.unpack("<e", struct.pack("<e", value))[0]


class TestMatmul:
    def test_identity(self):
        a = DenseTensor([[1.0, 2.0], [3.0, 4.0]])
        eye = DenseTensor(np.eye(2))
        assert matmul(eye, a).tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_forced_arithmetic(self):
        out = matmul(DenseTensor([[1.0, 2.0]]), DenseTensor([[3.0], [4.0]]))
        assert out.tolist() == [[11.0]]

    def test_random_vs_triple_loop_exact(self):
        # Integer-valued float64 inputs: both orders are exact, so equality is bitwise.
        rng = np.random.default_rng(7)
        a = rng.integers(-9, 10, (7, 5)).astype(np.float64)
        b = rng.integers(-9, 10, (5, 3)).astype(np.float64)
        got = matmul(DenseTensor(a), DenseTensor(b)).array
        assert np.array_equal(got, triple_loop_matmul(a, b))

    def test_float32_accumulates_in_float64(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((40, 200)).astype(np.float32)
        b = rng.standard_normal((200, 30)).astype(np.float32)
        got = matmul(DenseTensor(a, "float32"), DenseTensor(b, "float32")).array
        want = (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)
        assert got.dtype == np.float32
        assert np.array_equal(got, want)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeMismatchError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(DenseTensor(np.ones((2, 3))), DenseTensor(np.ones((2, 2))))

    def test_dtype_mismatch(self):
        with pytest.raises(ShapeMismatchError, match="dtype"):
            matmul(DenseTensor(np.ones((2, 2))), DenseTensor(np.ones((2, 2), np.float32), "float32"))


class TestTranspose:
    def test_basic(self):
        assert transpose(DenseTensor([[1.0, 2.0], [3.0, 4.0]])).tolist() == [[1.0, 3.0], [2.0, 4.0]]

    @pytest.mark.parametrize("shape", [(1, 1), (1, 5), (4, 4), (3, 7)])
    def test_involution(self, shape):
        a = DenseTensor(np.random.default_rng(1).standard_normal(shape))
        assert np.array_equal(transpose(transpose(a)).array, a.array)

    def test_row_to_column(self):
        out = transpose(DenseTensor([[1.0, 2.0, 3.0]]))
        assert out.shape == (3, 1)

    def test_rank_error(self):
        with pytest.raises(ShapeMismatchError):
            transpose(DenseTensor([1.0, 2.0]))


class TestQuantizeF16:
    def test_exactly_representable(self):
        vals, n_over = quantize_f16(DenseTensor([1.0], dtype="float32"))
        assert vals.tolist() == [1.0] and n_over == 0

    def test_point_one_matches_bit_level_oracle(self):
        vals, _ = quantize_f16(DenseTensor([0.1], dtype="float32"))
        assert vals.tolist()[0] == 0.0999755859375 == f16_struct_oracle(0.1)

    def test_random_values_match_struct_oracle(self):
        rng = np.random.default_rng(11)
        xs = (rng.standard_normal(500) * rng.choice([0.01, 1.0, 100.0], 500)).astype(np.float32)
        vals, _ = quantize_f16(DenseTensor(xs, "float32"))
        want = [f16_struct_oracle(float(x)) for x in xs]
        assert vals.tolist() == want

    def test_overflow_flagged(self):
        vals, n_over = quantize_f16(DenseTensor([70000.0, -70000.0, 65504.0], dtype="float32"))
        assert np.isposinf(vals.array[0]) and np.isneginf(vals.array[1])
        assert vals.array[2] == 65504.0
        assert n_over == 2

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        t = DenseTensor(rng.standard_normal(100).astype(np.float32), "float32")
        once, _ = quantize_f16(t)
        twice, n = quantize_f16(once)
        assert np.array_equal(once.array, twice.array) and n == 0

    def test_rejects_float64(self):
        with pytest.raises(ValueError, match="float32"):
            quantize_f16(DenseTensor([1.0]))


class TestAllclose:
    def test_equal(self):
        a = DenseTensor([1.0, 2.0])
        rep = allclose(a, a)
        assert rep and rep.max_abs_diff == 0.0

    def test_atol(self):
        a = DenseTensor([1.0, 2.0])
        b = DenseTensor([1.001, 2.001])
        assert allclose(b, a, rtol=0.0, atol=1e-2)
        assert not allclose(b, a, rtol=0.0, atol=1e-4)

    def test_threshold_count(self):
        rep = allclose(DenseTensor([0.005, 0.02]), DenseTensor([0.0, 0.0]),
                       atol=1.0, abs_threshold=0.01)
        assert rep.n_within == 1 and rep.n_total == 2
        assert rep.frac_within == 0.5

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            allclose(DenseTensor([1.0]), DenseTensor([1.0, 2.0]))

    def test_nonfinite_never_close(self):
        a = DenseTensor([np.inf], allow_nonfinite=True)
        assert not allclose(a, a, atol=1e30)


class TestDenseTensor:
    def test_rejects_nonfinite_by_default(self):
        with pytest.raises(ValueError, match="non-finite"):
            DenseTensor([np.nan])

    def test_rejects_zero_axis(self):
        with pytest.raises(ValueError, match="axis sizes"):
            DenseTensor(np.ones((2, 0)))

    def test_data_is_flat_row_major(self):
        t = DenseTensor([[1.0, 2.0], [3.0, 4.0]])
        assert t.data.tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_backing_array_is_readonly(self):
        t = DenseTensor([[1.0, 2.0]])
        with pytest.raises(ValueError):
            t.array[0, 0] = 5.0


class TestContainerFormat:
    @pytest.mark.parametrize("dtype", ["float32", "float64"])
    def test_round_trip_bit_exact(self, tmp_path, dtype):
        rng = np.random.default_rng(5)
        arr = rng.standard_normal((3, 4, 2)).astype(np.float32 if dtype == "float32" else np.float64)
        path = tmp_path / "t.nct"
        save_tensor(DenseTensor(arr, dtype), path)
        back = load_tensor(path)
        assert back.dtype == dtype and back.shape == (3, 4, 2)
        assert back.array.tobytes() == arr.tobytes()

    def test_round_trip_preserves_infinities(self, tmp_path):
        vals, _ = quantize_f16(DenseTensor([70000.0], dtype="float32"))
        save_tensor(vals, tmp_path / "inf.nct")
        assert np.isposinf(load_tensor(tmp_path / "inf.nct").array[0])

    def test_header_layout(self, tmp_path):
        path = tmp_path / "h.nct"
        save_tensor(DenseTensor([[1.0, 2.0], [3.0, 4.0]]), path)
        raw = path.read_bytes()
        assert raw[:4] == b"NCT1"
        code, rank = struct.unpack_from("<II", raw, 4)
        assert code == 1 and rank == 2  # float64
        assert struct.unpack_from("<2Q", raw, 12) == (2, 2)
        assert struct.unpack_from("<4d", raw, 28) == (1.0, 2.0, 3.0, 4.0)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.nct"
        path.write_bytes(b"XXXX" + b"\0" * 16)
        with pytest.raises(ValueError, match="magic"):
            load_tensor(path)
