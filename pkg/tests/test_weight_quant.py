import numpy as np
import pytest

from gsavatar import weight_quant
from gsavatar.errors import DecodeError
from gsavatar.generator import GeneratorWeights
from gsavatar.weight_quant import (
    QuantConfig,
    QuantizedTensor,
    dequantize_tensor,
    quantize_network,
    quantize_tensor,
)


def reconstruction_mse(w, qt):
    return float(np.mean((np.asarray(w, dtype=np.float64) - dequantize_tensor(qt).astype(np.float64)) ** 2))


def brute_force_grid(w, bit_width, points=10_000):
    """Independent oracle: exhaustive scan of `points` steps over the same span."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    lo, hi = -(1 << (bit_width - 1)), (1 << (bit_width - 1)) - 1
    base = np.max(np.abs(w)) / hi
    steps = np.linspace(0.1 * base, 2.0 * base, points)
    best = (np.inf, None)
    for chunk in np.array_split(steps, 20):
        codes = np.clip(np.rint(w[None, :] / chunk[:, None]), lo, hi)
        mse = np.mean((w[None, :] - codes * chunk[:, None]) ** 2, axis=1)
        i = int(np.argmin(mse))
        if mse[i] < best[0]:
            best = (float(mse[i]), float(chunk[i]))
    return best


def test_zero_tensor_convention():
    qt = quantize_tensor(np.zeros((3, 4)), QuantConfig(4))
    assert qt.step == 1.0
    assert np.all(qt.codes == 0)
    assert reconstruction_mse(np.zeros((3, 4)), qt) == 0.0


def test_two_point_tensor_matches_grid_oracle():
    w = np.array([-1.0, 1.0])
    qt = quantize_tensor(w, QuantConfig(2))
    mse_grid, step_grid = brute_force_grid(w, 2)
    mse = reconstruction_mse(w, qt)
    assert mse <= mse_grid + 1e-9
    assert abs(qt.step - step_grid) < 2e-4  # within one oracle grid spacing
    # Q=2 levels are -2..1: both -1 and 1 must be representable at step 1
    assert np.isclose(qt.step, 1.0, atol=1e-4)
    assert mse < 1e-8


def test_greedy_within_5_percent_of_grid():
    rng = np.random.default_rng(0)
    for bit_width in (2, 4, 8):
        for _ in range(20):
            w = rng.normal(0, rng.uniform(0.01, 2.0), int(rng.integers(16, 400)))
            qt = quantize_tensor(w, QuantConfig(bit_width))
            mse_grid, _ = brute_force_grid(w, bit_width, points=2000)
            assert reconstruction_mse(w, qt) <= 1.05 * mse_grid + 1e-18


def test_mse_nonincreasing_in_bit_width():
    rng = np.random.default_rng(1)
    for _ in range(20):
        w = rng.normal(0, 1.0, 200)
        mses = [
            reconstruction_mse(w, quantize_tensor(w, QuantConfig(q)))
            for q in range(2, 9)
        ]
        assert all(a >= b - 1e-15 for a, b in zip(mses, mses[1:]))


def test_codes_stay_in_range_with_outliers():
    rng = np.random.default_rng(2)
    for bit_width in (2, 5, 8):
        lo, hi = -(1 << (bit_width - 1)), (1 << (bit_width - 1)) - 1
        for _ in range(20):
            w = rng.standard_cauchy(300) * 10  # heavy tails
            qt = quantize_tensor(w, QuantConfig(bit_width))
            assert qt.codes.min() >= lo and qt.codes.max() <= hi


def test_out_of_range_codes_rejected():
    with pytest.raises(ValueError):
        QuantizedTensor(np.array([5]), 0.1, 3, (1,))


def test_dequantize_examples():
    assert np.allclose(
        dequantize_tensor(QuantizedTensor(np.zeros((2, 2)), 0.3, 4, (2, 2))), 0.0
    )
    out = dequantize_tensor(QuantizedTensor(np.array([-2, 1]), 0.5, 4, (2,)))
    assert np.allclose(out, [-1.0, 0.5])


def test_requantize_dequantized_is_fixed_point():
    rng = np.random.default_rng(3)
    for _ in range(20):
        w = rng.normal(0, 1, 128)
        qt = quantize_tensor(w, QuantConfig(6))
        deq = dequantize_tensor(qt)
        lo, hi = -(1 << 5), (1 << 5) - 1
        again = np.clip(np.rint(deq.astype(np.float64) / qt.step), lo, hi).astype(np.int32)
        assert np.array_equal(again, qt.codes.reshape(-1))


def test_empty_tensor_rejected():
    with pytest.raises(ValueError):
        quantize_tensor(np.zeros(0), QuantConfig(4))


def test_bit_width_bounds():
    with pytest.raises(ValueError):
        QuantConfig(1)
    with pytest.raises(ValueError):
        QuantConfig(9)


class TestNetwork:
    def test_biases_survive_at_full_precision(self):
        weights = GeneratorWeights.random(seed=0)
        net, report = quantize_network(weights, QuantConfig(4))
        for name, kind, numel, bits in report.rows:
            if name.endswith(".bias"):
                assert kind == "raw32"
                assert bits == numel * 32 + weight_quant._entry_header_bits(name)
                assert np.array_equal(net.entries[name], weights[name])
            else:
                assert kind == "q4"
                assert bits == numel * 4 + 32 + weight_quant._entry_header_bits(name)

    def test_size_formula_q2(self):
        weights = GeneratorWeights.random(seed=1)
        _, report = quantize_network(weights, QuantConfig(2))
        kernel_numel = sum(
            arr.size for n, arr in weights.tensors.items() if n.endswith(".kernel")
        )
        kernel_bits = sum(r[3] for r in report.rows if r[0].endswith(".kernel"))
        overhead = sum(
            32 + weight_quant._entry_header_bits(r[0])
            for r in report.rows if r[0].endswith(".kernel")
        )
        assert kernel_bits == kernel_numel * 2 + overhead

    def test_network_size_strictly_increases_with_q(self):
        weights = GeneratorWeights.random(seed=2)
        totals = [
            quantize_network(weights, QuantConfig(q))[1].total_bits for q in range(2, 9)
        ]
        assert all(a < b for a, b in zip(totals, totals[1:]))

    def test_dequantized_network_close_at_q8(self):
        # Q=8 keeps kernel reconstruction noise at least 30 dB below signal
        weights = GeneratorWeights.random(seed=3)
        net, _ = quantize_network(weights, QuantConfig(8))
        deq = net.dequantize()
        for name, arr in weights.tensors.items():
            if name.endswith(".kernel"):
                mse = np.mean((deq[name].astype(np.float64) - arr.astype(np.float64)) ** 2)
                power = np.mean(arr.astype(np.float64) ** 2)
                assert mse <= power / 1000


class TestSerialization:
    def test_roundtrip_bit_exact(self):
        weights = GeneratorWeights.random(seed=4)
        for q in (2, 5, 8):
            net, _ = quantize_network(weights, QuantConfig(q))
            blob = weight_quant.serialize_quantized(net)
            back = weight_quant.parse_quantized(blob)
            assert back.bit_width == q
            for name, entry in net.entries.items():
                other = back.entries[name]
                if isinstance(entry, np.ndarray):
                    assert np.array_equal(entry, other)
                else:
                    assert np.array_equal(entry.codes, other.codes)
                    assert entry.step == other.step
            assert back.dequantize() == net.dequantize()

    def test_serialized_size_matches_report(self):
        weights = GeneratorWeights.random(seed=5)
        net, report = quantize_network(weights, QuantConfig(3))
        blob = weight_quant.serialize_quantized(net)
        # magic + Q byte + count, then per-tensor bits rounded up per code block
        expected = 4 + 1 + 4
        for name, kind, numel, bits in report.rows:
            hdr_bytes = 2 + len(name.encode()) + 1 + 4 * len(weight_quant.ARCHITECTURE[name]) + 1
            if kind == "raw32":
                expected += hdr_bytes + numel * 4
            else:
                expected += hdr_bytes + 4 + (numel * 3 + 7) // 8
        assert len(blob) == expected

    def test_truncated_rejected(self):
        net, _ = quantize_network(GeneratorWeights.random(seed=6), QuantConfig(4))
        blob = weight_quant.serialize_quantized(net)
        with pytest.raises(DecodeError):
            weight_quant.parse_quantized(blob[:-2])

    def test_trailing_bytes_rejected(self):
        net, _ = quantize_network(GeneratorWeights.random(seed=7), QuantConfig(4))
        blob = weight_quant.serialize_quantized(net)
        with pytest.raises(DecodeError):
            weight_quant.parse_quantized(blob + b"\x00")

    def test_unknown_kind_rejected(self):
        net, _ = quantize_network(GeneratorWeights.random(seed=8), QuantConfig(4))
        blob = bytearray(weight_quant.serialize_quantized(net))
        name = "front.conv1.kernel"
        off = 4 + 1 + 4 + 2 + len(name) + 1 + 4 * 4  # through rank + dims
        assert blob[off] == weight_quant._KIND_CODES
        blob[off] = 9
        with pytest.raises(DecodeError):
            weight_quant.parse_quantized(bytes(blob))
