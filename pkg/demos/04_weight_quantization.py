#!/usr/bin/env python3
"""Bit-width sweep of the structural-layer quantizer: greedy step search vs a
brute-force grid, and the size/error tradeoff across Q."""

import numpy as np

from gsavatar import GeneratorWeights, QuantConfig, quantize_network, quantize_tensor
from gsavatar.weight_quant import dequantize_tensor

rng = np.random.default_rng(0)
w = rng.normal(0, 0.2, 2000)

print("greedy vs 10^4-point grid (single tensor):")
for q in (2, 4, 8):
    qt = quantize_tensor(w, QuantConfig(q))
    mse = np.mean((w - dequantize_tensor(qt).astype(np.float64)) ** 2)
    lo, hi = -(1 << (q - 1)), (1 << (q - 1)) - 1
    grid = np.linspace(0.1, 2.0, 10_000) * np.abs(w).max() / hi
    gmse = min(
        np.mean((w[None, :] - np.clip(np.rint(w[None, :] / c[:, None]), lo, hi) * c[:, None]) ** 2, axis=1).min()
        for c in np.array_split(grid, 10)
    )
    print(f"  Q={q}: greedy MSE {mse:.3e}, grid MSE {gmse:.3e}, ratio {mse / gmse:.4f}")

print("\nfull network:")
weights = GeneratorWeights.random(seed=3)
for q in (2, 4, 6, 8):
    net, report = quantize_network(weights, QuantConfig(q))
    deq = net.dequantize()
    err = np.mean(
        [np.mean((deq[n].astype(np.float64) - a) ** 2) for n, a in weights.tensors.items()]
    )
    print(f"  Q={q}: {report.total_bytes:6d} bytes, mean tensor MSE {err:.3e}")
