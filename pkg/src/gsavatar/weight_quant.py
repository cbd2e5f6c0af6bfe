"""Post-training quantizer for generator weights under a fixed bit width Q.

Each kernel tensor is quantized symmetrically and uniformly,
codes = clamp(round(w / step), -2^(Q-1), 2^(Q-1)-1), with the step chosen by a
coarse-to-fine greedy search minimizing weight-space MSE. Biases stay at full
precision: they are a negligible fraction of the size and have outsized output
impact. Adjusting Q trades bitrate for reconstruction quality without any
retraining.
"""

from dataclasses import dataclass, field

import numpy as np

from . import binio, entropy
from .errors import DecodeError
from .generator import ARCHITECTURE, GeneratorWeights

QUANT_MAGIC = b"HGQW"

_KIND_CODES = 0  # step + packed Q-bit two's-complement codes
_KIND_RAW = 1  # full-precision float32 values (biases)


@dataclass
class QuantConfig:
    bit_width: int = 8
    refine_levels: int = 3
    candidates: int = 64

    def __post_init__(self):
        if not 2 <= self.bit_width <= 8:
            raise ValueError(f"bit_width must lie in [2, 8], got {self.bit_width}")
        if self.refine_levels < 1 or self.candidates < 2:
            raise ValueError("refine_levels must be >= 1 and candidates >= 2")

    @property
    def code_min(self) -> int:
        return -(1 << (self.bit_width - 1))

    @property
    def code_max(self) -> int:
        return (1 << (self.bit_width - 1)) - 1


@dataclass
class QuantizedTensor:
    codes: np.ndarray  # integer codes within the signed Q-bit range
    step: float
    bit_width: int
    shape: tuple

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int32)
        self.shape = tuple(self.shape)
        # keep the step exactly float32-representable so the serialized form
        # dequantizes to the identical tensor
        self.step = float(np.float32(self.step))
        lo, hi = -(1 << (self.bit_width - 1)), (1 << (self.bit_width - 1)) - 1
        if self.codes.size and (self.codes.min() < lo or self.codes.max() > hi):
            raise ValueError(f"codes exceed the signed {self.bit_width}-bit range")


def _scan_steps(w: np.ndarray, steps: np.ndarray, lo: int, hi: int):
    """Evaluate candidate steps plus their closed-form per-piece optima.

    For a fixed code assignment c the MSE is a parabola in the step, minimized
    at sum(w c) / sum(c^2); snapping each candidate there finds the exact floor
    of whichever piecewise-parabolic segment the candidate landed in.
    """
    def evaluate(cand):
        codes = np.clip(np.rint(w[None, :] / cand[:, None]), lo, hi)
        err = w[None, :] - codes * cand[:, None]
        return codes, np.mean(err * err, axis=1)

    def polish(codes, cand):
        den = np.sum(codes * codes, axis=1)
        opt = np.where(den > 0, (codes @ w) / np.where(den > 0, den, 1.0), cand)
        return np.maximum(opt, 1e-12)

    codes, mse = evaluate(steps)
    all_steps, all_mse = [steps], [mse]
    cand = steps
    for _ in range(2):  # two Lloyd half-steps settle into the local piece floor
        cand = polish(codes, cand)
        codes, pmse = evaluate(cand)
        all_steps.append(cand)
        all_mse.append(pmse)
    stacked_steps = np.concatenate(all_steps)
    stacked_mse = np.concatenate(all_mse)
    best = int(np.argmin(stacked_mse))
    return float(stacked_steps[best]), float(stacked_mse[best])


def quantize_tensor(w: np.ndarray, cfg: QuantConfig) -> QuantizedTensor:
    """Symmetric uniform quantization with greedy coarse-to-fine step search.

    Level 0 scans `candidates` steps over [0.1, 2.0] x max|w|/code_max; each
    refinement level re-scans a bracket of one previous grid spacing around the
    incumbent, so the final step resolves far below a 1e4-point grid.
    """
    arr = np.asarray(w, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot quantize an empty tensor")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    shape = arr.shape
    flat = arr.reshape(-1)
    lo, hi = cfg.code_min, cfg.code_max
    peak = float(np.max(np.abs(flat)))
    if peak == 0.0:
        return QuantizedTensor(np.zeros(shape, dtype=np.int32), 1.0, cfg.bit_width, shape)

    base = peak / hi
    span_lo, span_hi = 0.1 * base, 2.0 * base
    best_step, best_mse = span_hi, np.inf
    for level in range(cfg.refine_levels):
        steps = np.linspace(span_lo, span_hi, cfg.candidates)
        center, level_mse = _scan_steps(flat, steps, lo, hi)
        if level_mse < best_mse:
            best_step, best_mse = center, level_mse
        # the clamp makes the MSE landscape wiggly: the true optimum can sit
        # several grid cells away from the scanned argmin, so the first
        # refinement sweeps a wide bracket before shrinking
        spacing = (span_hi - span_lo) / (cfg.candidates - 1)
        radius = (8 if level == 0 else 4) * spacing
        span_lo = max(best_step - radius, 1e-12)
        span_hi = best_step + radius
    best_step = float(np.float32(best_step))  # snap to the serialized precision
    codes = np.clip(np.rint(flat / best_step), lo, hi).astype(np.int32)
    return QuantizedTensor(codes.reshape(shape), best_step, cfg.bit_width, shape)


def dequantize_tensor(q: QuantizedTensor) -> np.ndarray:
    return (q.codes.astype(np.float32) * np.float32(q.step)).reshape(q.shape)


def _entry_header_bits(name: str) -> int:
    # u16 name length + name bytes + u8 rank + u32 per dim + u8 kind
    return 8 * (2 + len(name.encode("utf-8")) + 1 + 1) + 32 * len(ARCHITECTURE[name])


@dataclass
class QuantizedNetwork:
    """Quantized kernels plus full-precision biases, in architecture order."""

    bit_width: int
    entries: dict  # name -> QuantizedTensor (kernels) or float32 ndarray (biases)

    def dequantize(self) -> GeneratorWeights:
        tensors = {}
        for name, entry in self.entries.items():
            tensors[name] = entry.copy() if isinstance(entry, np.ndarray) else dequantize_tensor(entry)
        return GeneratorWeights(tensors)


@dataclass
class SizeReport:
    rows: list = field(default_factory=list)  # (name, kind, numel, bits)

    @property
    def total_bits(self) -> int:
        return sum(r[3] for r in self.rows)

    @property
    def total_bytes(self) -> int:
        return (self.total_bits + 7) // 8


def quantize_network(weights: GeneratorWeights, cfg: QuantConfig) -> tuple[QuantizedNetwork, SizeReport]:
    """Quantize every kernel independently (greedy per tensor, in architecture
    order); biases stay float32. The report mirrors the serialized layout:
    kernels cost numel*Q + 32 (step) + header bits, biases 32 bits per value."""
    entries = {}
    report = SizeReport()
    for name, arr in weights.tensors.items():
        header = _entry_header_bits(name)
        if name.endswith(".bias"):
            entries[name] = arr.copy()
            report.rows.append((name, "raw32", arr.size, arr.size * 32 + header))
        else:
            qt = quantize_tensor(arr, cfg)
            entries[name] = qt
            report.rows.append((name, f"q{cfg.bit_width}", arr.size, arr.size * cfg.bit_width + 32 + header))
    return QuantizedNetwork(cfg.bit_width, entries), report


def serialize_quantized(net: QuantizedNetwork) -> bytes:
    """HGQW section: magic, u8 Q, u32 tensor count, then per tensor: name
    (u16 length + bytes), u8 rank, u32 dims, u8 kind, and either f32 step +
    packed Q-bit two's-complement codes (MSB-first) or raw f32 values."""
    out = [QUANT_MAGIC, binio.u8(net.bit_width), binio.u32(len(net.entries))]
    for name, entry in net.entries.items():
        encoded = name.encode("utf-8")
        out.append(binio.u16(len(encoded)))
        out.append(encoded)
        shape = entry.shape
        out.append(binio.u8(len(shape)))
        for d in shape:
            out.append(binio.u32(d))
        if isinstance(entry, np.ndarray):
            out.append(binio.u8(_KIND_RAW))
            out.append(binio.f32_array(entry))
        else:
            out.append(binio.u8(_KIND_CODES))
            out.append(binio.f32(entry.step))
            q = net.bit_width
            unsigned = (entry.codes.reshape(-1).astype(np.int64) & ((1 << q) - 1)).astype(np.uint64)
            writer = entropy.BitWriter()
            writer.write_codes(unsigned, np.full(entry.codes.size, q, dtype=np.uint8))
            out.append(writer.getvalue())
    return b"".join(out)


def parse_quantized(data: bytes) -> QuantizedNetwork:
    r = binio.ByteReader(data)
    r.magic(QUANT_MAGIC)
    q = r.u8()
    if not 2 <= q <= 8:
        raise DecodeError(f"bit width {q} outside [2, 8]")
    count = r.u32()
    entries = {}
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        rank = r.u8()
        shape = tuple(r.u32() for _ in range(rank))
        numel = int(np.prod(shape)) if shape else 1
        kind = r.u8()
        if kind == _KIND_RAW:
            entries[name] = r.f32_array(numel, shape)
        elif kind == _KIND_CODES:
            step = r.f32()
            packed = r.take((numel * q + 7) // 8)
            reader = entropy.BitReader(packed)
            unsigned = reader.read_fixed(numel, q).astype(np.int64)
            half = 1 << (q - 1)
            codes = np.where(unsigned >= half, unsigned - (1 << q), unsigned)
            try:
                entries[name] = QuantizedTensor(codes.reshape(shape), step, q, shape)
            except ValueError as e:
                raise DecodeError(f"tensor {name!r}: {e}") from e
        else:
            raise DecodeError(f"unknown entry kind {kind} for tensor {name!r}")
    if not r.done():
        raise DecodeError(f"{len(data) - r.pos} trailing bytes after last tensor")
    return QuantizedNetwork(q, entries)
