"""Lossy temporal-predictive codec for pose map sequences.

Values are uniformly quantized to integer levels (step q), predicted either
spatially (intra: left neighbor, first column from the top neighbor) or
temporally (inter: co-located sample of the previous reconstructed frame), and
the residuals are wrapped into single bytes (two bytes when q < 1/255), zig-zag
mapped, and Huffman coded per plane. Levels are coded losslessly, so encoder
and decoder reconstructions are bit-identical and every sample lands within
q/2 of the source. Each frame picks the cheaper of intra/inter (frame 0 is
always intra).

The six planes of a frame (front RGB then back RGB) carry one Huffman table
each; a plane whose table holds a single symbol is stored with zero payload
bits and expands to that symbol everywhere.
"""

from dataclasses import dataclass

import numpy as np

from . import binio, entropy
from .avatar import PoseMapPair
from .errors import DecodeError

MODE_INTRA = 0
MODE_INTER = 1

_PLANES = 6  # front RGB + back RGB


@dataclass
class PoseMapStream:
    frame_count: int
    height: int
    width: int
    q: float
    payload: bytes  # per-frame mode byte + per-plane (table, bit count, bytes)

    def to_bytes(self) -> bytes:
        return b"".join(
            [
                binio.u32(self.frame_count),
                binio.u16(self.height),
                binio.u16(self.width),
                binio.f32(self.q),
                self.payload,
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "PoseMapStream":
        r = binio.ByteReader(data)
        frame_count = r.u32()
        h = r.u16()
        w = r.u16()
        q = r.f32()
        return cls(frame_count, h, w, q, data[r.pos :])


def _bytes_per_sample(q: float) -> int:
    max_level = int(round(1.0 / q))
    if max_level <= 0xFF:
        return 1
    if max_level <= 0xFFFF:
        return 2
    raise ValueError(f"quantization step {q} is too fine (more than 65535 levels)")


def _planes_of(pair: PoseMapPair) -> list[np.ndarray]:
    return [pair.front[:, :, c] for c in range(3)] + [pair.back[:, :, c] for c in range(3)]


def _quantize(plane: np.ndarray, q: float) -> np.ndarray:
    return np.rint(plane / q).astype(np.int64)


def _intra_residual(levels: np.ndarray) -> np.ndarray:
    res = levels.copy()
    res[:, 1:] -= levels[:, :-1]
    res[1:, 0] -= levels[:-1, 0]
    return res


def _intra_reconstruct(res: np.ndarray, modulus: int) -> np.ndarray:
    levels = res.astype(np.int64)
    levels[:, 0] = np.cumsum(levels[:, 0]) % modulus
    levels = np.cumsum(levels, axis=1) % modulus
    return levels


def _residual_to_bytes(res: np.ndarray, nbytes: int) -> np.ndarray:
    modulus = 1 << (8 * nbytes)
    wrapped = (res + modulus // 2) % modulus - modulus // 2
    zz = np.where(wrapped >= 0, 2 * wrapped, -2 * wrapped - 1)
    if nbytes == 1:
        return zz.astype(np.uint8).reshape(-1)
    lo = (zz & 0xFF).astype(np.uint8)
    hi = ((zz >> 8) & 0xFF).astype(np.uint8)
    return np.stack([lo, hi], axis=-1).reshape(-1)


def _bytes_to_residual(raw: np.ndarray, shape: tuple[int, int], nbytes: int) -> np.ndarray:
    if nbytes == 1:
        zz = raw.astype(np.int64)
    else:
        pairs = raw.reshape(-1, 2).astype(np.int64)
        zz = pairs[:, 0] | (pairs[:, 1] << 8)
    res = np.where(zz % 2 == 0, zz // 2, -(zz + 1) // 2)
    return res.reshape(shape)


def _code_plane(res: np.ndarray, nbytes: int) -> tuple[bytes, int, bytes]:
    """Huffman-code one residual plane; returns (table bytes, bit count, payload)."""
    raw = _residual_to_bytes(res, nbytes)
    table = entropy.build_table(np.bincount(raw, minlength=256))
    if len(table.present_symbols) == 1:
        return table.serialize(), 0, b""
    payload, bits = entropy.encode(table, raw.tobytes())
    return table.serialize(), bits, payload


def _plane_cost_bits(res: np.ndarray, nbytes: int) -> int:
    raw = _residual_to_bytes(res, nbytes)
    hist = np.bincount(raw, minlength=256)
    table = entropy.build_table(hist)
    if len(table.present_symbols) == 1:
        return 0
    return table.payload_bits(hist)


def encode_posemaps(frames, q: float) -> PoseMapStream:
    """Code a pose map sequence at quantization step q in (0, 1].

    q is snapped to its float32 representation so encoder and decoder use the
    identical step.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    q = float(np.float32(q))
    frames = list(frames)
    nbytes = _bytes_per_sample(q)
    modulus = 1 << (8 * nbytes)
    if not frames:
        return PoseMapStream(0, 0, 0, q, b"")
    h, w = frames[0].resolution
    out = []
    prev_levels = None
    for t, pair in enumerate(frames):
        if pair.resolution != (h, w):
            raise ValueError(f"frame {t} resolution {pair.resolution} != {(h, w)}")
        levels = [_quantize(p, q) for p in _planes_of(pair)]
        intra = [_intra_residual(lv) for lv in levels]
        mode = MODE_INTRA
        residuals = intra
        if t > 0:
            inter = [lv - pv for lv, pv in zip(levels, prev_levels)]
            intra_bits = sum(_plane_cost_bits(r, nbytes) for r in intra)
            inter_bits = sum(_plane_cost_bits(r, nbytes) for r in inter)
            if inter_bits < intra_bits:
                mode = MODE_INTER
                residuals = inter
        out.append(binio.u8(mode))
        for res in residuals:
            table, bits, payload = _code_plane(res, nbytes)
            out.append(table)
            out.append(binio.u64(bits))
            out.append(payload)
        # closed loop: levels are coded losslessly, the reconstruction IS levels
        prev_levels = levels
    return PoseMapStream(len(frames), h, w, q, b"".join(out))


def decode_posemaps(stream: PoseMapStream | bytes) -> list[PoseMapPair]:
    """Reconstruct the sequence; bit-identical to the encoder's closed loop."""
    if isinstance(stream, (bytes, bytearray)):
        stream = PoseMapStream.from_bytes(bytes(stream))
    if stream.frame_count == 0:
        return []
    if not 0.0 < stream.q <= 1.0:
        raise DecodeError(f"invalid quantization step {stream.q}")
    h, w = stream.height, stream.width
    if h == 0 or w == 0:
        raise DecodeError("zero-sized pose maps")
    q = stream.q
    nbytes = _bytes_per_sample(q)
    modulus = 1 << (8 * nbytes)
    r = binio.ByteReader(stream.payload)
    frames = []
    prev_levels = None
    for t in range(stream.frame_count):
        mode = r.u8()
        if mode not in (MODE_INTRA, MODE_INTER):
            raise DecodeError(f"unknown mode flag {mode} in frame {t}")
        if mode == MODE_INTER and prev_levels is None:
            raise DecodeError("frame 0 cannot use inter mode")
        levels = []
        for plane_idx in range(_PLANES):
            table = entropy.HuffmanTable.deserialize(r.take(entropy.ALPHABET_SIZE))
            bits = r.u64()
            if bits == 0:
                present = table.present_symbols
                if len(present) != 1:
                    raise DecodeError(f"empty payload with non-degenerate table in frame {t}")
                raw = np.full(h * w * nbytes, present[0], dtype=np.uint8)
            else:
                payload = r.take((bits + 7) // 8)
                raw = np.frombuffer(
                    entropy.decode(table, payload, h * w * nbytes, bits), dtype=np.uint8
                )
            res = _bytes_to_residual(raw, (h, w), nbytes)
            if mode == MODE_INTRA:
                levels.append(_intra_reconstruct(res, modulus))
            else:
                levels.append((prev_levels[plane_idx] + res) % modulus)
        # the top level can land a hair above 1.0 (round(1/q)*q > 1); clipping
        # affects that level only and re-quantizes to the same level, so the
        # closed loop is unharmed
        rec = [np.clip(lv * q, 0.0, 1.0) for lv in levels]
        front = np.stack(rec[:3], axis=-1)
        back = np.stack(rec[3:], axis=-1)
        frames.append(
            PoseMapPair(
                front,
                back,
                (front != 0).any(axis=-1).astype(np.uint8),
                (back != 0).any(axis=-1).astype(np.uint8),
            )
        )
        prev_levels = levels
    if not r.done():
        raise DecodeError(f"{len(stream.payload) - r.pos} trailing bytes after last frame")
    return frames
