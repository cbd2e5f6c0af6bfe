"""Lossless motion-layer codec for SMPL-X parameter sequences.

Frames serialize to raw little-endian float32 bytes (theta, beta, psi
concatenated), each frame is XOR-ed byte-wise against the previous frame's raw
bytes, and one shared Huffman table codes the whole residual stream. The XOR
delta preserves exact bit patterns (NaN payloads and -0.0 included) while
letting temporally coherent sequences compress far below raw size; a header
flag can disable it for plain whole-sequence Huffman coding.
"""

from dataclasses import dataclass

import numpy as np

from . import binio, entropy
from .avatar import SmplxPose
from .errors import DecodeError


@dataclass
class SmplxStream:
    """Coded pose sequence: header, shared Huffman table, payload."""

    frame_count: int
    theta_dim: int
    beta_dim: int
    psi_dim: int
    delta: bool
    table: entropy.HuffmanTable | None
    bit_count: int
    payload: bytes

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.theta_dim, self.beta_dim, self.psi_dim

    def to_bytes(self) -> bytes:
        table = self.table.serialize() if self.table else bytes(entropy.ALPHABET_SIZE)
        return b"".join(
            [
                binio.u32(self.frame_count),
                binio.u32(self.theta_dim),
                binio.u32(self.beta_dim),
                binio.u32(self.psi_dim),
                binio.u8(1 if self.delta else 0),
                table,
                binio.u64(self.bit_count),
                self.payload,
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "SmplxStream":
        r = binio.ByteReader(data)
        frame_count = r.u32()
        dims = (r.u32(), r.u32(), r.u32())
        delta_flag = r.u8()
        if delta_flag not in (0, 1):
            raise DecodeError(f"unknown delta flag {delta_flag}")
        table_bytes = r.take(entropy.ALPHABET_SIZE)
        bit_count = r.u64()
        payload = r.take((bit_count + 7) // 8)
        if not r.done():
            raise DecodeError(f"{len(data) - r.pos} trailing bytes after payload")
        table = entropy.HuffmanTable.deserialize(table_bytes) if frame_count else None
        return cls(frame_count, *dims, bool(delta_flag), table, bit_count, payload)


def _frame_matrix(frames: list[SmplxPose]) -> tuple[np.ndarray, tuple[int, int, int]]:
    dims = frames[0].dims
    rows = []
    for f in frames:
        if f.dims != dims:
            raise ValueError(f"frame {f.frame_index} dims {f.dims} != {dims}")
        rows.append(np.frombuffer(f.as_vector().astype("<f4").tobytes(), dtype=np.uint8))
    return np.stack(rows), dims


def encode_smplx(frames, use_delta: bool = True) -> SmplxStream:
    """Losslessly code a pose sequence; decode_smplx inverts it bit-exactly."""
    frames = list(frames)
    if not frames:
        return SmplxStream(0, 0, 0, 0, use_delta, None, 0, b"")
    raw, dims = _frame_matrix(frames)
    if use_delta:
        coded = raw.copy()
        coded[1:] ^= raw[:-1]
    else:
        coded = raw
    stream_bytes = coded.tobytes()
    table = entropy.build_table(np.bincount(coded.reshape(-1), minlength=256))
    payload, bit_count = entropy.encode(table, stream_bytes)
    return SmplxStream(len(frames), *dims, use_delta, table, bit_count, payload)


def decode_smplx(stream: SmplxStream | bytes) -> list[SmplxPose]:
    """Inverse of encode_smplx; raises DecodeError on truncated or inconsistent data."""
    if isinstance(stream, (bytes, bytearray)):
        stream = SmplxStream.from_bytes(bytes(stream))
    if stream.frame_count == 0:
        return []
    frame_bytes = 4 * (stream.theta_dim + stream.beta_dim + stream.psi_dim)
    total = stream.frame_count * frame_bytes
    decoded = entropy.decode(stream.table, stream.payload, total, stream.bit_count)
    coded = np.frombuffer(decoded, dtype=np.uint8).reshape(stream.frame_count, frame_bytes)
    if stream.delta:
        raw = np.bitwise_xor.accumulate(coded, axis=0)
    else:
        raw = coded
    dims = stream.dims
    poses = []
    for i in range(stream.frame_count):
        vec = np.frombuffer(raw[i].tobytes(), dtype="<f4")
        poses.append(SmplxPose.from_vector(vec, dims, frame_index=i))
    return poses
