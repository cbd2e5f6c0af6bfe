"""Canonical Huffman coding over the 256-symbol byte alphabet, with MSB-first bit I/O.

The table serializes as exactly 256 code-length bytes (length 0 = symbol absent)
and is rebuilt canonically on the decoder side, so encoder and decoder always
agree on the codes. Chunk framing (symbol counts, bit counts) is owned by callers.
"""

import heapq

import numpy as np

from .errors import DecodeError

ALPHABET_SIZE = 256
# Longest canonical code we accept. Byte histograms of desk-scale payloads can
# never produce codes anywhere near this deep (depth grows ~1.44*log2(total)).
MAX_CODE_LENGTH = 48

_BIT_WEIGHTS = {n: (1 << np.arange(n - 1, -1, -1, dtype=np.uint64)) for n in range(1, 65)}


class BitWriter:
    """Accumulates bits MSB-first; bytes are padded with zero bits at the end."""

    def __init__(self):
        self._chunks = []  # arrays of 0/1 uint8, one entry per appended write
        self._bit_count = 0

    @property
    def bit_count(self) -> int:
        return self._bit_count

    def write_int(self, value: int, nbits: int):
        if nbits == 0:
            return
        bits = (value >> np.arange(nbits - 1, -1, -1, dtype=np.uint64)) & np.uint64(1)
        self._chunks.append(bits.astype(np.uint8))
        self._bit_count += nbits

    def write_codes(self, codes: np.ndarray, lengths: np.ndarray):
        """Append many variable-length codes at once (codes uint64, lengths uint8)."""
        lengths = lengths.astype(np.int64)
        total = int(lengths.sum())
        if total == 0:
            return
        starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
        owner = np.repeat(np.arange(len(codes)), lengths)
        within = np.arange(total) - starts[owner]
        shift = (lengths[owner] - 1 - within).astype(np.uint64)
        bits = (codes.astype(np.uint64)[owner] >> shift) & np.uint64(1)
        self._chunks.append(bits.astype(np.uint8))
        self._bit_count += total

    def getvalue(self) -> bytes:
        if not self._chunks:
            return b""
        return np.packbits(np.concatenate(self._chunks)).tobytes()


class BitReader:
    """Reads MSB-first bits back out of a byte buffer."""

    def __init__(self, data: bytes, bit_count: int | None = None):
        self._bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        self._limit = len(self._bits) if bit_count is None else bit_count
        if self._limit > len(self._bits):
            raise DecodeError(
                f"bit count {self._limit} exceeds buffer of {len(self._bits)} bits"
            )
        self.pos = 0

    @property
    def bits_read(self) -> int:
        return self.pos

    def read_int(self, nbits: int) -> int:
        if self.pos + nbits > self._limit:
            raise DecodeError("bit stream exhausted")
        if nbits == 0:
            return 0
        chunk = self._bits[self.pos : self.pos + nbits]
        self.pos += nbits
        return int(chunk.astype(np.uint64) @ _BIT_WEIGHTS[nbits])

    def read_fixed(self, count: int, nbits: int) -> np.ndarray:
        """Read `count` fixed-width integers as a uint64 array."""
        total = count * nbits
        if self.pos + total > self._limit:
            raise DecodeError("bit stream exhausted")
        chunk = self._bits[self.pos : self.pos + total].reshape(count, nbits)
        self.pos += total
        return chunk.astype(np.uint64) @ _BIT_WEIGHTS[nbits]


class HuffmanTable:
    """Canonical prefix code over bytes, defined entirely by per-symbol lengths."""

    def __init__(self, lengths: np.ndarray):
        lengths = np.asarray(lengths, dtype=np.uint8)
        if lengths.shape != (ALPHABET_SIZE,):
            raise ValueError("lengths must have exactly 256 entries")
        self.lengths = lengths
        self.codes = self._assign_codes(lengths)
        self._decode_tables = None

    @staticmethod
    def _assign_codes(lengths: np.ndarray) -> np.ndarray:
        present = np.nonzero(lengths)[0]
        if len(present) == 0:
            raise DecodeError("empty Huffman table")
        maxlen = int(lengths.max())
        if maxlen > MAX_CODE_LENGTH:
            raise DecodeError(f"code length {maxlen} exceeds limit {MAX_CODE_LENGTH}")
        kraft = np.sum(2.0 ** -lengths[present].astype(np.float64))
        if kraft > 1.0 + 1e-12:
            raise DecodeError(f"invalid code lengths: Kraft sum {kraft:.6f} > 1")
        codes = np.zeros(ALPHABET_SIZE, dtype=np.uint64)
        # canonical order: ascending (length, symbol)
        order = present[np.argsort(lengths[present], kind="stable")]
        code = 0
        prev_len = int(lengths[order[0]])
        for sym in order:
            ln = int(lengths[sym])
            code <<= ln - prev_len
            if code >= (1 << ln):
                raise DecodeError("invalid code lengths: canonical overflow")
            codes[sym] = code
            code += 1
            prev_len = ln
        return codes

    @classmethod
    def from_histogram(cls, counts) -> "HuffmanTable":
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (ALPHABET_SIZE,):
            raise ValueError("histogram must have exactly 256 entries")
        if np.any(counts < 0):
            raise ValueError("histogram counts must be nonnegative")
        present = np.nonzero(counts)[0]
        if len(present) == 0:
            raise ValueError("histogram is empty: at least one count must be nonzero")
        lengths = np.zeros(ALPHABET_SIZE, dtype=np.uint8)
        if len(present) == 1:
            lengths[present[0]] = 1
            return cls(lengths)
        # heap items: (count, creation order, leaf symbols); creation order makes
        # tie-breaking deterministic
        heap = [(int(counts[s]), int(s), [int(s)]) for s in present]
        heapq.heapify(heap)
        seq = ALPHABET_SIZE
        depth = np.zeros(ALPHABET_SIZE, dtype=np.int64)
        while len(heap) > 1:
            c1, _, s1 = heapq.heappop(heap)
            c2, _, s2 = heapq.heappop(heap)
            merged = s1 + s2
            depth[merged] += 1
            heapq.heappush(heap, (c1 + c2, seq, merged))
            seq += 1
        lengths[present] = depth[present]
        return cls(lengths)

    @classmethod
    def from_lengths(cls, lengths) -> "HuffmanTable":
        return cls(np.asarray(lengths, dtype=np.uint8))

    def serialize(self) -> bytes:
        return self.lengths.tobytes()

    @classmethod
    def deserialize(cls, data: bytes) -> "HuffmanTable":
        if len(data) != ALPHABET_SIZE:
            raise DecodeError(f"Huffman table must be 256 bytes, got {len(data)}")
        return cls(np.frombuffer(data, dtype=np.uint8).copy())

    @property
    def present_symbols(self) -> np.ndarray:
        return np.nonzero(self.lengths)[0]

    def payload_bits(self, counts) -> int:
        """Exact coded size in bits of data with the given byte histogram."""
        counts = np.asarray(counts, dtype=np.int64)
        return int((counts * self.lengths.astype(np.int64)).sum())

    def _build_decode_tables(self):
        lengths = self.lengths.astype(np.int64)
        maxlen = int(lengths.max())
        k = min(maxlen, 12)
        prim_sym = np.zeros(1 << k, dtype=np.int64)
        prim_len = np.zeros(1 << k, dtype=np.int64)
        for sym in self.present_symbols:
            ln = int(lengths[sym])
            if ln <= k:
                base = int(self.codes[sym]) << (k - ln)
                prim_sym[base : base + (1 << (k - ln))] = sym
                prim_len[base : base + (1 << (k - ln))] = ln
        # per-length canonical ranges for codes longer than the primary table
        first_code = {}
        sym_by_len = {}
        for ln in range(k + 1, maxlen + 1):
            syms = np.nonzero(lengths == ln)[0]
            if len(syms):
                first_code[ln] = int(self.codes[syms[0]])
                sym_by_len[ln] = syms
        self._decode_tables = (k, maxlen, prim_sym.tolist(), prim_len.tolist(), first_code, sym_by_len)
        return self._decode_tables


def build_table(histogram) -> HuffmanTable:
    """Optimal prefix code for a 256-bin byte histogram."""
    return HuffmanTable.from_histogram(histogram)


def encode(table: HuffmanTable, data) -> tuple[bytes, int]:
    """Code a byte sequence; returns (payload padded to whole bytes, exact bit count)."""
    arr = np.frombuffer(bytes(data), dtype=np.uint8)
    if len(arr) == 0:
        return b"", 0
    lens = table.lengths[arr]
    if np.any(lens == 0):
        missing = int(arr[np.argmax(lens == 0)])
        raise ValueError(f"symbol {missing} absent from Huffman table")
    writer = BitWriter()
    writer.write_codes(table.codes[arr], lens)
    return writer.getvalue(), writer.bit_count


def decode(table: HuffmanTable, payload: bytes, count: int, bit_count: int | None = None) -> bytes:
    """Decode exactly `count` symbols; raises DecodeError on truncated input.

    `bit_count`, when given, is the exact number of meaningful payload bits;
    trailing padding up to the byte boundary is ignored either way.
    """
    if count == 0:
        return b""
    avail = 8 * len(payload) if bit_count is None else bit_count
    if bit_count is not None and (bit_count + 7) // 8 > len(payload):
        raise DecodeError("payload shorter than declared bit count")
    tables = table._decode_tables or table._build_decode_tables()
    k, maxlen, prim_sym, prim_len, first_code, sym_by_len = tables
    out = bytearray(count)
    buf = payload
    nbuf = len(buf)
    acc = 0
    nacc = 0
    pos = 0
    used = 0
    kmask = (1 << k) - 1
    for i in range(count):
        while nacc < maxlen:
            if pos < nbuf:
                acc = (acc << 8) | buf[pos]
                pos += 1
                nacc += 8
            else:
                acc <<= maxlen - nacc  # virtual zero padding for the final lookahead
                nacc = maxlen
        look = (acc >> (nacc - k)) & kmask
        ln = prim_len[look]
        if ln:
            out[i] = prim_sym[look]
        else:
            sym = -1
            for ln in range(k + 1, maxlen + 1):
                code = (acc >> (nacc - ln)) & ((1 << ln) - 1)
                fc = first_code.get(ln)
                if fc is not None and fc <= code < fc + len(sym_by_len[ln]):
                    sym = int(sym_by_len[ln][code - fc])
                    break
            if sym < 0:
                raise DecodeError(f"invalid codeword at bit {used}")
            out[i] = sym
        nacc -= ln
        acc &= (1 << nacc) - 1  # keep the accumulator small
        used += ln
        if used > avail:
            raise DecodeError(
                f"bit stream exhausted after {i} of {count} symbols"
            )
    return bytes(out)
