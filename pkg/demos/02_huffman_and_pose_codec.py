#!/usr/bin/env python3
"""Exercise the entropy layer: canonical Huffman tables and the lossless
SMPL-X parameter codec with its temporal XOR delta."""

import numpy as np

from gsavatar import build_table, decode, decode_smplx, encode, encode_smplx
from gsavatar.synthetic import make_pose_sequence, make_template

rng = np.random.default_rng(0)

# --- raw Huffman on skewed bytes -------------------------------------------
data = rng.choice(256, 40_000, p=np.r_[0.6, np.full(255, 0.4 / 255)]).astype(np.uint8)
table = build_table(np.bincount(data, minlength=256))
payload, bits = encode(table, data.tobytes())
hist = np.bincount(data, minlength=256)
p = hist[hist > 0] / hist.sum()
print(f"skewed bytes: {len(data)} raw -> {len(payload)} coded "
      f"({bits / len(data):.2f} bits/symbol, entropy {-float(p @ np.log2(p)):.2f})")
assert decode(table, payload, len(data), bits) == data.tobytes()

# --- lossless pose codec ----------------------------------------------------
template = make_template(seed=0)
poses = make_pose_sequence(template, 300, seed=2)
raw_bytes = 300 * 4 * sum(poses[0].dims)
for use_delta, label in ((True, "xor-delta"), (False, "plain huffman")):
    stream = encode_smplx(poses, use_delta=use_delta)
    out = decode_smplx(stream)
    exact = all(a.as_vector().tobytes() == b.as_vector().tobytes() for a, b in zip(poses, out))
    print(f"{label}: {raw_bytes} -> {len(stream.to_bytes())} bytes "
          f"({raw_bytes / len(stream.to_bytes()):.2f}x), bit-exact: {exact}")
