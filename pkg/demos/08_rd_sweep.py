#!/usr/bin/env python3
"""Rate-distortion sweep over the weight bit width Q and the pose-map step q.

Prints the same CSV the `gsavatar rd-sweep` command emits; the PSNR column is
scored against the unquantized pipeline render of the same scene.
"""

from gsavatar.container import rd_sweep
from gsavatar.synthetic import make_scene

scene = make_scene(seed=0, frames=4, map_resolution=(48, 48), image_size=(96, 96))
rows = rd_sweep(scene, bit_widths=[8, 6, 4, 2], q_values=[1 / 255, 4 / 255])

print("Q,q,bytes_per_frame,psnr_db,ssim")
for row in rows:
    print(f"{row['Q']},{row['q']:.6f},{row['bytes_per_frame']:.1f},"
          f"{row['psnr_db']:.3f},{row['ssim']:.5f}")

best = max(rows, key=lambda r: r["psnr_db"] - 0.001 * r["bytes_per_frame"])
print(f"\nknee-ish point: Q={best['Q']}, q={best['q']:.5f} "
      f"at {best['bytes_per_frame']:.0f} bytes/frame, {best['psnr_db']:.2f} dB")
