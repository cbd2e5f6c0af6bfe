#!/usr/bin/env python3
"""Project novel poses into the training pose space with +-k sigma clipping.

Wild extrapolations are pulled back to the plausibility band of the training
distribution while in-distribution poses pass through nearly unchanged.
"""

import numpy as np

from gsavatar import fit_pca, project_clip
from gsavatar.synthetic import make_pose_sequence, make_template

template = make_template(seed=0)
train = make_pose_sequence(template, 120, seed=1, amplitude=0.4)
matrix = np.stack([p.as_vector() for p in train])
basis = fit_pca(matrix, d=6, k=3.0)
print(f"pose space: D={basis.dim}, d={basis.components}, sigma={np.round(basis.sigma, 3)}")

inlier = train[7].as_vector()
print(f"\nin-distribution pose: |x - P(x)| = {np.abs(project_clip(basis, inlier) - inlier).max():.5f}")

wild = inlier + 40.0 * basis.basis[:, 0] * basis.sigma[0]
projected = project_clip(basis, wild)
coeff_in = basis.basis.T @ (wild - basis.mean)
coeff_out = basis.basis.T @ (projected - basis.mean)
print(f"wild pose coefficient 0: {coeff_in[0]:.2f} -> {coeff_out[0]:.2f} "
      f"(band edge {basis.k * basis.sigma[0]:.2f})")

twice = project_clip(basis, projected)
print(f"idempotence residual: {np.abs(twice - projected).max():.2e}")
