"""
Point clouds, resolution ladders and distances
==============================================

Synthetic shapes sampled at three nested resolutions, the kNN-averaging
upsampler, and the reconstruction and set-level metrics.
"""
# %%
from pathlib import Path

import numpy as np

from lslp.data import synthetic_dataset, synthetic_shape
from lslp.metrics import chamfer, coverage, emd_approx, emd_exact, jsd, mmd
from lslp.pointcloud import ResolutionLadder, knn_upsample
from lslp.render import render_clouds

out = Path(__file__).with_name("output")
out.mkdir(exist_ok=True)

# %%
# A ladder with 64 points at level 0 doubles twice.
ladder = ResolutionLadder(n0=64, K=2)
print("sizes:", ladder.sizes)

shapes = synthetic_dataset(8, ladder, seed=0)
torus = shapes[1]
print(torus.shape_id, torus.params)

# levels are prefixes of one farthest-point ordering
x0, x1, x2 = torus.clouds
print("nested:", np.array_equal(x0, x1[:64]) and np.array_equal(x1, x2[:128]))

# %%
# Doubling by averaging each point's 7 nearest neighbours.
up = knn_upsample(x0)
print("U(x0):", up.shape, " CD to level 1:", round(chamfer(up, x1), 4),
      " CD(x0, x1):", round(chamfer(x0, x1), 4))
render_clouds([x0, up, x1], out / "upsampling.png", titles=["x0 (64)", "U(x0) (128)", "x1 (128)"])

# %%
# EMD: exact assignment against the auction approximation.
a = synthetic_shape("sphere", {"radius": 1.0}, 256, seed=1)
b = synthetic_shape("box", {"extents": [0.6, 0.6, 0.6]}, 256, seed=2)
exact, approx = emd_exact(a, b), emd_approx(a, b, tol=0.01)
print(f"EMD exact {exact:.4f}  approx {approx:.4f}  ratio {approx / exact:.5f}")

# %%
# Set metrics: spheres against tori, and a set against itself.
spheres = [s.clouds[2] for s in shapes if s.label == "sphere"]
tori = [s.clouds[2] for s in shapes if s.label == "torus"]
print("JSD(spheres, tori) =", round(jsd(spheres, tori), 4), " JSD(spheres, spheres) =", jsd(spheres, spheres))
print("COV =", coverage(spheres, tori), " MMD-CD =", round(mmd(spheres, tori), 4))
