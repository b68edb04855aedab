"""
Coarse-to-fine synthesis and upsampling
=======================================

Trains a small two-level pyramid (autoencoders plus latent GANs), samples
new shapes, and upsamples held-out 64-point clouds. The same pyramid with
its residual generators zeroed serves as the uncorrected baseline.

Training here is cut short so the script finishes in under a minute, so
its numbers are not representative in either direction. Point
``LSLP_PYRAMID`` at a ``pyramid.json`` trained with the full desk preset
(for example one written by the acceptance suite's cache) to run the same
comparison on a converged model.
"""
# %%
import os
from pathlib import Path

import numpy as np

from lslp.config import ladder_of, load_config
from lslp.data import Dataset, assign_split, synthetic_dataset
from lslp.metrics import chamfer, coverage, jsd, mmd, pairwise_distances
from lslp.pipeline import train_pyramid
from lslp.pointcloud import knn_upsample
from lslp.pyramid import load_pyramid, save_pyramid, synthesize_many, upsample_many
from lslp.render import render_clouds

out = Path(__file__).with_name("output")
out.mkdir(exist_ok=True)

cfg = load_config(preset="desk")
trained = os.environ.get("LSLP_PYRAMID")
if not trained:
    cfg["data"]["n_shapes"] = 60
    cfg["autoencoder"]["epochs"] = 15
    cfg["gan"]["epochs"] = 60
ladder = ladder_of(cfg)
shapes = synthetic_dataset(cfg["data"]["n_shapes"], ladder, seed=0)
ds = Dataset(ladder, shapes, assign_split(shapes, cfg["data"]["test_fraction"], seed=0))

if trained:
    pyr = load_pyramid(trained)
else:
    pyr, histories = train_pyramid(ds, cfg, seed=0)
    print({k: round(v[-1].get("loss", v[-1].get("d_loss")), 4) for k, v in histories.items()})

# %%
# Checkpoints plus a manifest; loading validates every stage.
manifest = save_pyramid(pyr, out / "pyramid")
pyr = load_pyramid(manifest)

# %%
# Synthesis: X0 = g0(G0(z0)), then two refinement steps.
samples = synthesize_many(pyr, 4, seed=1)
render_clouds([c for s in samples[:2] for c in s], out / "synthesis.png",
              titles=["64", "128", "256"] * 2, cols=3)

test = list(ds.level(2, "test"))
for name, p in (("pyramid", pyr), ("baseline", pyr.without_correction())):
    gen = [c[-1] for c in synthesize_many(p, 30, seed=2)]
    table = pairwise_distances(gen, test)
    print(f"{name:9s} MMD-CD {mmd(gen, test, table=table):.4f}  COV-CD {coverage(gen, test, table=table):.3f}"
          f"  JSD {jsd(gen, test):.4f}")

# %%
# Upsampling held-out clouds four-fold against plain kNN averaging.
x0, ref = ds.level(0, "test"), ds.level(2, "test")
ups = upsample_many(pyr, x0, seed=3)
print("CD pyramid:", np.mean([chamfer(u[-1], r) for u, r in zip(ups, ref)]).round(3),
      " CD U(U(x0)):", np.mean([chamfer(knn_upsample(knn_upsample(x)), r) for x, r in zip(x0, ref)]).round(3))
render_clouds([x0[0], ups[0][0], ups[0][1], ref[0]], out / "upsampling_learned.png",
              titles=["input 64", "128", "256", "reference 256"])
