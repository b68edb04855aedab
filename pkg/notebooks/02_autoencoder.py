"""
Point cloud autoencoder
=======================

A permutation-invariant encoder and a fully connected decoder trained with
the earth mover's distance on 64-point synthetic shapes.
"""
# %%
from pathlib import Path

import numpy as np

from lslp import nets
from lslp.data import Dataset, assign_split, synthetic_dataset
from lslp.metrics import emd_exact
from lslp.pointcloud import ResolutionLadder
from lslp.render import render_clouds, render_losses
from lslp.training import TrainConfig, reconstruct, train_autoencoder

out = Path(__file__).with_name("output")
out.mkdir(exist_ok=True)

ladder = ResolutionLadder(64, 1)
shapes = synthetic_dataset(40, ladder, seed=0)
ds = Dataset(ladder, shapes, assign_split(shapes, 0.25, seed=0))
train, test = ds.level(0, "train"), ds.level(0, "test")
print("train", train.shape, "test", test.shape)

# %%
# The encoder sorts points before the shared MLP, so any reordering of the
# input gives the same code bit for bit.
enc = nets.init_encoder(64, 128, seed=0)
perm = np.random.default_rng(0).permutation(64)
print("invariant:", np.array_equal(nets.encode(enc, train[0]), nets.encode(enc, train[0][perm])))

# %%
res = train_autoencoder(train, TrainConfig(epochs=15, learning_rate=5e-4, batch_size=10, seed=0))
for rec in res.history[::5]:
    print(f"epoch {rec['epoch']:3d}  per-point EMD {rec['loss']:.4f}")
render_losses({"ae-0": res.history}, out / "ae_loss.png")

# %%
recon = reconstruct(res.encoder, res.decoder, test)
held_out = np.mean([emd_exact(r, t) / 64 for r, t in zip(recon, test)])
print(f"held-out per-point EMD: {held_out:.4f}")
render_clouds(list(test[:4]) + list(recon[:4]), out / "reconstructions.png",
              titles=[f"test {i}" for i in range(4)] + [f"recon {i}" for i in range(4)])
