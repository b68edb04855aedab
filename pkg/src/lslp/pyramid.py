"""The latent-space Laplacian pyramid.

Each level ``k >= 1`` refines a cloud of ``n_{k-1}`` points into one of
``n_k = 2 n_{k-1}`` points:

    rough cloud   U(x_prev)                (kNN-averaging upsampling)
    rough code    h~ = f_k(U(x_prev))
    residual      r  = G_k(h~, z_k)
    code          h  = h~ + r
    output        X_k = g_k(h)

Level 0 is generated unconditionally as ``g_0(G_0(z_0))``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nets
from .checkpoint import load_checkpoint, save_checkpoint
from .pointcloud import ResolutionLadder, as_cloud, knn_upsample

MANIFEST_FORMAT = "lslp-pyramid/1"


class ResolutionError(ValueError):
    pass


class PyramidError(ValueError):
    pass


@dataclass
class PyramidStage:
    level: int
    n_points: int
    encoder: nets.NetworkParams | None = None
    decoder: nets.NetworkParams | None = None
    generator: nets.NetworkParams | None = None
    discriminator: nets.NetworkParams | None = None

    @property
    def latent_dim(self) -> int:
        return self.decoder.arch["latent_dim"]

    def validate(self) -> None:
        missing = [name for name in ("encoder", "decoder", "generator") if getattr(self, name) is None]
        if missing:
            raise PyramidError(f"stage {self.level} lacks {', '.join(missing)}")
        if self.encoder.arch["n_points"] != self.n_points:
            raise PyramidError(f"stage {self.level}: encoder takes {self.encoder.arch['n_points']} points, "
                               f"stage resolution is {self.n_points}")
        if self.decoder.arch["n_points"] != self.n_points:
            raise PyramidError(f"stage {self.level}: decoder emits {self.decoder.arch['n_points']} points, "
                               f"stage resolution is {self.n_points}")
        d = self.decoder.arch["latent_dim"]
        if self.encoder.arch["latent_dim"] != d or self.generator.arch["latent_dim"] != d:
            raise PyramidError(f"stage {self.level}: latent dimensions disagree")
        conditional = self.generator.arch["cond_dim"] > 0
        if conditional != (self.level > 0):
            raise PyramidError(f"stage {self.level}: generator must be "
                               f"{'conditional' if self.level else 'unconditional'}")


@dataclass
class Pyramid:
    ladder: ResolutionLadder
    stages: list = field(default_factory=list)

    def validate(self) -> None:
        if len(self.stages) != self.ladder.K + 1:
            raise PyramidError(f"pyramid has {len(self.stages)} stages, ladder needs {self.ladder.K + 1}")
        for k, stage in enumerate(self.stages):
            if stage.level != k:
                raise PyramidError(f"stage {k} is labelled level {stage.level}")
            if stage.n_points != self.ladder.size(k):
                raise PyramidError(f"stage {k} resolution {stage.n_points} != ladder size {self.ladder.size(k)}")
            if k and stage.n_points != 2 * self.stages[k - 1].n_points:
                raise PyramidError(f"stage {k} does not double stage {k - 1}")
            stage.validate()
            if stage.latent_dim != self.ladder.latent_dims[k]:
                raise PyramidError(f"stage {k} latent dim {stage.latent_dim} != {self.ladder.latent_dims[k]}")

    @property
    def K(self) -> int:
        return self.ladder.K

    def without_correction(self) -> "Pyramid":
        """Copy whose conditional generators output exactly zero, so every
        level reduces to ``g_k(f_k(U(x_prev)))``."""
        stages = []
        for s in self.stages:
            gen = s.generator.zero_final_layer() if s.level > 0 else s.generator
            stages.append(PyramidStage(s.level, s.n_points, s.encoder, s.decoder, gen, s.discriminator))
        return Pyramid(self.ladder, stages)


def noise(generator: nets.NetworkParams, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(generator.arch["noise_dim"])


def refine_step(stage: PyramidStage, x_prev, z, *, return_intermediates: bool = False):
    """One refinement: returns ``(X_k, h_k)`` (plus a dict of intermediates)."""
    x_prev = as_cloud(x_prev)
    if x_prev.shape[0] * 2 != stage.n_points:
        raise ResolutionError(f"level {stage.level} expects {stage.n_points // 2} input points, "
                              f"got {x_prev.shape[0]}")
    upsampled = knn_upsample(x_prev)
    rough = nets.encode(stage.encoder, upsampled)
    residual = nets.generate(stage.generator, rough, z)
    code = rough + residual
    cloud = nets.decode(stage.decoder, code)
    if return_intermediates:
        return cloud, code, {"upsampled": upsampled, "rough_code": rough, "residual": residual}
    return cloud, code


def _check_seeds(seeds, count, what):
    seeds = [int(s) for s in seeds]
    if len(seeds) != count:
        raise ValueError(f"{what} needs {count} noise seeds, got {len(seeds)}")
    return seeds


def synthesize(pyr: Pyramid, seeds) -> list:
    """Generate ``[X_0, ..., X_K]`` from ``K + 1`` noise seeds."""
    pyr.validate()
    seeds = _check_seeds(seeds, pyr.K + 1, "synthesis")
    s0 = pyr.stages[0]
    h0 = nets.generate(s0.generator, None, noise(s0.generator, seeds[0]))
    clouds = [nets.decode(s0.decoder, h0)]
    for k in range(1, pyr.K + 1):
        stage = pyr.stages[k]
        x, _ = refine_step(stage, clouds[-1], noise(stage.generator, seeds[k]))
        clouds.append(x)
    return clouds


def upsample_shape(pyr: Pyramid, x0, seeds) -> list:
    """Refine a given ``n_0``-point cloud: returns ``[X_1, ..., X_K]``."""
    pyr.validate()
    x0 = as_cloud(x0)
    if x0.shape[0] != pyr.ladder.n0:
        raise ResolutionError(f"upsampling input must have n0={pyr.ladder.n0} points, got {x0.shape[0]}")
    seeds = _check_seeds(seeds, pyr.K, "upsampling")
    clouds, x = [], x0
    for k in range(1, pyr.K + 1):
        stage = pyr.stages[k]
        x, _ = refine_step(stage, x, noise(stage.generator, seeds[k - 1]))
        clouds.append(x)
    return clouds


def shape_seeds(seed: int, count: int, per_shape: int) -> np.ndarray:
    """Independent noise seeds, one row per shape and one column per level."""
    state = np.random.SeedSequence(seed).generate_state(count * per_shape)
    return state.reshape(count, per_shape).astype(np.int64)


def synthesize_many(pyr: Pyramid, count: int, seed: int = 0) -> list:
    return [synthesize(pyr, row) for row in shape_seeds(seed, count, pyr.K + 1)]


def upsample_many(pyr: Pyramid, clouds, seed: int = 0) -> list:
    return [upsample_shape(pyr, x, row) for x, row in zip(clouds, shape_seeds(seed, len(clouds), pyr.K))]


# --------------------------------------------------------------------------
# manifests

def save_stage(stage: PyramidStage, directory, metadata: dict | None = None) -> dict:
    """Write the stage's checkpoints; returns the manifest entry."""
    directory = Path(directory)
    entry = {"level": stage.level, "n_points": stage.n_points}
    if stage.encoder is not None:
        save_checkpoint({"encoder": stage.encoder, "decoder": stage.decoder},
                        directory / f"ae-{stage.level}.ckpt", level=stage.level, metadata=metadata)
        entry["autoencoder"] = f"ae-{stage.level}.ckpt"
    if stage.generator is not None:
        nets_ = {"generator": stage.generator}
        if stage.discriminator is not None:
            nets_["discriminator"] = stage.discriminator
        save_checkpoint(nets_, directory / f"gan-{stage.level}.ckpt", level=stage.level, metadata=metadata)
        entry["gan"] = f"gan-{stage.level}.ckpt"
    return entry


def write_manifest(path, ladder: ResolutionLadder, entries: list) -> Path:
    path = Path(path)
    manifest = {"format": MANIFEST_FORMAT, "ladder": ladder.to_dict(),
                "stages": sorted(entries, key=lambda e: e["level"])}
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def save_pyramid(pyr: Pyramid, directory, metadata: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = [save_stage(s, directory, metadata) for s in pyr.stages]
    return write_manifest(directory / "pyramid.json", pyr.ladder, entries)


def load_pyramid(manifest_path) -> Pyramid:
    """Load a pyramid manifest and its checkpoints, validating every
    cross-stage invariant before returning."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != MANIFEST_FORMAT:
        raise PyramidError(f"{manifest_path}: unknown manifest format {manifest.get('format')!r}")
    ladder = ResolutionLadder.from_dict(manifest["ladder"])
    base = manifest_path.parent
    stages = []
    for entry in manifest["stages"]:
        k = entry["level"]
        stage = PyramidStage(k, entry["n_points"])
        if "autoencoder" in entry:
            ae, _ = load_checkpoint(base / entry["autoencoder"], expected_level=k)
            stage.encoder, stage.decoder = ae["encoder"], ae["decoder"]
        if "gan" in entry:
            gan, _ = load_checkpoint(base / entry["gan"], expected_level=k)
            stage.generator, stage.discriminator = gan["generator"], gan.get("discriminator")
        stages.append(stage)
    pyr = Pyramid(ladder, stages)
    pyr.validate()
    return pyr
