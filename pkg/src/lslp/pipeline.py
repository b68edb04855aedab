"""Stage-by-stage pyramid training on a :class:`~lslp.data.Dataset`.

Stages are named ``ae-k`` and ``gan-k``. Autoencoders come first; ``gan-k``
needs the frozen ``ae-k`` (and ``ae-(k-1)`` when rough codes come from
decoded clouds).
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ladder_of, train_config
from .data import Dataset
from .pyramid import Pyramid, PyramidStage, write_manifest
from .training import extract_latents, reconstruct, train_autoencoder, train_latent_gan

ROUGH_SOURCES = ("ground_truth", "decoded")


class PrerequisiteError(RuntimeError):
    pass


def stage_seed(seed: int, kind: str, level: int) -> int:
    return int(np.random.SeedSequence([seed, level, 0 if kind == "ae" else 1]).generate_state(1)[0])


def parse_stages(selector: str, K: int) -> list:
    if selector == "all":
        return [("ae", k) for k in range(K + 1)] + [("gan", k) for k in range(K + 1)]
    m = re.fullmatch(r"(ae|gan)-(\d+)", selector)
    if not m or int(m.group(2)) > K:
        raise ValueError(f"bad stage selector {selector!r}; use all, ae-0..ae-{K} or gan-0..gan-{K}")
    return [(m.group(1), int(m.group(2)))]


def fit_autoencoder(ds: Dataset, cfg: dict, k: int, seed: int = 0, on_epoch=None):
    tc = train_config(cfg, "autoencoder", seed=stage_seed(seed, "ae", k))
    return train_autoencoder(ds.level(k, "train"), tc, latent_dim=ds.ladder.latent_dims[k], on_epoch=on_epoch)


def latent_dataset(ds: Dataset, cfg: dict, k: int, encoder, prev_ae=None):
    """Codes for training ``gan-k``: rough codes come from ground-truth level
    ``k-1`` clouds or, with ``rough_source: decoded``, from their
    reconstructions by ``ae-(k-1)``."""
    clouds = ds.level(k, "train")
    if k == 0:
        return extract_latents(encoder, clouds, None, level=0)
    source = cfg["gan"].get("rough_source", "ground_truth")
    if source not in ROUGH_SOURCES:
        raise ValueError(f"rough_source must be one of {ROUGH_SOURCES}")
    prev = ds.level(k - 1, "train")
    if source == "decoded":
        if prev_ae is None:
            raise PrerequisiteError(f"gan-{k} with decoded rough codes needs ae-{k - 1}")
        prev = reconstruct(prev_ae[0], prev_ae[1], prev)
    return extract_latents(encoder, clouds, prev, level=k)


def fit_gan(ds: Dataset, cfg: dict, k: int, encoder, prev_ae=None, seed: int = 0, on_epoch=None):
    tc = train_config(cfg, "gan", seed=stage_seed(seed, "gan", k))
    data = latent_dataset(ds, cfg, k, encoder, prev_ae)
    g = cfg["gan"]
    return train_latent_gan(data, tc, conditional=k > 0,
                            condition_discriminator=g.get("condition_discriminator", True),
                            generator_final_scale=g.get("generator_final_scale", 0.1),
                            on_epoch=on_epoch)


def train_pyramid(ds: Dataset, cfg: dict, seed: int = 0) -> tuple:
    """Train every stage in memory; returns ``(pyramid, histories)``."""
    ladder = ladder_of(cfg)
    if ladder.sizes != ds.ladder.sizes:
        raise ValueError(f"dataset ladder {ds.ladder.sizes} does not match config {ladder.sizes}")
    aes = [fit_autoencoder(ds, cfg, k, seed) for k in ladder.levels]
    histories = {f"ae-{k}": r.history for k, r in enumerate(aes)}
    stages = []
    for k in ladder.levels:
        prev = (aes[k - 1].encoder, aes[k - 1].decoder) if k else None
        g = fit_gan(ds, cfg, k, aes[k].encoder, prev, seed)
        histories[f"gan-{k}"] = g.history
        stages.append(PyramidStage(k, ladder.size(k), aes[k].encoder, aes[k].decoder, g.generator, g.discriminator))
    pyr = Pyramid(ladder, stages)
    pyr.validate()
    return pyr, histories


# --------------------------------------------------------------------------
# on-disk training used by the CLI

def _log_writer(path: Path, stage: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = path.open("w")

    def write(record):
        fh.write(" ".join([f"stage={stage}"] + [f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}"
                                               for k, v in record.items()]) + "\n")
        fh.flush()

    return fh, write


def _write_history(fh, write, history):
    for record in history:
        write(record)
    fh.close()


def run_stages(ds: Dataset, cfg: dict, out_dir, selector: str = "all", seed: int = 0) -> list:
    """Train the selected stages into ``out_dir``; returns written paths.

    Writes ``ae-k.ckpt`` / ``gan-k.ckpt``, per-epoch logs under ``logs/`` and,
    once every stage exists, ``pyramid.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ladder = ladder_of(cfg)
    if ladder.sizes != ds.ladder.sizes:
        raise ValueError(f"dataset ladder {ds.ladder.sizes} does not match config {ladder.sizes}")
    written = []
    for kind, k in parse_stages(selector, ladder.K):
        meta = {"seed": seed, "stage": f"{kind}-{k}", "config": cfg}
        if kind == "ae":
            result = fit_autoencoder(ds, cfg, k, seed)
            meta["epoch"] = len(result.history) - 1
            path = save_checkpoint({"encoder": result.encoder, "decoder": result.decoder},
                                   out / f"ae-{k}.ckpt", level=k, metadata=meta)
        else:
            ae_path = out / f"ae-{k}.ckpt"
            if not ae_path.exists():
                raise PrerequisiteError(f"stage gan-{k} requires stage ae-{k}; train ae-{k} first")
            ae, _ = load_checkpoint(ae_path, expected_level=k)
            prev = None
            if k and cfg["gan"].get("rough_source", "ground_truth") == "decoded":
                prev_path = out / f"ae-{k - 1}.ckpt"
                if not prev_path.exists():
                    raise PrerequisiteError(f"stage gan-{k} requires stage ae-{k - 1}; train ae-{k - 1} first")
                p, _ = load_checkpoint(prev_path, expected_level=k - 1)
                prev = (p["encoder"], p["decoder"])
            result = fit_gan(ds, cfg, k, ae["encoder"], prev, seed)
            meta["epoch"] = len(result.history)
            path = save_checkpoint({"generator": result.generator, "discriminator": result.discriminator},
                                   out / f"gan-{k}.ckpt", level=k, metadata=meta)
        fh, write = _log_writer(out / "logs" / f"{kind}-{k}.log", f"{kind}-{k}")
        _write_history(fh, write, result.history)
        written += [path, out / "logs" / f"{kind}-{k}.log"]

    entries = []
    for k in ladder.levels:
        ae, gan = out / f"ae-{k}.ckpt", out / f"gan-{k}.ckpt"
        if ae.exists() and gan.exists():
            entries.append({"level": k, "n_points": ladder.size(k), "autoencoder": ae.name, "gan": gan.name})
    if len(entries) == ladder.K + 1:
        written.append(write_manifest(out / "pyramid.json", ladder, entries))
    return written


def read_log(path) -> list:
    """Parse a per-epoch log back into dicts."""
    records = []
    for line in Path(path).read_text().splitlines():
        rec = {}
        for token in line.split():
            key, _, val = token.partition("=")
            try:
                rec[key] = json.loads(val)
            except json.JSONDecodeError:
                rec[key] = val
        records.append(rec)
    return records
