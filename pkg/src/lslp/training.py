"""Training: EMD autoencoders per level, latent extraction and (conditional)
latent GANs, all driven by Adam on the numpy networks in :mod:`lslp.nets`.

Runs are bitwise reproducible for a fixed seed as long as the BLAS thread
count is fixed (see :func:`lslp.utils.single_threaded`).
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from . import nets
from .metrics import emd_approx, emd_exact
from .pointcloud import knn_upsample

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "Adam",
    "TrainingDivergedError",
    "AutoencoderResult",
    "GANResult",
    "LatentDataset",
    "train_autoencoder",
    "reconstruct",
    "extract_latents",
    "train_latent_gan",
]


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float
    beta1: float = 0.9
    batch_size: int = 50
    seed: int = 0
    optimizer: str = "adam"
    beta2: float = 0.999
    lr_decay: float = 1.0  # multiplicative per epoch; 1.0 keeps the rate constant
    emd_tol: float = 0.01
    audit_size: int = 4
    gan_loss: str = "nonsaturating"
    max_loss: float = 1e3

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.gan_loss not in ("nonsaturating", "minimax"):
            raise ValueError(f"unknown GAN loss {self.gan_loss!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


class Adam:
    """Adam over a dict of named arrays, updated in place."""

    def __init__(self, tensors: dict, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.tensors = tensors
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.t = 0

    def step(self, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = math.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            self.tensors[k] -= (self.lr * corr) * m / (np.sqrt(v) + self.eps)


def _param_norm(*params) -> float:
    return float(math.sqrt(sum(float(np.sum(t.astype(np.float64) ** 2)) for p in params for t in p.tensors.values())))


def _check_finite(params, what, epoch, batch):
    for p in params:
        for name, t in p.tensors.items():
            if not np.all(np.isfinite(t)):
                raise TrainingDivergedError(f"{what}: non-finite {p.kind}.{name} after epoch {epoch} batch {batch}")


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


# --------------------------------------------------------------------------
# autoencoders

@dataclass
class AutoencoderResult:
    encoder: nets.NetworkParams
    decoder: nets.NetworkParams
    history: list = field(default_factory=list)


def reconstruct(encoder, decoder, clouds, batch_size: int = 64) -> np.ndarray:
    """``decoder(encoder(X))`` for a stack of clouds."""
    clouds = np.asarray(clouds)
    out = [nets.decode_batch(decoder, nets.encode_batch(encoder, clouds[i:i + batch_size]))
           for i in range(0, len(clouds), batch_size)]
    return np.concatenate(out)


def _emd_loss(recon, target, tol):
    """Mean per-point EMD over the batch and its gradient w.r.t. ``recon``."""
    B, n, _ = recon.shape
    grad = np.zeros_like(recon)
    total = 0.0
    for i in range(B):
        value, perm = emd_approx(recon[i], target[i], tol, return_assignment=True)
        diff = recon[i].astype(np.float64) - target[i][perm]
        dist = np.sqrt((diff**2).sum(axis=1))
        safe = np.where(dist > 0, dist, 1.0)
        grad[i] = (diff / safe[:, None]) * (dist > 0)[:, None] / (n * B)
        total += value / n
    return total / B, grad


def train_autoencoder(clouds, cfg: TrainConfig, *, latent_dim: int = 128,
                      encoder_hidden=nets.ENCODER_HIDDEN, decoder_hidden=nets.DECODER_HIDDEN,
                      on_epoch: Callable | None = None) -> AutoencoderResult:
    """Fit an encoder/decoder pair to ``clouds`` (``(N, n, 3)``) by minimizing
    the mean per-point EMD.

    ``history[0]`` holds the loss of the untrained model; entry ``e`` holds the
    mean batch loss of epoch ``e``, the running best, and an exact-EMD audit of
    a fixed mini-batch after the epoch.
    """
    clouds = np.asarray(clouds, dtype=np.float32)
    if clouds.ndim != 3 or clouds.shape[0] == 0 or clouds.shape[2] != 3:
        raise ValueError(f"expected a nonempty (N, n, 3) stack, got {clouds.shape}")
    N, n, _ = clouds.shape
    rng = np.random.default_rng(cfg.seed)
    enc = nets.init_encoder(n, latent_dim, encoder_hidden, seed=cfg.seed)
    dec = nets.init_decoder(latent_dim, n, decoder_hidden, seed=cfg.seed + 1)
    opt_e = Adam(enc.tensors, cfg.learning_rate, cfg.beta1, cfg.beta2)
    opt_d = Adam(dec.tensors, cfg.learning_rate, cfg.beta1, cfg.beta2)
    audit = clouds[: max(1, min(cfg.audit_size, N))]

    def audit_values():
        rec = reconstruct(enc, dec, audit)
        exact = np.mean([emd_exact(r, t) / n for r, t in zip(rec, audit)])
        approx = np.mean([emd_approx(r, t, cfg.emd_tol) / n for r, t in zip(rec, audit)])
        return float(exact), float(approx)

    initial = float(np.mean([emd_approx(r, t, cfg.emd_tol) / n
                             for r, t in zip(reconstruct(enc, dec, clouds), clouds)]))
    history = [{"epoch": 0, "loss": initial, "best": initial}]
    best = initial
    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.learning_rate * cfg.lr_decay ** (epoch - 1)
        opt_e.lr = opt_d.lr = lr
        losses = []
        for b, idx in enumerate(_batches(N, cfg.batch_size, rng)):
            X = clouds[idx]
            codes, cache_e = nets.forward(enc, X)
            recon, cache_d = nets.forward(dec, codes)
            loss, grad = _emd_loss(recon, X, cfg.emd_tol)
            if not math.isfinite(loss) or loss > cfg.max_loss:
                raise TrainingDivergedError(
                    f"autoencoder loss {loss} at epoch {epoch} batch {b}; "
                    f"parameter norm {_param_norm(enc, dec):.4g}")
            g_dec, (g_codes,) = nets.backward(dec, cache_d, grad)
            g_enc, _ = nets.backward(enc, cache_e, g_codes)
            opt_d.step(g_dec)
            opt_e.step(g_enc)
            _check_finite((enc, dec), "autoencoder", epoch, b)
            losses.append(loss * len(idx))
        epoch_loss = float(np.sum(losses) / N)
        best = min(best, epoch_loss)
        exact, approx = audit_values()
        record = {"epoch": epoch, "loss": epoch_loss, "best": best, "audit_exact": exact,
                  "audit_approx": approx, "lr": lr}
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        log.debug("ae n=%d epoch %d loss %.5f", n, epoch, epoch_loss)
    return AutoencoderResult(enc, dec, history)


# --------------------------------------------------------------------------
# latent codes

@dataclass
class LatentDataset:
    """Real codes ``f_k(X_k)`` and, above level 0, rough codes ``f_k(U(X_{k-1}))``
    aligned row by row."""

    level: int
    real: np.ndarray
    rough: np.ndarray | None = None

    def __post_init__(self):
        if self.real.ndim != 2 or len(self.real) == 0:
            raise ValueError("real codes must be a nonempty (N, d) array")
        if self.rough is not None and self.rough.shape != self.real.shape:
            raise ValueError(f"rough codes {self.rough.shape} misaligned with real codes {self.real.shape}")

    @property
    def dim(self) -> int:
        return self.real.shape[1]


def upsample_stack(clouds) -> np.ndarray:
    return np.stack([knn_upsample(c) for c in clouds])


def extract_latents(encoder, clouds, rough_sources=None, level: int | None = None,
                    batch_size: int = 64) -> LatentDataset:
    """Codes of a frozen encoder for level-``k`` clouds and, when
    ``rough_sources`` (level ``k-1`` clouds of the same shapes, same order) is
    given, codes of their kNN-upsampled versions."""
    clouds = np.asarray(clouds)
    real = np.concatenate([nets.encode_batch(encoder, clouds[i:i + batch_size])
                           for i in range(0, len(clouds), batch_size)])
    rough = None
    if rough_sources is not None and len(rough_sources):
        if len(rough_sources) != len(clouds):
            raise ValueError(f"{len(rough_sources)} rough sources for {len(clouds)} shapes")
        up = upsample_stack(rough_sources)
        if up.shape[1:] != clouds.shape[1:]:
            raise ValueError(f"upsampled rough sources have shape {up.shape[1:]}, expected {clouds.shape[1:]}")
        rough = np.concatenate([nets.encode_batch(encoder, up[i:i + batch_size])
                                for i in range(0, len(up), batch_size)])
    lvl = level if level is not None else (0 if rough is None else -1)
    return LatentDataset(lvl, real, rough)


# --------------------------------------------------------------------------
# latent GANs

@dataclass
class GANResult:
    generator: nets.NetworkParams
    discriminator: nets.NetworkParams
    history: list = field(default_factory=list)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def train_latent_gan(data: LatentDataset, cfg: TrainConfig, conditional: bool, *,
                     noise_dim: int = nets.NOISE_DIM, hidden=nets.GAN_HIDDEN,
                     condition_discriminator: bool = True, generator_final_scale: float = 0.1,
                     on_epoch: Callable | None = None) -> GANResult:
    """Adversarial training in latent space with one D step and one G step per batch.

    Unconditional (level 0): ``G(z)`` imitates the real codes. Conditional:
    ``rough + G(rough, z)`` imitates the real codes, i.e. ``G`` produces a
    residual; ``D`` also sees ``rough`` when ``condition_discriminator``.
    """
    if conditional and data.rough is None:
        raise ValueError("conditional GAN training needs rough codes")
    d = data.dim
    real_all = data.real.astype(np.float32)
    rough_all = data.rough.astype(np.float32) if conditional else None
    N = len(real_all)
    rng = np.random.default_rng(cfg.seed)
    G = nets.init_generator(d, conditional, noise_dim, hidden, seed=cfg.seed,
                            final_scale=generator_final_scale)
    D = nets.init_discriminator(d, conditional and condition_discriminator, hidden, seed=cfg.seed + 1)
    opt_g = Adam(G.tensors, cfg.learning_rate, cfg.beta1, cfg.beta2)
    opt_d = Adam(D.tensors, cfg.learning_rate, cfg.beta1, cfg.beta2)
    d_cond = conditional and condition_discriminator

    def fake_codes(cond, z):
        out, cache = nets.forward(G, cond, z)
        return (cond + out if conditional else out), cache

    history = []
    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.learning_rate * cfg.lr_decay ** (epoch - 1)
        opt_g.lr = opt_d.lr = lr
        d_losses, g_losses, accs = [], [], []
        for b, idx in enumerate(_batches(N, cfg.batch_size, rng)):
            B = len(idx)
            real = real_all[idx]
            cond = rough_all[idx] if conditional else None
            dc = cond if d_cond else None

            # discriminator step
            z = rng.standard_normal((B, noise_dim)).astype(np.float32)
            fake, _ = fake_codes(cond, z)
            lr_real, c_real = nets.forward(D, real, dc)
            lr_fake, c_fake = nets.forward(D, fake, dc)
            d_loss = float(np.mean(_softplus(-lr_real)) + np.mean(_softplus(lr_fake)))
            g_real, _ = nets.backward(D, c_real, -_sigmoid(-lr_real) / B)
            g_fake, _ = nets.backward(D, c_fake, _sigmoid(lr_fake) / B)
            opt_d.step({k: g_real[k] + g_fake[k] for k in g_real})
            accs.append(0.5 * (np.mean(lr_real > 0) + np.mean(lr_fake < 0)))

            # generator step
            z = rng.standard_normal((B, noise_dim)).astype(np.float32)
            fake, c_gen = fake_codes(cond, z)
            logits, c_d = nets.forward(D, fake, dc)
            if cfg.gan_loss == "nonsaturating":
                g_loss = float(np.mean(_softplus(-logits)))
                dlogits = -_sigmoid(-logits) / B
            else:
                g_loss = float(-np.mean(_softplus(logits)))
                dlogits = -_sigmoid(logits) / B
            _, (g_fake_in, _) = nets.backward(D, c_d, dlogits)
            g_gen, _ = nets.backward(G, c_gen, g_fake_in)
            opt_g.step(g_gen)

            for value, name in ((d_loss, "discriminator"), (g_loss, "generator")):
                if not math.isfinite(value) or abs(value) > cfg.max_loss:
                    raise TrainingDivergedError(
                        f"{name} loss {value} at epoch {epoch} batch {b}; "
                        f"parameter norm {_param_norm(G, D):.4g}")
            _check_finite((G, D), "latent GAN", epoch, b)
            d_losses.append(d_loss)
            g_losses.append(g_loss)
        record = {"epoch": epoch, "d_loss": float(np.mean(d_losses)), "g_loss": float(np.mean(g_losses)),
                  "d_accuracy": float(np.mean(accs)), "lr": lr}
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
    return GANResult(G, D, history)
