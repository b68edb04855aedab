"""Per-level networks in plain numpy with hand-written backward passes.

Four kinds share one parameter container:

* ``encoder``: shared per-point MLP (ReLU on every layer) then max-pool over
  points, producing a latent code.
* ``decoder``: fully connected MLP from a code to ``n_points * 3`` values.
* ``generator``: MLP on ``concat(cond, z)``; ``cond`` is absent at level 0.
* ``discriminator``: MLP on ``concat(h, cond)`` returning one logit.

``forward`` returns an output and a cache that ``backward`` consumes.
Computation happens in the dtype of the parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "NetworkParams",
    "init_encoder",
    "init_decoder",
    "init_generator",
    "init_discriminator",
    "init_mlp",
    "forward",
    "backward",
    "encode",
    "decode",
    "generate",
    "discriminate",
    "encode_batch",
    "decode_batch",
    "generate_batch",
    "gradient_check",
    "GradientCheckError",
]

ENCODER_HIDDEN = (64, 128, 128, 256)
DECODER_HIDDEN = (256, 256)
GAN_HIDDEN = (256, 256)
NOISE_DIM = 32
KINDS = ("encoder", "decoder", "generator", "discriminator", "mlp")


class GradientCheckError(ValueError):
    pass


@dataclass
class NetworkParams:
    """Named weight tensors ``W0, b0, W1, b1, ...`` plus an architecture
    descriptor. ``arch["widths"]`` lists layer sizes including the input."""

    kind: str
    arch: dict
    tensors: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown network kind {self.kind!r}")
        widths = self.arch["widths"]
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            W, b = self.tensors[f"W{i}"], self.tensors[f"b{i}"]
            if W.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ValueError(f"layer {i} shape {W.shape}/{b.shape} != ({fan_in}, {fan_out})")

    @property
    def n_layers(self) -> int:
        return len(self.arch["widths"]) - 1

    @property
    def dtype(self):
        return self.tensors["W0"].dtype

    def layers(self):
        return [(self.tensors[f"W{i}"], self.tensors[f"b{i}"]) for i in range(self.n_layers)]

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(self.kind, dict(self.arch),
                             {k: v.astype(dtype) for k, v in self.tensors.items()})

    def copy(self) -> "NetworkParams":
        return self.astype(self.dtype)

    def zero_final_layer(self) -> "NetworkParams":
        """Copy with the output layer's weights and bias set to zero."""
        out = self.copy()
        last = self.n_layers - 1
        out.tensors[f"W{last}"][...] = 0
        out.tensors[f"b{last}"][...] = 0
        return out


def _init_layers(widths, rng, final_scale=1.0, dtype=np.float32):
    tensors = {}
    last = len(widths) - 2
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        # He-uniform for ReLU layers, LeCun-uniform for the linear output
        bound = math.sqrt(6.0 / fan_in) if i < last else math.sqrt(3.0 / fan_in) * final_scale
        tensors[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
        tensors[f"b{i}"] = np.zeros(fan_out, dtype=dtype)
    return tensors


def init_mlp(widths, seed: int = 0, *, final_scale: float = 1.0, dtype=np.float32) -> NetworkParams:
    """Plain MLP: ReLU between layers, linear output."""
    widths = [int(w) for w in widths]
    rng = np.random.default_rng(seed)
    return NetworkParams("mlp", {"widths": widths}, _init_layers(widths, rng, final_scale, dtype))


def init_encoder(n_points: int, latent_dim: int = 128, hidden=ENCODER_HIDDEN, seed: int = 0,
                 dtype=np.float32) -> NetworkParams:
    widths = [3, *hidden, latent_dim]
    rng = np.random.default_rng(seed)
    tensors = _init_layers(widths, rng, dtype=dtype)
    # every encoder layer is ReLU, so the last one gets He scaling too
    last = len(widths) - 2
    bound = math.sqrt(6.0 / widths[-2])
    tensors[f"W{last}"] = rng.uniform(-bound, bound, size=(widths[-2], widths[-1])).astype(dtype)
    arch = {"widths": widths, "n_points": int(n_points), "latent_dim": int(latent_dim)}
    return NetworkParams("encoder", arch, tensors)


def init_decoder(latent_dim: int, n_points: int, hidden=DECODER_HIDDEN, seed: int = 0,
                 dtype=np.float32) -> NetworkParams:
    widths = [latent_dim, *hidden, 3 * n_points]
    arch = {"widths": widths, "n_points": int(n_points), "latent_dim": int(latent_dim)}
    return NetworkParams("decoder", arch, _init_layers(widths, np.random.default_rng(seed), dtype=dtype))


def init_generator(latent_dim: int, conditional: bool, noise_dim: int = NOISE_DIM, hidden=GAN_HIDDEN,
                   seed: int = 0, final_scale: float = 1.0, dtype=np.float32) -> NetworkParams:
    cond_dim = latent_dim if conditional else 0
    widths = [cond_dim + noise_dim, *hidden, latent_dim]
    arch = {"widths": widths, "latent_dim": int(latent_dim), "noise_dim": int(noise_dim),
            "cond_dim": cond_dim}
    tensors = _init_layers(widths, np.random.default_rng(seed), final_scale, dtype)
    return NetworkParams("generator", arch, tensors)


def init_discriminator(latent_dim: int, conditional: bool, hidden=GAN_HIDDEN, seed: int = 0,
                       dtype=np.float32) -> NetworkParams:
    cond_dim = latent_dim if conditional else 0
    widths = [latent_dim + cond_dim, *hidden, 1]
    arch = {"widths": widths, "latent_dim": int(latent_dim), "cond_dim": cond_dim}
    return NetworkParams("discriminator", arch, _init_layers(widths, np.random.default_rng(seed), dtype=dtype))


# --------------------------------------------------------------------------
# generic MLP passes

def _mlp_forward(params: NetworkParams, x, relu_last: bool):
    acts = []
    n = params.n_layers
    for i, (W, b) in enumerate(params.layers()):
        acts.append(x)
        x = x @ W + b
        if i < n - 1 or relu_last:
            x = np.maximum(x, 0)
    return x, acts


def _mlp_backward(params: NetworkParams, acts, out, grad, relu_last: bool):
    grads = {}
    n = params.n_layers
    layers = params.layers()
    y = out
    for i in range(n - 1, -1, -1):
        W, _ = layers[i]
        if i < n - 1 or relu_last:
            grad = grad * (y > 0)
        x = acts[i]
        grads[f"W{i}"] = x.T @ grad
        grads[f"b{i}"] = grad.sum(axis=0)
        grad = grad @ W.T
        y = x
    return grads, grad


# --------------------------------------------------------------------------
# kind-specific passes

def _check_cond(params, cond, batch):
    cond_dim = params.arch.get("cond_dim", 0)
    if cond_dim == 0:
        if cond is not None:
            raise ValueError(f"unconditional {params.kind} was given a condition")
        return None
    if cond is None:
        raise ValueError(f"conditional {params.kind} requires a condition code")
    cond = np.asarray(cond, dtype=params.dtype)
    if cond.shape != (batch, cond_dim):
        raise ValueError(f"condition shape {cond.shape} != ({batch}, {cond_dim})")
    return cond


def _canonical_order(X):
    # lexicographic point order per cloud: the encoder sees the same array for
    # every permutation of a cloud, which makes its output exactly invariant
    keys = (X[..., 2], X[..., 1], X[..., 0])
    order = np.lexsort(keys, axis=-1)
    return np.take_along_axis(X, order[..., None], axis=1)


def forward(params: NetworkParams, *inputs):
    """Batched forward pass.

    Inputs by kind: encoder ``X (B, n, 3)``; decoder ``h (B, d)``; generator
    ``(cond | None, z)``; discriminator ``(h, cond | None)``; mlp ``x``.
    """
    kind = params.kind
    dt = params.dtype
    if kind == "encoder":
        (X,) = inputs
        X = np.asarray(X, dtype=dt)
        n = params.arch["n_points"]
        if X.ndim != 3 or X.shape[1:] != (n, 3):
            raise ValueError(f"encoder expects (B, {n}, 3) input, got {X.shape}")
        B = X.shape[0]
        X = _canonical_order(X)
        feats, acts = _mlp_forward(params, X.reshape(B * n, 3), relu_last=True)
        feats = feats.reshape(B, n, -1)
        arg = feats.argmax(axis=1)
        code = np.take_along_axis(feats, arg[:, None, :], axis=1)[:, 0, :]
        return code, ("encoder", acts, feats, arg)
    if kind == "decoder":
        (h,) = inputs
        h = np.asarray(h, dtype=dt)
        d = params.arch["latent_dim"]
        if h.ndim != 2 or h.shape[1] != d:
            raise ValueError(f"decoder expects (B, {d}) codes, got {h.shape}")
        out, acts = _mlp_forward(params, h, relu_last=False)
        return out.reshape(h.shape[0], -1, 3), ("decoder", acts, out)
    if kind == "generator":
        cond, z = inputs
        z = np.asarray(z, dtype=dt)
        if z.ndim != 2 or z.shape[1] != params.arch["noise_dim"]:
            raise ValueError(f"noise must be (B, {params.arch['noise_dim']}), got {z.shape}")
        cond = _check_cond(params, cond, z.shape[0])
        x = z if cond is None else np.concatenate([cond, z], axis=1)
        out, acts = _mlp_forward(params, x, relu_last=False)
        return out, ("generator", acts, out)
    if kind == "discriminator":
        h, cond = inputs
        h = np.asarray(h, dtype=dt)
        if h.ndim != 2 or h.shape[1] != params.arch["latent_dim"]:
            raise ValueError(f"discriminator expects (B, {params.arch['latent_dim']}) codes, got {h.shape}")
        cond = _check_cond(params, cond, h.shape[0])
        x = h if cond is None else np.concatenate([h, cond], axis=1)
        out, acts = _mlp_forward(params, x, relu_last=False)
        return out[:, 0], ("discriminator", acts, out)
    (x,) = inputs
    x = np.asarray(x, dtype=dt)
    out, acts = _mlp_forward(params, x, relu_last=False)
    return out, ("mlp", acts, out)


def backward(params: NetworkParams, cache, grad_out):
    """Gradients of a scalar loss given ``grad_out = dL/d(output)``.

    Returns ``(param_grads, input_grads)``; ``input_grads`` is a tuple matching
    the forward inputs (``None`` where not differentiable: encoder points and
    absent conditions).
    """
    kind = cache[0]
    grad_out = np.asarray(grad_out, dtype=params.dtype)
    if kind == "encoder":
        _, acts, feats, arg = cache
        B, n, d = feats.shape
        g = np.zeros_like(feats)
        np.put_along_axis(g, arg[:, None, :], grad_out[:, None, :], axis=1)
        grads, _ = _mlp_backward(params, acts, feats.reshape(B * n, d), g.reshape(B * n, d), relu_last=True)
        return grads, (None,)
    _, acts, out = cache
    if kind == "decoder":
        grads, gx = _mlp_backward(params, acts, out, grad_out.reshape(out.shape), relu_last=False)
        return grads, (gx,)
    if kind == "discriminator":
        grads, gx = _mlp_backward(params, acts, out, grad_out.reshape(-1, 1), relu_last=False)
        d = params.arch["latent_dim"]
        return grads, (gx[:, :d], gx[:, d:] if params.arch["cond_dim"] else None)
    grads, gx = _mlp_backward(params, acts, out, grad_out, relu_last=False)
    if kind == "generator":
        c = params.arch["cond_dim"]
        return grads, (gx[:, :c] if c else None, gx[:, c:])
    return grads, (gx,)


# --------------------------------------------------------------------------
# single-sample conveniences

def encode_batch(params, X):
    return forward(params, X)[0]


def decode_batch(params, h):
    return forward(params, h)[0]


def generate_batch(params, cond, z):
    return forward(params, cond, z)[0]


def encode(params: NetworkParams, pc) -> np.ndarray:
    """Latent code of one cloud; raises if the point count is wrong."""
    pc = np.asarray(pc)
    n = params.arch["n_points"]
    if pc.shape != (n, 3):
        raise ValueError(f"encoder for {n} points got a cloud of shape {pc.shape}")
    return encode_batch(params, pc[None])[0]


def decode(params: NetworkParams, h) -> np.ndarray:
    h = np.asarray(h)
    d = params.arch["latent_dim"]
    if h.shape != (d,):
        raise ValueError(f"decoder expects a {d}-dim code, got shape {h.shape}")
    return decode_batch(params, h[None])[0]


def generate(params: NetworkParams, cond, z) -> np.ndarray:
    """Full code at level 0 (``cond=None``), residual for conditional levels."""
    z = np.asarray(z)
    c = None if cond is None else np.asarray(cond)[None]
    return generate_batch(params, c, z[None])[0]


def discriminate(params: NetworkParams, h, cond=None) -> float:
    c = None if cond is None else np.asarray(cond)[None]
    return float(forward(params, np.asarray(h)[None], c)[0][0])


# --------------------------------------------------------------------------
# gradient verification

def _default_loss(output):
    # fixed pseudo-random projection keeps every output coordinate in play
    w = np.random.default_rng(1234).uniform(-1, 1, size=np.shape(output))
    return float(np.sum(w * output)), w


def _activation_pattern(cache):
    # ReLU on/off state of every unit, plus the max-pool winners for encoders
    kind, acts = cache[0], cache[1]
    parts = [a > 0 for a in acts[1:]]
    if kind == "encoder":
        parts.append(cache[2] > 0)
        parts.append(cache[3])
    return parts


def _same_pattern(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(params: NetworkParams, inputs, loss: Callable | None = None, *,
                   step: float = 1e-5, max_per_tensor: int | None = None, seed: int = 0,
                   return_skipped: bool = False):
    """Largest relative error between backprop and central differences.

    ``loss(output) -> (value, dvalue/doutput)``; defaults to a random linear
    projection. Runs in float64. For big networks ``max_per_tensor`` limits
    the check to a random subset of coordinates in each tensor.

    Coordinates whose +/- ``step`` stencil flips a ReLU or changes a max-pool
    winner sit on a kink where the derivative is undefined; they are skipped
    (``return_skipped=True`` also returns how many).
    """
    loss = loss or _default_loss
    p = params.astype(np.float64)
    inputs = tuple(None if x is None else np.asarray(x, dtype=np.float64) for x in inputs)

    out, cache = forward(p, *inputs)
    _, gout = loss(out)
    analytic, _ = backward(p, cache, gout)
    for name, g in analytic.items():
        if not np.all(np.isfinite(g)):
            raise GradientCheckError(f"non-finite analytic gradient in {name}")

    base = _activation_pattern(cache)
    rng = np.random.default_rng(seed)
    worst = 0.0
    checked = skipped = 0
    for name, tensor in p.tensors.items():
        flat = tensor.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            idx = np.sort(rng.choice(flat.size, max_per_tensor, replace=False))
        ga = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            out_p, cache_p = forward(p, *inputs)
            flat[i] = orig - step
            out_m, cache_m = forward(p, *inputs)
            flat[i] = orig
            if not (_same_pattern(base, _activation_pattern(cache_p))
                    and _same_pattern(base, _activation_pattern(cache_m))):
                skipped += 1
                continue
            lp, lm = loss(out_p)[0], loss(out_m)[0]
            num = (lp - lm) / (2 * step)
            if not math.isfinite(num):
                raise GradientCheckError(f"non-finite numeric gradient in {name}[{i}]")
            a = float(ga[i])
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, err)
            checked += 1
    if checked == 0:
        raise GradientCheckError("every checked coordinate sits on a kink")
    return (worst, skipped) if return_skipped else worst
