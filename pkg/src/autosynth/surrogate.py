"""Lightweight point-cloud reconstruction model and its training loop.

The model is a small autoencoder: per-point feed-forward stages, a symmetric
max-pool over points into a compact latent vector, and a feed-forward decoder
that emits a fixed-size cloud.  Reconstruction quality is measured with the
symmetric Chamfer distance, which also serves as the fitness score of a
trained model on a target dataset.

Forward, backward, and the Adam optimizer are written out by hand on plain
numpy arrays: the model is tiny, gradients are exact (Chamfer nearest-neighbor
assignments held fixed, first-found ties), and training is deterministic for
a fixed config.  All parameters live in one flat buffer so optimizer steps
are a handful of vectorized operations.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import NonFinite, ShapeMismatch, SizeMismatch
from .rng import SeedLike, as_generator

LEAKY_SLOPE = 0.01

#: Iteration count at which the model is trained to full convergence; the
#: desk-scale default keeps search trials at interactive speed.
FULL_SCALE_ITERATIONS = 20_000


def blas_single_thread():
    """Pin BLAS to one thread for the enclosed block.

    The model's matrices are small enough that threaded GEMM only adds
    overhead, and a fixed thread count keeps results bit-identical across
    machines and ambient pool sizes.
    """
    try:
        from threadpoolctl import threadpool_limits

        return threadpool_limits(limits=1, user_api="blas")
    except ImportError:  # pragma: no cover
        import contextlib

        return contextlib.nullcontext()


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    iterations: int = 2_000
    seed: int = 0
    latent: int = 64
    encoder_widths: tuple[int, ...] = (64, 128)
    decoder_widths: tuple[int, ...] = (256, 512)
    dtype: str = "float64"  # "float32" roughly halves training time

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 1:
            raise ValueError("batch_size and iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64'")

    def full_scale(self) -> "TrainConfig":
        return replace(self, iterations=FULL_SCALE_ITERATIONS)


@dataclass(eq=False)
class AutoencoderParams:
    """All weights and biases; also used as the container for gradients.

    Arrays may be views into one flat buffer (``flat``), which the optimizer
    exploits; ``flat`` is None for params assembled from loose arrays.
    """

    encoder_weights: list[np.ndarray]
    encoder_biases: list[np.ndarray]
    latent_weight: np.ndarray
    latent_bias: np.ndarray
    decoder_weights: list[np.ndarray]
    decoder_biases: list[np.ndarray]
    flat: np.ndarray | None = None

    @property
    def v(self) -> int:
        return self.decoder_weights[-1].shape[1] // 3

    @property
    def latent(self) -> int:
        return self.latent_weight.shape[1]

    @property
    def dtype(self) -> np.dtype:
        return self.latent_weight.dtype

    def arrays(self):
        """(name, array) pairs in a fixed order."""
        for i, (w, b) in enumerate(zip(self.encoder_weights, self.encoder_biases)):
            yield f"enc_w{i}", w
            yield f"enc_b{i}", b
        yield "lat_w", self.latent_weight
        yield "lat_b", self.latent_bias
        for i, (w, b) in enumerate(zip(self.decoder_weights, self.decoder_biases)):
            yield f"dec_w{i}", w
            yield f"dec_b{i}", b

    def flat_copy(self) -> "AutoencoderParams":
        """Equal params whose arrays view one contiguous buffer."""
        entries = list(self.arrays())
        flat = np.empty(sum(a.size for _, a in entries), dtype=self.dtype)
        views = {}
        offset = 0
        for name, a in entries:
            view = flat[offset : offset + a.size].reshape(a.shape)
            view[...] = a
            views[name] = view
            offset += a.size
        return _from_named(views, flat)

    def zeros_like(self) -> "AutoencoderParams":
        out = self.flat_copy()
        out.flat[...] = 0.0
        return out


def _from_named(named: dict[str, np.ndarray], flat=None) -> AutoencoderParams:
    n_enc = sum(1 for k in named if k.startswith("enc_w"))
    n_dec = sum(1 for k in named if k.startswith("dec_w"))
    return AutoencoderParams(
        encoder_weights=[named[f"enc_w{i}"] for i in range(n_enc)],
        encoder_biases=[named[f"enc_b{i}"] for i in range(n_enc)],
        latent_weight=named["lat_w"],
        latent_bias=named["lat_b"],
        decoder_weights=[named[f"dec_w{i}"] for i in range(n_dec)],
        decoder_biases=[named[f"dec_b{i}"] for i in range(n_dec)],
        flat=flat,
    )


def init_params(
    v: int,
    latent: int = 64,
    encoder_widths: tuple[int, ...] = (64, 128),
    decoder_widths: tuple[int, ...] = (256, 512),
    seed: SeedLike = None,
    dtype: str = "float64",
) -> AutoencoderParams:
    """Scaled uniform fan-in initialization; biases start at zero."""
    rng = as_generator(seed)

    def layer(n_in, n_out):
        w = rng.uniform(-1.0, 1.0, size=(n_in, n_out)) / np.sqrt(n_in)
        return w.astype(dtype), np.zeros(n_out, dtype=dtype)

    enc_w, enc_b = [], []
    width = 3
    for out in encoder_widths:
        w, b = layer(width, out)
        enc_w.append(w)
        enc_b.append(b)
        width = out
    lat_w, lat_b = layer(width, latent)
    dec_w, dec_b = [], []
    width = latent
    for out in (*decoder_widths, 3 * v):
        w, b = layer(width, out)
        dec_w.append(w)
        dec_b.append(b)
        width = out
    return AutoencoderParams(enc_w, enc_b, lat_w, lat_b, dec_w, dec_b).flat_copy()


def _leaky(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Leaky-rectifier activation (in place) and its slope factor (reused in
    backprop).  ``z`` must be a freshly computed pre-activation."""
    one = z.dtype.type(1.0)
    slope = z.dtype.type(LEAKY_SLOPE)
    factor = np.where(z > 0.0, one, slope)
    z *= factor
    return z, factor


def _forward_batch(params: AutoencoderParams, clouds: np.ndarray):
    """Batched forward pass; returns outputs and the cache for backprop."""
    b, v = clouds.shape[:2]
    cache = {"inputs": [], "factors": []}
    h = clouds.reshape(b * v, 3)
    for w, bias in zip(params.encoder_weights, params.encoder_biases):
        cache["inputs"].append(h)
        z = h @ w
        z += bias
        h, factor = _leaky(z)
        cache["factors"].append(factor)
    h = h.reshape(b, v, -1)
    argmax = np.argmax(h, axis=1)  # first max wins ties
    pooled = np.take_along_axis(h, argmax[:, None, :], axis=1)[:, 0, :]
    cache["argmax"] = argmax
    cache["pool_in_shape"] = h.shape
    z = pooled @ params.latent_weight
    z += params.latent_bias
    cache["pooled"] = pooled
    d, factor = _leaky(z)
    cache["factor_lat"] = factor
    cache["dec_inputs"] = []
    cache["dec_factors"] = []
    n_dec = len(params.decoder_weights)
    for i, (w, bias) in enumerate(zip(params.decoder_weights, params.decoder_biases)):
        cache["dec_inputs"].append(d)
        z = d @ w
        z += bias
        if i == n_dec - 1:
            d = z
        else:
            d, factor = _leaky(z)
            cache["dec_factors"].append(factor)
    return d.reshape(b, v, 3), cache


def _backward_batch(
    params: AutoencoderParams,
    cache,
    d_out: np.ndarray,
    out: AutoencoderParams | None = None,
) -> AutoencoderParams:
    """Gradients for a batched forward pass; ``d_out`` is dLoss/dOutput."""
    b, v = d_out.shape[:2]
    grads = out if out is not None else params.zeros_like()

    dz = d_out.reshape(b, -1)
    n_dec = len(params.decoder_weights)
    for i in range(n_dec - 1, -1, -1):
        if i < n_dec - 1:
            np.multiply(dz, cache["dec_factors"][i], out=dz)
        grads.decoder_weights[i][...] = cache["dec_inputs"][i].T @ dz
        grads.decoder_biases[i][...] = dz.sum(axis=0)
        dz = dz @ params.decoder_weights[i].T

    np.multiply(dz, cache["factor_lat"], out=dz)
    grads.latent_weight[...] = cache["pooled"].T @ dz
    grads.latent_bias[...] = dz.sum(axis=0)
    d_pooled = dz @ params.latent_weight.T

    d_h = np.zeros(cache["pool_in_shape"], dtype=d_out.dtype)
    np.put_along_axis(d_h, cache["argmax"][:, None, :], d_pooled[:, None, :], axis=1)
    dz = d_h.reshape(b * v, -1)
    for i in range(len(params.encoder_weights) - 1, -1, -1):
        np.multiply(dz, cache["factors"][i], out=dz)
        grads.encoder_weights[i][...] = cache["inputs"][i].T @ dz
        grads.encoder_biases[i][...] = dz.sum(axis=0)
        if i > 0:
            dz = dz @ params.encoder_weights[i].T
    return grads


def forward(params: AutoencoderParams, cloud: np.ndarray) -> np.ndarray:
    """Reconstruct one cloud; permutation-invariant in the input points."""
    cloud = np.asarray(cloud, dtype=params.dtype)
    if cloud.shape != (params.v, 3):
        raise ShapeMismatch(f"expected ({params.v}, 3) cloud, got {cloud.shape}")
    out, _ = _forward_batch(params, cloud[None])
    return out[0]


# ---------------------------------------------------------------------------
# Chamfer distance
# ---------------------------------------------------------------------------

def chamfer(x: np.ndarray, y: np.ndarray) -> float:
    """Symmetric Chamfer distance between equal-size clouds.

    Mean squared nearest-neighbor distance, averaged over both directions;
    nearest neighbors come from a k-d tree and match the quadratic brute
    force to within float round-off.
    """
    from scipy.spatial import cKDTree

    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y):
        raise SizeMismatch(f"cloud sizes differ: {len(x)} vs {len(y)}")
    d_xy = cKDTree(y).query(x, workers=1)[0]
    d_yx = cKDTree(x).query(y, workers=1)[0]
    return float((d_xy @ d_xy + d_yx @ d_yx) / (2.0 * len(x)))


def _chamfer_grad_batch(
    out: np.ndarray, clouds: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample Chamfer(out, cloud) and gradients in ``out`` (batched).

    Nearest-neighbor assignments are held fixed; ties go to the first index.
    """
    m = out.shape[1]
    d2 = out @ clouds.transpose(0, 2, 1)
    d2 *= -2.0
    d2 += np.einsum("bvc,bvc->bv", out, out)[:, :, None]
    d2 += np.einsum("bvc,bvc->bv", clouds, clouds)[:, None, :]
    nn_y = d2.argmin(axis=2)  # nearest input point for each output point
    nn_x = d2.argmin(axis=1)  # nearest output point for each input point
    diff_y = out - np.take_along_axis(clouds, nn_y[:, :, None], axis=1)
    diff_x = np.take_along_axis(out, nn_x[:, :, None], axis=1) - clouds
    losses = (
        np.einsum("bvc,bvc->b", diff_y, diff_y)
        + np.einsum("bvc,bvc->b", diff_x, diff_x)
    ) / (2.0 * m)
    grad = diff_y / m
    for i in range(len(out)):  # fixed accumulation order
        np.add.at(grad[i], nn_x[i], diff_x[i] / m)
    return losses, grad


def loss_and_grad(
    params: AutoencoderParams, batch, out: AutoencoderParams | None = None
) -> tuple[float, AutoencoderParams]:
    """Mean Chamfer reconstruction loss over a batch and its exact gradient."""
    clouds = np.asarray(batch, dtype=params.dtype)
    if clouds.ndim != 3 or clouds.shape[1:] != (params.v, 3):
        raise ShapeMismatch(
            f"expected (batch, {params.v}, 3) clouds, got {clouds.shape}"
        )
    b = len(clouds)
    outputs, cache = _forward_batch(params, clouds)
    losses, d_out = _chamfer_grad_batch(outputs, clouds)
    grads = _backward_batch(params, cache, d_out / b, out=out)
    return float(losses.sum() / b), grads


# ---------------------------------------------------------------------------
# Training and fitness
# ---------------------------------------------------------------------------

def _clouds_of(data) -> np.ndarray:
    if hasattr(data, "cloud_array"):
        return data.cloud_array()
    clouds = np.asarray(data, dtype=np.float64)
    if clouds.ndim != 3 or clouds.shape[-1] != 3:
        raise ShapeMismatch(f"expected (n, v, 3) clouds, got {clouds.shape}")
    return clouds


def train_surrogate(data, cfg: TrainConfig) -> tuple[AutoencoderParams, np.ndarray]:
    """Adam training over uniformly drawn batches.

    ``data`` is a dataset or an ``(n, v, 3)`` cloud stack.  Deterministic for
    a fixed config; raises NonFinite if the loss diverges.
    """
    clouds = _clouds_of(data).astype(cfg.dtype)
    n, v = clouds.shape[:2]
    rng = as_generator(cfg.seed)
    params = init_params(
        v, cfg.latent, cfg.encoder_widths, cfg.decoder_widths, rng, dtype=cfg.dtype
    )
    grads = params.zeros_like()
    p = params.flat
    g = grads.flat
    m = np.zeros_like(p)
    s = np.zeros_like(p)
    scratch = np.empty_like(p)
    lr, b1, b2, eps = cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps
    history = np.empty(cfg.iterations)
    with blas_single_thread():
        for t in range(1, cfg.iterations + 1):
            idx = rng.integers(0, n, size=cfg.batch_size)
            loss, _ = loss_and_grad(params, clouds[idx], out=grads)
            if not np.isfinite(loss):
                raise NonFinite(f"loss became non-finite at iteration {t}")
            # Adam on the flat buffers, one scratch vector, no reallocation.
            m *= b1
            np.multiply(g, 1.0 - b1, out=scratch)
            m += scratch
            s *= b2
            np.multiply(g, g, out=scratch)
            scratch *= 1.0 - b2
            s += scratch
            np.divide(s, 1.0 - b2**t, out=scratch)
            np.sqrt(scratch, out=scratch)
            scratch += eps
            np.divide(m, scratch, out=scratch)
            scratch *= lr / (1.0 - b1**t)
            p -= scratch
            history[t - 1] = loss
    return params, history


def evaluate_fitness(params: AutoencoderParams, target) -> float:
    """Mean Chamfer reconstruction error of the model over a target dataset."""
    clouds = _clouds_of(target)
    if clouds.shape[1] != params.v:
        raise ShapeMismatch(
            f"target clouds have {clouds.shape[1]} points, model expects {params.v}"
        )
    with blas_single_thread():
        outputs, _ = _forward_batch(params, clouds.astype(params.dtype))
    total = 0.0
    for out, cloud in zip(outputs, clouds):
        total += chamfer(out, cloud)
    return total / len(clouds)


# ---------------------------------------------------------------------------
# Checkpoint and history files
# ---------------------------------------------------------------------------

_MAGIC = b"ASUR"
_VERSION = 1


def save_params(path, params: AutoencoderParams) -> None:
    """Versioned binary checkpoint: magic, shape header, little-endian f64."""
    with open(path, "wb") as fh:
        entries = list(params.arrays())
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(entries)))
        for name, arr in entries:
            encoded = name.encode("ascii")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path) -> AutoencoderParams:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError("not a parameter checkpoint")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    offset = 12
    named: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset : offset + name_len].decode("ascii")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", raw, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, offset)
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f8", count=size, offset=offset)
        offset += 8 * size
        named[name] = arr.reshape(shape).copy()
    return _from_named(named)


def save_loss_history(path, history: np.ndarray) -> None:
    lines = ["iteration,loss"]
    lines += [f"{i},{float(loss)!r}" for i, loss in enumerate(np.asarray(history))]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
