"""Minimal deterministic neural-network kernel on numpy.

Everything the embedding model needs and nothing more: dense and 2-D
convolution layers, ELU/tanh activations, per-sample layer normalization,
dropout, max pooling, nearest-neighbor upsampling, the Euclidean triplet
loss, an Adam optimizer, central-finite-difference gradient checking, and
a versioned binary parameter format.

Conventions:

- Parameters are stored as ``float32`` arrays. That makes the on-disk
  format (little-endian 32-bit floats) a lossless round trip, so a saved
  and reloaded model reproduces its outputs bitwise.
- The arithmetic dtype is configurable per network. Training and
  inference default to ``float32``; gradient checks run the same code at
  ``float64`` so central differences are meaningful at 1e-4 relative
  tolerance.
- All randomness (init, dropout) flows through ``numpy.random.Generator``
  instances handed in by the caller, so identical seeds give bitwise
  identical runs across processes.
"""

from __future__ import annotations

import hashlib
import struct
from contextlib import contextmanager
from typing import Iterator, Sequence

import numpy as np

from . import _kernels

DEFAULT_DTYPE = np.float32


@contextmanager
def single_threaded_blas():
    """Pin BLAS to one thread for loops that interleave GEMMs with the
    parallel numba kernels; on small machines the two pools otherwise fight
    over cores and everything slows down."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        yield
        return
    with threadpool_limits(limits=1, user_api="blas"):
        yield

# Layer norm divides by sqrt(max(var, floor)) instead of sqrt(var + eps):
# inputs with any healthy variance are normalized exactly (variance 1 to
# fp rounding), while near-constant inputs, which empty-deck rows make
# whole conv maps produce, amplify gradients by at most 1/sqrt(floor) per
# layer. An additive eps small enough not to bias the variance (<=1e-6 of
# it) lets six stacked norms overflow float32 on those degenerate maps.
LAYER_NORM_VAR_FLOOR = 1e-4

# Smoothing inside sqrt so the distance gradient is defined at zero.
DISTANCE_EPS = 1e-12


def seed_streams(seed: int, names: Sequence[str]) -> dict[str, np.random.Generator]:
    """Derive one independent, reproducible generator per stream name."""
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def _glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                    fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(DEFAULT_DTYPE)


class Layer:
    """Base layer: owns float32 parameters and their current gradients."""

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.dtype = DEFAULT_DTYPE

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def param(self, name: str) -> np.ndarray:
        """Parameter cast to the compute dtype (no copy when float32)."""
        return self.params[name].astype(self.dtype, copy=False)


class Dense(Layer):
    """Affine map y = x @ W + b over the last axis."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.params["w"] = _glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim)
        self.params["b"] = np.zeros(out_dim, dtype=DEFAULT_DTYPE)

    def forward(self, x, train=False):
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"dense expects input dim {self.in_dim}, got {x.shape[-1]}")
        self._x = x
        return x @ self.param("w") + self.param("b")

    def backward(self, dout):
        self.grads["w"] = self._x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.param("w").T


class Conv2d(Layer):
    """2-D convolution over (B, C, H, W) via im2col.

    Zero padding; output spatial size is floor((dim + 2*pad - k)/stride) + 1.
    """

    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, pad: int = 1):
        super().__init__()
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.pad = kernel, stride, pad
        k = kernel
        self.params["w"] = _glorot_uniform(
            rng, (out_ch, in_ch, k, k), in_ch * k * k, out_ch * k * k)
        self.params["b"] = np.zeros(out_ch, dtype=DEFAULT_DTYPE)

    def _out_hw(self, h: int, w: int) -> tuple[int, int]:
        k, s, p = self.kernel, self.stride, self.pad
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def forward(self, x, train=False):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ValueError(f"conv2d expects (B,{self.in_ch},H,W), got {x.shape}")
        b, _, h, w = x.shape
        k, s, p = self.kernel, self.stride, self.pad
        ho, wo = self._out_hw(h, w)
        if ho < 1 or wo < 1:
            raise ValueError(f"conv2d input {h}x{w} too small for kernel {k}")
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        self._xp, self._xshape, self._owh = xp, x.shape, (ho, wo)
        if s == 1:
            out = np.empty((b, self.out_ch, ho, wo), dtype=x.dtype)
            _kernels.conv_fwd(xp, self.param("w"), self.param("b"), out)
            return out
        win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
        win = win[:, :, ::s, ::s]  # (B, C, Ho, Wo, k, k) view, no copy
        out = np.einsum("bchwij,ocij->bohw", win, self.param("w"), optimize=True)
        out += self.param("b")[None, :, None, None]
        return out

    def backward(self, dout):
        b, _, h, w = self._xshape
        ho, wo = self._owh
        k, s, p = self.kernel, self.stride, self.pad
        wp = self.param("w")
        dout = np.ascontiguousarray(dout)
        self.grads["b"] = dout.sum(axis=(0, 2, 3))
        if s == 1:
            dw = np.empty_like(wp)
            _kernels.conv_dw(self._xp, dout, dw)
            self.grads["w"] = dw
            # input gradient = full correlation with the flipped kernel
            dyp = np.pad(dout, ((0, 0), (0, 0), (k - 1 - p, k - 1 - p),
                                (k - 1 - p, k - 1 - p)))
            wflip = np.ascontiguousarray(wp[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
            dx = np.empty((b, self.in_ch, h, w), dtype=dout.dtype)
            _kernels.conv_fwd(dyp, wflip, np.zeros(self.in_ch, dtype=dout.dtype), dx)
            return dx
        win = np.lib.stride_tricks.sliding_window_view(self._xp, (k, k), axis=(2, 3))
        win = win[:, :, ::s, ::s]
        self.grads["w"] = np.einsum("bchwij,bohw->ocij", win, dout, optimize=True)
        dxp = np.zeros((b, self.in_ch, h + 2 * p, w + 2 * p), dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + ho * s:s, j:j + wo * s:s] += \
                    np.einsum("bohw,oc->bchw", dout, wp[:, :, i, j])
        return dxp[:, :, p:p + h, p:p + w]


class Elu(Layer):
    """ELU activation: x for x > 0, alpha*(exp(x)-1) otherwise.

    The derivative (alpha*e^x on the negative side, 1 elsewhere) is
    produced in the same pass as the activation.
    """

    def __init__(self, alpha: float = 1.0):
        super().__init__()
        self.alpha = alpha

    def forward(self, x, train=False):
        neg = self.alpha * np.expm1(np.minimum(x, 0.0))
        pos = x > 0
        # d/dx alpha*(e^x - 1) = alpha*e^x = value + alpha on the negative side
        deriv = neg + self.alpha
        deriv[pos] = 1.0
        self._deriv = deriv
        return np.where(pos, x, neg)

    def backward(self, dout):
        return dout * self._deriv


class Tanh(Layer):
    def forward(self, x, train=False):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dout):
        return dout * (1.0 - self._y * self._y)


class LayerNorm(Layer):
    """Per-sample normalization over all non-batch axes, with gain and bias.

    After normalization (before gain/bias) each sample has mean 0 and
    variance 1 up to LAYER_NORM_EPS, independent of batch composition.
    """

    def __init__(self, shape: int | tuple[int, ...]):
        super().__init__()
        self.shape = (shape,) if isinstance(shape, int) else tuple(shape)
        self.params["g"] = np.ones(self.shape, dtype=DEFAULT_DTYPE)
        self.params["b"] = np.zeros(self.shape, dtype=DEFAULT_DTYPE)

    def forward(self, x, train=False):
        if x.shape[1:] != self.shape:
            raise ValueError(f"layer_norm expects trailing shape {self.shape}, got {x.shape}")
        x = np.ascontiguousarray(x)
        b = x.shape[0]
        xhat = np.empty_like(x)
        self._inv = np.empty(b, dtype=x.dtype)
        self._floored = np.empty(b, dtype=np.bool_)
        _kernels.layer_norm_fwd(x.reshape(b, -1), LAYER_NORM_VAR_FLOOR,
                                xhat.reshape(b, -1), self._inv, self._floored)
        self._xhat = xhat
        return self.param("g") * xhat + self.param("b")

    def backward(self, dout):
        b = dout.shape[0]
        dout = np.ascontiguousarray(dout)
        dx = np.empty_like(dout)
        g = np.ascontiguousarray(self.param("g"))
        dg = np.empty(g.size, dtype=dout.dtype)
        db = np.empty(g.size, dtype=dout.dtype)
        # below the variance floor the divisor is a constant, so no
        # gradient flows through the variance term
        _kernels.layer_norm_bwd(dout.reshape(b, -1), g.ravel(),
                                self._xhat.reshape(b, -1), self._inv,
                                self._floored, dx.reshape(b, -1), dg, db)
        self.grads["g"] = dg.reshape(self.shape)
        self.grads["b"] = db.reshape(self.shape)
        return dx


class Dropout(Layer):
    """Inverted dropout; identity in eval mode."""

    def __init__(self, rate: float, rng: np.random.Generator):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0,1), got {rate}")
        self.rate = rate
        self.rng = rng

    def forward(self, x, train=False):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        draws = self.rng.random(x.shape, dtype=np.float32)
        self._mask = (draws < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class MaxPool2d(Layer):
    """Non-overlapping k x k max pooling; trailing rows/cols are dropped."""

    def __init__(self, k: int):
        super().__init__()
        self.k = k

    def forward(self, x, train=False):
        b, c, h, w = x.shape
        k = self.k
        ho, wo = h // k, w // k
        if ho < 1 or wo < 1:
            raise ValueError(f"max_pool {k}x{k} needs input >= {k}x{k}, got {h}x{w}")
        x = np.ascontiguousarray(x)
        out = np.empty((b, c, ho, wo), dtype=x.dtype)
        self._arg = np.empty((b, c, ho, wo), dtype=np.int64)
        _kernels.maxpool_fwd(x, k, out, self._arg)
        self._xshape = x.shape
        return out

    def backward(self, dout):
        dx = np.zeros(self._xshape, dtype=dout.dtype)
        _kernels.maxpool_bwd(np.ascontiguousarray(dout), self._arg, self.k, dx)
        return dx


class Upsample2d(Layer):
    """Nearest-neighbor upsampling by an integer factor."""

    def __init__(self, k: int):
        super().__init__()
        self.k = k

    def forward(self, x, train=False):
        self._xshape = x.shape
        return x.repeat(self.k, axis=2).repeat(self.k, axis=3)

    def backward(self, dout):
        b, c, h, w = self._xshape
        k = self.k
        return dout.reshape(b, c, h, k, w, k).sum(axis=(3, 5))


class Flatten(Layer):
    def forward(self, x, train=False):
        self._xshape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._xshape)


class Reshape(Layer):
    """Reshape each sample to a fixed trailing shape (decoder side of Flatten)."""

    def __init__(self, shape: tuple[int, ...]):
        super().__init__()
        self.shape = tuple(shape)

    def forward(self, x, train=False):
        self._xshape = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, dout):
        return dout.reshape(self._xshape)


class Sequential:
    """Ordered layer stack with a shared compute dtype."""

    def __init__(self, layers: Sequence[Layer], dtype=DEFAULT_DTYPE):
        self.layers = list(layers)
        self.set_dtype(dtype)

    def set_dtype(self, dtype) -> None:
        self.dtype = np.dtype(dtype).type
        for layer in self.layers:
            layer.dtype = self.dtype

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        out = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            out = layer.forward(out, train=train)
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        grad = np.asarray(dout, dtype=self.dtype)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def named_params(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield f"{prefix}{i}.{name}", layer.params[name]

    def named_grads(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield f"{prefix}{i}.{name}", layer.grads[name]

    def load_named_params(self, values: dict[str, np.ndarray], prefix: str = "") -> None:
        for key, current in self.named_params(prefix):
            if key not in values:
                raise KeyError(f"missing parameter {key}")
            arr = values[key]
            if arr.shape != current.shape:
                raise ValueError(f"shape mismatch for {key}: {arr.shape} vs {current.shape}")
            current[...] = arr.astype(DEFAULT_DTYPE, copy=False)


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Euclidean distance, smoothed at zero by DISTANCE_EPS."""
    diff = a - b
    return np.sqrt((diff * diff).sum(axis=-1) + DISTANCE_EPS)


def triplet_loss(anchor: np.ndarray, positive: np.ndarray, negative: np.ndarray,
                 margin: float = 1.0):
    """Hinge triplet loss max(d(a,p) - d(a,n) + margin, 0), averaged over rows.

    Returns (mean_loss, per_sample_losses, (d_anchor, d_positive, d_negative))
    where the gradient arrays are already scaled by 1/batch and are exactly
    zero for rows whose hinge is inactive.
    """
    if not (anchor.shape == positive.shape == negative.shape):
        raise ValueError(
            f"triplet shapes differ: {anchor.shape} {positive.shape} {negative.shape}")
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    if anchor.ndim == 1:
        anchor, positive, negative = anchor[None], positive[None], negative[None]
    b = anchor.shape[0]
    d_ap = euclidean_distance(anchor, positive)
    d_an = euclidean_distance(anchor, negative)
    per = np.maximum(d_ap - d_an + margin, 0.0)
    active = (per > 0).astype(anchor.dtype)[:, None]
    u_ap = (anchor - positive) / d_ap[:, None]
    u_an = (anchor - negative) / d_an[:, None]
    scale = active / b
    da = scale * (u_ap - u_an)
    dp = -scale * u_ap
    dn = scale * u_an
    return float(per.mean()), per, (da, dp, dn)


class Adam:
    """Adaptive-moment optimizer with bias correction.

    Moment accumulators share the gradient dtype; the bias-correction
    scalars are computed in float64. Updates are elementwise, so two runs
    from the same seed stay bitwise identical.
    """

    def __init__(self, lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        self.lr, self.betas, self.eps = lr, betas, eps
        self.step_count = 0
        self.skipped = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> bool:
        """Apply one update. Returns False (and skips) on non-finite gradients."""
        for g in grads.values():
            if not np.all(np.isfinite(g)):
                self.skipped += 1
                return False
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        # lr*(m/c1)/(sqrt(v/c2)+eps) == a*m/(sqrt(v)+e) with the factors below
        a = self.lr * np.sqrt(c2) / c1
        e = self.eps * np.sqrt(c2)
        for key, p in params.items():
            g = grads[key]
            if key not in self._m:
                self._m[key] = np.zeros(p.shape, dtype=g.dtype)
                self._v[key] = np.zeros(p.shape, dtype=g.dtype)
            m, v = self._m[key], self._v[key]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            denom = np.sqrt(v)
            denom += e
            np.divide(m, denom, out=denom)
            denom *= a
            np.subtract(p, denom, out=p, casting="unsafe")
        return True


class GradientCheckReport:
    def __init__(self, per_param: dict[str, float], tolerance: float):
        self.per_param = per_param
        self.tolerance = tolerance
        self.max_rel_error = max(per_param.values()) if per_param else 0.0
        self.passed = self.max_rel_error < tolerance

    def __repr__(self):
        worst = max(self.per_param, key=self.per_param.get) if self.per_param else "-"
        return (f"GradientCheckReport(max_rel_error={self.max_rel_error:.3e}, "
                f"worst={worst}, passed={self.passed})")


def _rel_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-4)


def gradient_check(net: Sequential, x: np.ndarray, tolerance: float = 1e-4,
                   h: float = 1e-6, rng: np.random.Generator | None = None,
                   max_components: int | None = None,
                   check_input: bool = True) -> GradientCheckReport:
    """Compare analytic gradients against central finite differences.

    Runs in eval mode (dropout off) at float64. The scalar objective is a
    fixed random projection of the output, which exercises every output
    component. When ``max_components`` is set, that many randomly chosen
    components per parameter tensor are probed instead of all of them.
    """
    rng = rng or np.random.default_rng(0)
    old_dtype = net.dtype
    net.set_dtype(np.float64)
    # Swap parameters to float64 so +-h perturbations are applied exactly;
    # float32 storage would round them and corrupt the difference quotient.
    saved = [(layer, layer.params) for layer in net.layers]
    for layer in net.layers:
        layer.params = {k: v.astype(np.float64) for k, v in layer.params.items()}
    try:
        x64 = np.asarray(x, dtype=np.float64)
        y = net.forward(x64, train=False)
        proj = rng.standard_normal(y.shape)

        def objective() -> float:
            return float((net.forward(x64, train=False) * proj).sum())

        net.forward(x64, train=False)
        dx = net.backward(proj)
        analytic = {name: g.copy() for name, g in net.named_grads()}
        errors: dict[str, float] = {}
        for name, p in net.named_params():
            ga = analytic[name]
            flat_idx = np.arange(p.size)
            if max_components is not None and p.size > max_components:
                flat_idx = rng.choice(p.size, size=max_components, replace=False)
            worst = 0.0
            for idx in flat_idx:
                orig = p.flat[idx]
                p.flat[idx] = orig + h
                f_plus = objective()
                p.flat[idx] = orig - h
                f_minus = objective()
                p.flat[idx] = orig
                fd = (f_plus - f_minus) / (2 * h)
                worst = max(worst, _rel_error(float(ga.flat[idx]), fd))
            errors[name] = worst
        if check_input:
            worst = 0.0
            flat_idx = np.arange(x64.size)
            if max_components is not None and x64.size > max_components:
                flat_idx = rng.choice(x64.size, size=max_components, replace=False)
            for idx in flat_idx:
                orig = x64.flat[idx]
                x64.flat[idx] = orig + h
                f_plus = objective()
                x64.flat[idx] = orig - h
                f_minus = objective()
                x64.flat[idx] = orig
                fd = (f_plus - f_minus) / (2 * h)
                worst = max(worst, _rel_error(float(dx.flat[idx]), fd))
            errors["<input>"] = worst
        return GradientCheckReport(errors, tolerance)
    finally:
        for layer, params in saved:
            layer.params = params
        net.set_dtype(old_dtype)


# ---------------------------------------------------------------------------
# Parameter serialization: versioned blob, shape table, f32 little-endian
# payload, trailing SHA-256 digest.
# ---------------------------------------------------------------------------

BLOB_MAGIC = b"DRNN"
BLOB_VERSION = 1


class BlobFormatError(ValueError):
    """Raised for bad magic, unsupported version, or digest mismatch."""


def dump_params(named: dict[str, np.ndarray]) -> bytes:
    head = bytearray()
    head += BLOB_MAGIC
    head += struct.pack("<II", BLOB_VERSION, len(named))
    payload = bytearray()
    for name in sorted(named):
        arr = np.ascontiguousarray(named[name], dtype="<f4")
        enc = name.encode("utf-8")
        head += struct.pack("<H", len(enc)) + enc
        head += struct.pack("<B", arr.ndim)
        head += struct.pack(f"<{arr.ndim}I", *arr.shape)
        payload += arr.tobytes()
    body = bytes(head) + bytes(payload)
    return body + hashlib.sha256(body).digest()


def parse_params(blob: bytes) -> dict[str, np.ndarray]:
    if len(blob) < 44 or blob[:4] != BLOB_MAGIC:
        raise BlobFormatError("not a parameter blob (bad magic)")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise BlobFormatError("parameter blob digest mismatch (corrupt or truncated)")
    version, count = struct.unpack_from("<II", body, 4)
    if version != BLOB_VERSION:
        raise BlobFormatError(f"unsupported blob version {version}")
    off = 12
    entries: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", body, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", body, off)
        off += 4 * ndim
        entries.append((name, shape))
    out: dict[str, np.ndarray] = {}
    for name, shape in entries:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(body, dtype="<f4", count=n, offset=off).reshape(shape)
        out[name] = arr.astype(DEFAULT_DTYPE).copy()
        off += 4 * n
    return out


def save_params(path, named: dict[str, np.ndarray]) -> str:
    """Write the blob; returns its hex digest."""
    blob = dump_params(named)
    with open(path, "wb") as fh:
        fh.write(blob)
    return blob[-32:].hex()


def load_params(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return parse_params(fh.read())
