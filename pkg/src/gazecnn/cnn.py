"""LeNet-style network and the numpy layer kernels it is built from.

Architecture: conv(5x5) -> relu -> maxpool(2) -> conv(5x5) -> relu ->
maxpool(2) -> fc(120) -> relu -> fc(3). Tensors are ``(N, C, H, W)`` or
``(N, D)``; float32 for training and inference, float64 when a network is
cast for gradient checking.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (ArchError, ModelFormatError, ModelShapeError, ModelValidationError,
                     ShapeError)

MAGIC = b"GZK1"
FORMAT_VERSION = 1
PARAM_ORDER = ("conv1.w", "conv1.b", "conv2.w", "conv2.b", "fc1.w", "fc1.b", "fc2.w", "fc2.b")


# --- layers -------------------------------------------------------------------

def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """``(N, C, H, W)`` -> ``(N*H'*W', C*k*k)`` patches, row-major over (n, y, x)."""
    n, c, h, w = x.shape
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # N, C, H', W', k, k
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * (h - k + 1) * (w - k + 1), c * k * k)


def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, cols=None) -> np.ndarray:
    """Valid, stride-1 cross-correlation plus per-filter bias."""
    if x.ndim != 4 or w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"conv expects x (N,C,H,W) and w (F,C,k,k); got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    f, cw, k, _ = w.shape
    if cw != c or k > h or k > wd or b.shape != (f,):
        raise ShapeError(f"conv shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    if cols is None:
        cols = _im2col(x, k)
    ho, wo = h - k + 1, wd - k + 1
    out = cols @ w.reshape(f, -1).T + b
    return out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)


def conv_backward(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray, cols=None, need_dx=True):
    """Gradients of :func:`conv_forward` w.r.t. ``x``, ``w`` and ``b``."""
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    ho, wo = h - k + 1, wd - k + 1
    if grad_out.shape != (n, f, ho, wo):
        raise ShapeError(f"grad_out {grad_out.shape} does not match forward output {(n, f, ho, wo)}")
    if cols is None:
        cols = _im2col(x, k)
    g2 = grad_out.transpose(0, 2, 3, 1).reshape(-1, f)
    gw = (g2.T @ cols).reshape(w.shape)
    gb = g2.sum(axis=0)
    gx = None
    if need_dx:
        # full correlation of grad_out with the spatially flipped kernel
        gpad = np.pad(grad_out, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
        wflip = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)  # C, F, k, k
        gx = (_im2col(gpad, k) @ wflip.reshape(c, -1).T).reshape(n, h, wd, c).transpose(0, 3, 1, 2)
    return gx, gw, gb


def pool_forward(x: np.ndarray):
    """2x2 stride-2 max pooling. Returns ``(out, argmax)``; ties go to the
    first element of the window in row-major order."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"pooling needs even spatial dims, got {h}x{w}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def pool_backward(grad_out: np.ndarray, idx: np.ndarray) -> np.ndarray:
    n, c, ho, wo = grad_out.shape
    g = np.zeros((n, c, ho, wo, 4), dtype=grad_out.dtype)
    np.put_along_axis(g, idx[..., None], grad_out[..., None], axis=-1)
    return g.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * 2, wo * 2)


def fc_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"fc shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    return x @ w + b


def fc_backward(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray):
    if grad_out.shape != (x.shape[0], w.shape[1]):
        raise ShapeError(f"grad_out {grad_out.shape} does not match fc output {(x.shape[0], w.shape[1])}")
    return grad_out @ w.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels):
    """Mean cross-entropy and its gradient ``(p - onehot) / N``."""
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must be {n} integers in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    logp = z - logsum[:, None]
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n


# --- architecture -------------------------------------------------------------

@dataclass(frozen=True)
class ArchConfig:
    c1: int = 6
    c2: int = 2
    kernel: int = 5
    fc1: int = 120
    n_classes: int = 3
    input_size: int = 72
    in_channels: int = 1

    def __post_init__(self):
        for name in ("c1", "c2", "kernel", "fc1", "n_classes", "input_size", "in_channels"):
            if getattr(self, name) < 1:
                raise ArchError(f"{name} must be >= 1")
        s = self.input_size
        for _ in range(2):
            s -= self.kernel - 1
            if s < 2 or s % 2:
                raise ArchError(f"spatial chain {self.spatial_chain_unchecked()} does not pool evenly")
            s //= 2

    def spatial_chain_unchecked(self):
        k, s = self.kernel, self.input_size
        a = s - k + 1
        b = a // 2
        c = b - k + 1
        return (s, a, b, c, c // 2)

    @property
    def spatial_chain(self) -> tuple:
        return self.spatial_chain_unchecked()

    @property
    def flat_features(self) -> int:
        return self.spatial_chain[-1] ** 2 * self.c2

    def param_shapes(self) -> dict:
        k = self.kernel
        return {
            "conv1.w": (self.c1, self.in_channels, k, k), "conv1.b": (self.c1,),
            "conv2.w": (self.c2, self.c1, k, k), "conv2.b": (self.c2,),
            "fc1.w": (self.flat_features, self.fc1), "fc1.b": (self.fc1,),
            "fc2.w": (self.fc1, self.n_classes), "fc2.b": (self.n_classes,),
        }


def param_count(arch: ArchConfig) -> int:
    return sum(int(np.prod(s)) for s in arch.param_shapes().values())


@dataclass
class Network:
    arch: ArchConfig
    params: dict
    seed: int = 0

    def __post_init__(self):
        shapes = self.arch.param_shapes()
        if set(self.params) != set(shapes):
            raise ShapeError(f"parameter names {sorted(self.params)} do not match the architecture")
        for name, shape in shapes.items():
            if self.params[name].shape != shape:
                raise ShapeError(f"{name}: shape {self.params[name].shape}, expected {shape}")

    @property
    def dtype(self):
        return self.params["conv1.w"].dtype

    def copy(self) -> "Network":
        return Network(self.arch, {k: v.copy() for k, v in self.params.items()}, self.seed)

    def astype(self, dtype) -> "Network":
        return Network(self.arch, {k: v.astype(dtype) for k, v in self.params.items()}, self.seed)

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


def init_params(arch: ArchConfig, seed: int = 0) -> Network:
    """Glorot-uniform weights, zero biases, drawn in declaration order."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=np.float32)
            continue
        if len(shape) == 4:
            f, c, kh, kw = shape
            fan_in, fan_out = c * kh * kw, f * kh * kw
        else:
            fan_in, fan_out = shape
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-lim, lim, size=shape).astype(np.float32)
    return Network(arch, params, seed)


def _check_batch(net: Network, x: np.ndarray) -> np.ndarray:
    a = net.arch
    want = (a.in_channels, a.input_size, a.input_size)
    if x.ndim != 4 or x.shape[1:] != want:
        raise ShapeError(f"batch must be (N, {want[0]}, {want[1]}, {want[2]}), got {x.shape}")
    return x.astype(net.dtype, copy=False)


def forward(net: Network, batch: np.ndarray, keep=False):
    """Logits ``(N, n_classes)``. With ``keep=True`` also returns the
    activations needed by :func:`backward`."""
    p = net.params
    k = net.arch.kernel
    x = _check_batch(net, np.asarray(batch))
    cols1 = _im2col(x, k)
    z1 = conv_forward(x, p["conv1.w"], p["conv1.b"], cols=cols1)
    a1 = relu(z1)
    p1, i1 = pool_forward(a1)
    cols2 = _im2col(p1, k)
    z2 = conv_forward(p1, p["conv2.w"], p["conv2.b"], cols=cols2)
    a2 = relu(z2)
    p2, i2 = pool_forward(a2)
    flat = p2.reshape(len(x), -1)
    z3 = fc_forward(flat, p["fc1.w"], p["fc1.b"])
    a3 = relu(z3)
    logits = fc_forward(a3, p["fc2.w"], p["fc2.b"])
    if not keep:
        return logits
    cache = dict(x=x, cols1=cols1, z1=z1, i1=i1, p1=p1, cols2=cols2, z2=z2, i2=i2,
                 p2_shape=p2.shape, flat=flat, z3=z3, a3=a3)
    return logits, cache


def backward(net: Network, cache: dict, grad_logits: np.ndarray) -> dict:
    p = net.params
    g = {}
    ga3, g["fc2.w"], g["fc2.b"] = fc_backward(cache["a3"], p["fc2.w"], grad_logits)
    gz3 = relu_backward(cache["z3"], ga3)
    gflat, g["fc1.w"], g["fc1.b"] = fc_backward(cache["flat"], p["fc1.w"], gz3)
    gp2 = gflat.reshape(cache["p2_shape"])
    gz2 = relu_backward(cache["z2"], pool_backward(gp2, cache["i2"]))
    gp1, g["conv2.w"], g["conv2.b"] = conv_backward(cache["p1"], p["conv2.w"], gz2, cols=cache["cols2"])
    gz1 = relu_backward(cache["z1"], pool_backward(gp1, cache["i1"]))
    _, g["conv1.w"], g["conv1.b"] = conv_backward(cache["x"], p["conv1.w"], gz1, cols=cache["cols1"],
                                                  need_dx=False)
    return g


def loss_and_grads(net: Network, batch, labels):
    logits, cache = forward(net, batch, keep=True)
    loss, gl = softmax_xent(logits, labels)
    return loss, backward(net, cache, gl.astype(net.dtype, copy=False))


def predict(net: Network, batch) -> np.ndarray:
    """Argmax labels; ``np.argmax`` already breaks ties toward the lowest index."""
    return np.argmax(forward(net, batch), axis=1)


def to_batch(inputs) -> np.ndarray:
    """Stack binary 72x72 rasters into a float32 ``(N, 1, H, W)`` batch."""
    arr = np.asarray(inputs, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    return arr[:, None]


# --- model file ---------------------------------------------------------------
#
# "GZK1" | u16 version | 7 x u16 arch fields | u64 seed | f32 blobs in PARAM_ORDER
# all little-endian

_ARCH_FIELDS = ("in_channels", "input_size", "c1", "c2", "kernel", "fc1", "n_classes")
_HEADER = struct.Struct("<4sH7HQ")


def dumps_model(net: Network) -> bytes:
    a = net.arch
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, FORMAT_VERSION, *(getattr(a, f) for f in _ARCH_FIELDS), net.seed))
    for name in PARAM_ORDER:
        buf.write(np.ascontiguousarray(net.params[name], dtype="<f4").tobytes())
    return buf.getvalue()


def loads_model(data: bytes) -> Network:
    if len(data) < 6 or data[:4] != MAGIC:
        raise ModelFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version = struct.unpack_from("<H", data, 4)[0]
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    if len(data) < _HEADER.size:
        raise ModelShapeError("model header truncated")
    fields = _HEADER.unpack_from(data, 0)
    try:
        arch = ArchConfig(**dict(zip(_ARCH_FIELDS, fields[2:9])))
    except ArchError as e:
        raise ModelShapeError(f"embedded architecture invalid: {e}") from None
    seed = fields[9]
    shapes = arch.param_shapes()
    expected = _HEADER.size + 4 * sum(int(np.prod(s)) for s in shapes.values())
    if len(data) != expected:
        raise ModelShapeError(f"model file holds {len(data)} bytes, architecture needs {expected}")
    params, off = {}, _HEADER.size
    for name in PARAM_ORDER:
        n = int(np.prod(shapes[name]))
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).astype(np.float32).reshape(shapes[name])
        if not np.all(np.isfinite(arr)):
            raise ModelValidationError(f"{name} contains non-finite values")
        params[name] = arr
        off += 4 * n
    return Network(arch, params, seed)


def save_model(net: Network, sink) -> None:
    data = dumps_model(net)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as f:
            f.write(data)
    else:
        sink.write(data)


def load_model(source) -> Network:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as f:
            return loads_model(f.read())
    return loads_model(source.read())
