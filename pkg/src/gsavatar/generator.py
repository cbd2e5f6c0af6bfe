"""Fixed-architecture convolutional generator mapping pose maps to Gaussian maps.

This is the structural layer the codec transmits: a small deterministic U-Net-ish
stack with one skip connection, instantiated separately for the front and back
views (~2e4 parameters total). forward() is a pure function of the weights and
the input maps; there is no framework, no state, and no randomness.
"""

from collections import OrderedDict

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import binio
from .avatar import GAUSSIAN_MAP_CHANNELS, GaussianMapPair, PoseMapPair
from .errors import DecodeError

WEIGHTS_MAGIC = b"HGWT"
LEAKY_SLOPE = 0.2

VIEWS = ("front", "back")
_LAYERS = (
    ("conv1", (16, 3, 3, 3)),
    ("conv2", (32, 16, 3, 3)),
    ("conv3", (16, 32, 3, 3)),
    ("conv4", (GAUSSIAN_MAP_CHANNELS, 16, 1, 1)),
)

# name -> shape for every tensor of the fixed architecture, in canonical order
ARCHITECTURE = OrderedDict()
for _view in VIEWS:
    for _layer, _shape in _LAYERS:
        ARCHITECTURE[f"{_view}.{_layer}.kernel"] = _shape
        ARCHITECTURE[f"{_view}.{_layer}.bias"] = (_shape[0],)

PARAMETER_COUNT = sum(int(np.prod(s)) for s in ARCHITECTURE.values())


class GeneratorWeights:
    """Ordered named float32 tensors matching the fixed architecture exactly."""

    def __init__(self, tensors):
        self.tensors = OrderedDict()
        for name, shape in ARCHITECTURE.items():
            if name not in tensors:
                raise ValueError(f"missing tensor {name}")
            arr = np.asarray(tensors[name], dtype=np.float32)
            if arr.shape != shape:
                raise ValueError(f"tensor {name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"tensor {name} contains non-finite values")
            self.tensors[name] = arr
        extra = set(tensors) - set(ARCHITECTURE)
        if extra:
            raise ValueError(f"unknown tensors: {sorted(extra)}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GeneratorWeights):
            return NotImplemented
        return all(
            np.array_equal(a, other.tensors[n]) for n, a in self.tensors.items()
        )

    def copy(self) -> "GeneratorWeights":
        return GeneratorWeights({n: a.copy() for n, a in self.tensors.items()})

    @classmethod
    def random(cls, seed: int = 0, kernel_scale: float = 0.05) -> "GeneratorWeights":
        """Seeded random init with output biases chosen so the initial Gaussian
        maps decode to small, mostly opaque, mid-gray splats."""
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in ARCHITECTURE.items():
            if name.endswith(".bias"):
                tensors[name] = np.zeros(shape, dtype=np.float32)
            else:
                fan_in = int(np.prod(shape[1:]))
                tensors[name] = rng.normal(0.0, kernel_scale / np.sqrt(fan_in), shape).astype(np.float32)
        for view in VIEWS:
            bias = np.zeros(GAUSSIAN_MAP_CHANNELS, dtype=np.float32)
            bias[3:6] = np.log(0.01)  # log-scale: 1 cm splats
            bias[6] = 1.0  # identity-leaning quaternion
            bias[10] = 2.0  # opacity logit ~ 0.88
            bias[11:14] = (0.7, 0.55, 0.45)
            tensors[f"{view}.conv4.bias"] = bias
        return cls(tensors)


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, stride: int = 1) -> np.ndarray:
    """Zero-padded 'same' convolution on an HWC image (odd square kernels)."""
    k = kernel.shape[2]
    pad = k // 2
    if pad:
        x = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    win = sliding_window_view(x, (k, k), axis=(0, 1))[::stride, ::stride]
    out = np.einsum("hwckl,ockl->hwo", win, kernel, optimize=True)
    return out + bias


def leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, np.float32(LEAKY_SLOPE) * x)


def upsample2x(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=0), 2, axis=1)


def _forward_view(weights: GeneratorWeights, view: str, x: np.ndarray) -> np.ndarray:
    t = weights.tensors
    f1 = leaky_relu(conv2d(x, t[f"{view}.conv1.kernel"], t[f"{view}.conv1.bias"]))
    f2 = leaky_relu(conv2d(f1, t[f"{view}.conv2.kernel"], t[f"{view}.conv2.bias"], stride=2))
    f3 = leaky_relu(conv2d(upsample2x(f2), t[f"{view}.conv3.kernel"], t[f"{view}.conv3.bias"]))
    return conv2d(f3 + f1, t[f"{view}.conv4.kernel"], t[f"{view}.conv4.bias"])


def forward(weights: GeneratorWeights, maps: PoseMapPair) -> GaussianMapPair:
    """Predict front/back Gaussian attribute maps from a pose map pair.

    Deterministic and resolution-preserving; H and W must be even because of
    the stride-2 / upsample-2 stage.
    """
    h, w = maps.resolution
    if h % 2 or w % 2:
        raise ValueError(f"pose map resolution {h}x{w} must be even")
    front = _forward_view(weights, "front", maps.front.astype(np.float32))
    back = _forward_view(weights, "back", maps.back.astype(np.float32))
    return GaussianMapPair(front, back, maps.body_mask_front, maps.body_mask_back)


def save_weights(weights: GeneratorWeights, path):
    with open(path, "wb") as f:
        f.write(serialize_weights(weights))


def serialize_weights(weights: GeneratorWeights) -> bytes:
    out = [WEIGHTS_MAGIC, binio.u32(len(weights.tensors))]
    for name, arr in weights.tensors.items():
        encoded = name.encode("utf-8")
        out.append(binio.u16(len(encoded)))
        out.append(encoded)
        out.append(binio.u8(arr.ndim))
        for d in arr.shape:
            out.append(binio.u32(d))
        out.append(binio.f32_array(arr))
    return b"".join(out)


def load_weights(path) -> GeneratorWeights:
    with open(path, "rb") as f:
        return parse_weights(f.read())


def parse_weights(data: bytes) -> GeneratorWeights:
    r = binio.ByteReader(data)
    r.magic(WEIGHTS_MAGIC)
    count = r.u32()
    tensors = {}
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        rank = r.u8()
        shape = tuple(r.u32() for _ in range(rank))
        expected = ARCHITECTURE.get(name)
        if expected is None:
            raise DecodeError(f"unknown tensor {name!r}")
        if shape != expected:
            raise DecodeError(f"tensor {name!r} has shape {shape}, expected {expected}")
        tensors[name] = r.f32_array(int(np.prod(shape)), shape)
    missing = set(ARCHITECTURE) - set(tensors)
    if missing:
        raise DecodeError(f"missing tensors: {sorted(missing)}")
    try:
        return GeneratorWeights(tensors)
    except ValueError as e:
        raise DecodeError(f"invalid weights: {e}") from e
