"""Convolutional softmax policy with hand-written forward/backward passes.

Architecture: one valid convolution (``F`` kernels of ``K x K``) with ReLU,
flattened in (row, col, filter) order into a fully-connected softmax head
over ``m * q + 1`` actions.  Everything is batched over a leading axis.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import struct
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import sparse

from .errors import CheckpointError, ConfigError, NumericError, ShapeError

CHECKPOINT_MAGIC = b"DRLSCKPT"
CHECKPOINT_VERSION = 1
PARAM_NAMES = ("conv_kernels", "conv_bias", "fc_weights", "fc_bias")

# working-set bound (float64 count) for one batched forward/backward chunk
_CHUNK_FLOATS = 16_000_000


@dataclass(frozen=True)
class NetConfig:
    input_rows: int
    input_cols: int
    num_actions: int
    kernel_size: int = 3
    num_filters: int = 16
    learning_rate: float = 1e-3
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8

    def __post_init__(self):
        if self.kernel_size < 1:
            raise ConfigError("kernel_size must be >= 1")
        if self.kernel_size > min(self.input_rows, self.input_cols):
            raise ConfigError(f"kernel_size {self.kernel_size} larger than input "
                              f"{self.input_rows}x{self.input_cols}")
        if self.num_filters < 1:
            raise ConfigError("num_filters must be >= 1")
        if self.num_actions < 2:
            raise ConfigError("num_actions must be >= 2")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 < self.rmsprop_decay < 1:
            raise ConfigError("rmsprop_decay must be in (0, 1)")
        if self.rmsprop_epsilon <= 0:
            raise ConfigError("rmsprop_epsilon must be positive")

    @property
    def conv_output_shape(self) -> tuple[int, int]:
        k = self.kernel_size
        return self.input_rows - k + 1, self.input_cols - k + 1

    @property
    def hidden_size(self) -> int:
        rows, cols = self.conv_output_shape
        return rows * cols * self.num_filters

    def param_shapes(self) -> dict:
        k, f = self.kernel_size, self.num_filters
        return {
            "conv_kernels": (f, k, k),
            "conv_bias": (f,),
            "fc_weights": (self.hidden_size, self.num_actions),
            "fc_bias": (self.num_actions,),
        }


@dataclass
class PolicyParams:
    config: NetConfig
    conv_kernels: np.ndarray
    conv_bias: np.ndarray
    fc_weights: np.ndarray
    fc_bias: np.ndarray
    # rmsprop running mean of squared gradients, keyed like PARAM_NAMES
    optimizer_state: dict

    def arrays(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "PolicyParams":
        return dataclasses.replace(
            self, **{n: a.copy() for n, a in self.arrays().items()},
            optimizer_state={n: a.copy() for n, a in self.optimizer_state.items()})

    def num_parameters(self) -> int:
        return sum(a.size for a in self.arrays().values())


def init_params(config: NetConfig, rng: np.random.Generator) -> PolicyParams:
    """Zero-mean normal weights scaled by 1/sqrt(fan_in); zero biases."""
    k = config.kernel_size
    shapes = config.param_shapes()
    kernels = rng.standard_normal(shapes["conv_kernels"]) / np.sqrt(k * k)
    fc = rng.standard_normal(shapes["fc_weights"]) / np.sqrt(config.hidden_size)
    return PolicyParams(
        config, kernels, np.zeros(shapes["conv_bias"]), fc, np.zeros(shapes["fc_bias"]),
        {n: np.zeros(s) for n, s in shapes.items()})


def zero_params(config: NetConfig) -> PolicyParams:
    shapes = config.param_shapes()
    arrays = {n: np.zeros(s) for n, s in shapes.items()}
    return PolicyParams(config, **arrays, optimizer_state={n: np.zeros(s) for n, s in shapes.items()})


class ForwardTrace(NamedTuple):
    """Batched intermediates kept for the backward pass."""
    input: np.ndarray           # (N, rows, cols)
    pre_activation: np.ndarray  # (N, out_rows, out_cols, F)
    hidden: np.ndarray          # ReLU of pre_activation
    logits: np.ndarray          # (N, A)
    probs: np.ndarray           # (N, A)


def _as_batch(images, config: NetConfig) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (config.input_rows, config.input_cols):
        raise ConfigError(f"input shape {x.shape} does not match "
                          f"({config.input_rows}, {config.input_cols})")
    return x


def _patches(x: np.ndarray, k: int) -> np.ndarray:
    """(N, out_rows, out_cols, k*k) view-backed copy of all k x k windows."""
    win = sliding_window_view(x, (k, k), axis=(1, 2))
    return win.reshape(*win.shape[:3], k * k)


def conv_forward(images, params: PolicyParams) -> tuple[np.ndarray, np.ndarray]:
    """Valid convolution + bias; returns (pre_activation, ReLU output)."""
    cfg = params.config
    x = _as_batch(images, cfg)
    cols = _patches(x, cfg.kernel_size)
    out_shape = cols.shape[:3] + (cfg.num_filters,)
    pre = cols.reshape(-1, cols.shape[-1]) @ params.conv_kernels.reshape(cfg.num_filters, -1).T
    pre += params.conv_bias
    pre = pre.reshape(out_shape)
    return pre, np.maximum(pre, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(images, params: PolicyParams) -> ForwardTrace:
    for name, arr in params.arrays().items():
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in {name}")
    x = _as_batch(images, params.config)
    pre, hidden = conv_forward(x, params)
    logits = hidden.reshape(len(x), -1) @ params.fc_weights + params.fc_bias
    return ForwardTrace(x, pre, hidden, logits, softmax(logits))


def action_probs(images, params: PolicyParams) -> np.ndarray:
    """Forward pass in memory-bounded chunks, returning only the probabilities."""
    x = _as_batch(images, params.config)
    chunk = chunk_size(params.config)
    if len(x) <= chunk:
        return forward(x, params).probs
    return np.concatenate([forward(x[i:i + chunk], params).probs
                           for i in range(0, len(x), chunk)])


def chunk_size(config: NetConfig) -> int:
    """Images per batch so patches, activations and their gradient stay bounded."""
    rows, cols = config.conv_output_shape
    per_image = rows * cols * (config.kernel_size ** 2 + 3 * config.num_filters)
    return max(1, _CHUNK_FLOATS // per_image)


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; consumes exactly one uniform from ``rng``."""
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    return min(int(np.searchsorted(cdf, u, side="right")), len(probs) - 1)


def greedy_action(probs: np.ndarray) -> int:
    return int(np.argmax(probs))


def policy_gradient(trace: ForwardTrace, actions, advantages, params: PolicyParams) -> dict:
    """Ascent gradient of sum_t advantage_t * log pi(action_t | obs_t)."""
    actions = np.asarray(actions, dtype=np.intp)
    adv = np.asarray(advantages, dtype=np.float64)
    n = len(trace.probs)
    if len(actions) != n or len(adv) != n:
        raise ValueError(f"length mismatch: {n} traces, {len(actions)} actions, "
                         f"{len(adv)} advantages")
    if not np.all(np.isfinite(adv)):
        raise NumericError("non-finite advantage")
    cfg = params.config
    dlogits = -trace.probs * adv[:, None]
    dlogits[np.arange(n), actions] += adv
    flat = trace.hidden.reshape(n, -1)
    grads = {
        "fc_weights": flat.T @ dlogits,
        "fc_bias": dlogits.sum(axis=0),
    }
    dhidden = (dlogits @ params.fc_weights.T).reshape(trace.hidden.shape)
    dhidden *= trace.pre_activation > 0
    grads["conv_bias"] = dhidden.sum(axis=(0, 1, 2))
    cols = _patches(trace.input, cfg.kernel_size).reshape(-1, cfg.kernel_size ** 2)
    dk = cols.T @ dhidden.reshape(-1, cfg.num_filters)
    grads["conv_kernels"] = dk.T.reshape(cfg.param_shapes()["conv_kernels"])
    return grads


def zero_gradient(config: NetConfig) -> dict:
    return {n: np.zeros(s) for n, s in config.param_shapes().items()}


def apply_update(params: PolicyParams, gradient: dict) -> PolicyParams:
    """RMSProp ascent step; returns updated params (inputs left untouched)."""
    cfg = params.config
    for name, g in gradient.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    new = params.copy()
    for name in PARAM_NAMES:
        g = gradient[name]
        ms = new.optimizer_state[name]
        ms *= cfg.rmsprop_decay
        ms += (1.0 - cfg.rmsprop_decay) * g * g
        getattr(new, name)[...] += cfg.learning_rate * g / np.sqrt(ms + cfg.rmsprop_epsilon)
    for name, arr in new.arrays().items():
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"update produced non-finite {name}")
    return new


def save_params(params: PolicyParams, path, metadata: Optional[dict] = None) -> None:
    """Write a checkpoint.

    Layout: magic ``DRLSCKPT``, uint32 version, uint32 header length, a JSON
    header (net config and free-form metadata), then the four parameter
    arrays followed by their four optimizer accumulators, each as raw
    little-endian float64 in C order, then a SHA-256 of all prior bytes.
    """
    header = json.dumps({"net": dataclasses.asdict(params.config),
                         "metadata": metadata or {}}, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
    buf.write(header)
    for name in PARAM_NAMES:
        buf.write(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())
    for name in PARAM_NAMES:
        buf.write(np.ascontiguousarray(params.optimizer_state[name], dtype="<f8").tobytes())
    body = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(body + hashlib.sha256(body).digest())


def load_params(path, expected: Optional[NetConfig] = None) -> tuple[PolicyParams, dict]:
    """Read a checkpoint; returns (params, metadata)."""
    with open(path, "rb") as fh:
        data = fh.read()
    fixed = len(CHECKPOINT_MAGIC) + 8
    if len(data) < fixed + 32 or not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint or truncated")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (corrupt or truncated)")
    version, header_len = struct.unpack("<II", body[len(CHECKPOINT_MAGIC):fixed])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(body[fixed:fixed + header_len].decode("utf-8"))
        config = NetConfig(**header["net"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: bad header: {exc}") from None
    if expected is not None:
        if (config.input_rows, config.input_cols, config.num_actions, config.kernel_size,
                config.num_filters) != (expected.input_rows, expected.input_cols,
                                        expected.num_actions, expected.kernel_size,
                                        expected.num_filters):
            raise ShapeError(f"{path}: checkpoint network {config} does not match {expected}")
        config = expected
    shapes = config.param_shapes()
    sizes = [int(np.prod(shapes[n])) for n in PARAM_NAMES]
    payload = body[fixed + header_len:]
    if len(payload) != 16 * sum(sizes):
        raise CheckpointError(f"{path}: payload has {len(payload)} bytes, "
                              f"expected {16 * sum(sizes)}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    arrays, pos = {}, 0
    for name, size in zip(PARAM_NAMES * 2, sizes * 2):
        key = name if name not in arrays else "ms_" + name
        arrays[key] = values[pos:pos + size].reshape(shapes[name]).copy()
        pos += size
    params = PolicyParams(config, *(arrays[n] for n in PARAM_NAMES),
                          {n: arrays["ms_" + n] for n in PARAM_NAMES})
    return params, header.get("metadata", {})


class PatternTables:
    """Exact fast path for binary images.

    A K x K window of a 0/1 image is one of ``2**(K*K)`` bit patterns, so
    the convolution + ReLU output at a pixel depends only on that pattern.
    Folding the fully-connected head in gives, per (pixel, pattern), the
    contribution to every logit.  Observations are mostly empty, so logits
    are stored as the all-zero-window total plus per-(pixel, pattern)
    corrections, and only windows with a nonzero pattern are gathered.  The
    backward pass scatters logit gradients into the same table and contracts
    it against the small per-pattern tables.  Valid only while the
    parameters it was built from are unchanged.
    """

    MAX_KERNEL_CELLS = 9

    def __init__(self, params: PolicyParams):
        cfg = params.config
        k2 = cfg.kernel_size ** 2
        if k2 > self.MAX_KERNEL_CELLS:
            raise ConfigError(f"pattern tables need kernel_size**2 <= {self.MAX_KERNEL_CELLS}")
        self.params = params
        self.config = cfg
        self.num_patterns = 1 << k2
        codes = np.arange(self.num_patterns)
        # bit a*K+b of a pattern is the window cell (a, b)
        self.bits = ((codes[:, None] >> np.arange(k2)) & 1).astype(np.float64)
        pre = self.bits @ params.conv_kernels.reshape(cfg.num_filters, k2).T + params.conv_bias
        self.active = pre > 0
        self.relu = np.where(self.active, pre, 0.0)  # (C, F)
        rows, cols = cfg.conv_output_shape
        self.num_pixels = rows * cols
        self.fc3 = params.fc_weights.reshape(self.num_pixels, cfg.num_filters, cfg.num_actions)
        table = np.matmul(self.relu[None], self.fc3)  # (P, C, A)
        self.zero_logits = table[:, 0, :].sum(axis=0) + params.fc_bias
        self.delta_table = (table - table[:, :1, :]).reshape(-1, cfg.num_actions)

    @classmethod
    def supports(cls, config: NetConfig) -> bool:
        return config.kernel_size ** 2 <= cls.MAX_KERNEL_CELLS

    def pattern_codes(self, images) -> np.ndarray:
        """(N, P) window pattern code at every output pixel."""
        x = np.asarray(images)
        if x.ndim == 2:
            x = x[None]
        cfg = self.config
        if x.shape[1:] != (cfg.input_rows, cfg.input_cols):
            raise ConfigError(f"input shape {x.shape} does not match "
                              f"({cfg.input_rows}, {cfg.input_cols})")
        if x.dtype != np.uint8 and x.dtype != np.bool_ and not np.all((x == 0) | (x == 1)):
            raise ValueError("pattern tables need binary images")
        k = cfg.kernel_size
        rows, cols = cfg.conv_output_shape
        x = x.astype(np.uint16)
        code = np.zeros((len(x), rows, cols), dtype=np.uint16)
        for a in range(k):
            for b in range(k):
                code |= x[:, a:a + rows, b:b + cols] << (a * k + b)
        return code.reshape(len(x), -1)

    def incidence(self, codes: np.ndarray) -> sparse.csr_matrix:
        """(N, P*C) one-hot matrix of each image's nonzero (pixel, pattern) cells."""
        n_img, pix = np.nonzero(codes)
        cells = pix * self.num_patterns + codes[n_img, pix]
        indptr = np.zeros(len(codes) + 1, dtype=np.intp)
        np.cumsum(np.bincount(n_img, minlength=len(codes)), out=indptr[1:])
        return sparse.csr_matrix((np.ones(len(cells)), cells, indptr),
                                 shape=(len(codes), len(self.delta_table)))

    def logits(self, images) -> np.ndarray:
        return self.incidence(self.pattern_codes(images)) @ self.delta_table + self.zero_logits

    def probs(self, images) -> np.ndarray:
        return softmax(self.logits(images))

    def policy_gradient(self, images, actions, advantages, chunk: int = 4096) -> dict:
        """Same quantity as :func:`policy_gradient`, for binary images."""
        cfg = self.config
        actions = np.asarray(actions, dtype=np.intp)
        adv = np.asarray(advantages, dtype=np.float64)
        if not (len(images) == len(actions) == len(adv)):
            raise ValueError("length mismatch between images, actions and advantages")
        if not np.all(np.isfinite(adv)):
            raise NumericError("non-finite advantage")
        scatter = np.zeros(self.delta_table.shape)
        bias_grad = np.zeros(cfg.num_actions)
        for start in range(0, len(actions), chunk):
            sl = slice(start, start + chunk)
            incidence = self.incidence(self.pattern_codes(images[sl]))
            n = incidence.shape[0]
            dlogits = -softmax(incidence @ self.delta_table + self.zero_logits) * adv[sl, None]
            dlogits[np.arange(n), actions[sl]] += adv[sl]
            bias_grad += dlogits.sum(axis=0)
            scatter += incidence.T @ dlogits
        s = scatter.reshape(self.num_pixels, self.num_patterns, cfg.num_actions)
        # every pixel not seen with a nonzero pattern was seen with pattern 0
        s[:, 0, :] = bias_grad - s[:, 1:, :].sum(axis=1)
        fc_grad = np.matmul(self.relu.T[None], s)  # (P, F, A)
        upstream = np.tensordot(s, self.fc3, axes=([0, 2], [0, 2]))  # (C, F)
        dpre = upstream * self.active
        k = cfg.kernel_size
        return {
            "conv_kernels": (self.bits.T @ dpre).T.reshape(cfg.num_filters, k, k),
            "conv_bias": dpre.sum(axis=0),
            "fc_weights": fc_grad.reshape(cfg.hidden_size, cfg.num_actions),
            "fc_bias": bias_grad,
        }
