"""Two-head fully-convolutional network with hand-derived backpropagation.

Layout for base width ``w`` (spatial scale in brackets)::

    enc1   conv3x3 in->w,   norm, relu            [1]
           avgpool 2x2
    enc2   conv3x3 w->2w,   norm, relu            [1/2]   -> skip
           avgpool 2x2
    enc3   conv3x3 2w->2w,  norm, relu            [1/4]
    ctx.r  conv3x3 dil=r 2w->w, norm, relu        [1/4]   one branch per rate
    proj   conv1x1 (w*#rates)->2w, norm, relu, dropout
           bilinear x2, concat with skip (4w channels)   [1/2]
    head   conv3x3 4w->w, norm, relu, dropout, conv1x1 w->out (+bias)
           bilinear x2 -> logits at input resolution     [1]

There are two heads (``depth`` and ``sem``) on the shared trunk.  The depth
head emits ``m_d`` ordinal logits, or a single log-depth channel for the
regression baseline (``depth_channels=1``).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..errors import ArgumentError, ShapeError, StateError
from ..tensorcore import Rng
from . import layers as L

DOWNSAMPLE = 4


@dataclass(frozen=True)
class ModelConfig:
    input_channels: int = 3
    base_width: int = 8
    dilation_rates: tuple = (1, 2, 4)
    norm_kind: str = "group"
    groups_per_norm: int = 4
    dropout_rate: float = 0.5
    m_d: int = 128
    m_s: int = 6
    seed: int = 0
    depth_channels: int = 0  # 0 -> m_d (ordinal); 1 -> regression baseline

    def __post_init__(self):
        object.__setattr__(self, "dilation_rates", tuple(int(r) for r in self.dilation_rates))
        if self.base_width < 1 or self.input_channels < 1:
            raise ArgumentError("channel counts must be positive")
        if self.norm_kind not in ("group", "batch"):
            raise ArgumentError(f"norm_kind must be 'group' or 'batch', got {self.norm_kind!r}")
        if self.groups_per_norm < 1 or self.base_width % self.groups_per_norm:
            raise ArgumentError(
                f"base_width {self.base_width} not divisible by groups_per_norm {self.groups_per_norm}")
        rates = self.dilation_rates
        if not rates or min(rates) < 1 or len(set(rates)) != len(rates):
            raise ArgumentError(f"dilation rates must be distinct and >= 1, got {rates}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ArgumentError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.m_d < 2 or self.m_s < 2:
            raise ArgumentError("m_d and m_s must be >= 2")
        if self.depth_channels not in (0, 1):
            raise ArgumentError("depth_channels must be 0 (ordinal) or 1 (regression)")

    @property
    def depth_out(self) -> int:
        return self.depth_channels or self.m_d

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def _layer_specs(cfg: ModelConfig):
    """(name, in_ch, out_ch, kernel, dilation, normed) for every conv."""
    w = cfg.base_width
    specs = [
        ("enc1", cfg.input_channels, w, 3, 1, True),
        ("enc2", w, 2 * w, 3, 1, True),
        ("enc3", 2 * w, 2 * w, 3, 1, True),
    ]
    specs += [(f"ctx{r}", 2 * w, w, 3, r, True) for r in cfg.dilation_rates]
    specs.append(("proj", w * len(cfg.dilation_rates), 2 * w, 1, 1, True))
    for head, out in (("depth", cfg.depth_out), ("sem", cfg.m_s)):
        specs.append((f"{head}.hidden", 4 * w, w, 3, 1, True))
        specs.append((f"{head}.out", w, out, 1, 1, False))
    return specs


def init_parameters(cfg: ModelConfig):
    """He-uniform kernels, unit norm scale, zero shifts and biases.

    Returns ``(params, buffers)``; buffers hold batch-norm running statistics.
    """
    rng = Rng(cfg.seed).split(0x1A1)
    params, buffers = {}, {}
    for name, cin, cout, k, _, normed in _layer_specs(cfg):
        fan_in = cin * k * k
        bound = np.sqrt(6.0 / fan_in)
        params[f"{name}.kernel"] = rng.uniform((cout, cin, k, k), -bound, bound)
        if normed:
            params[f"{name}.scale"] = np.ones(cout)
            params[f"{name}.shift"] = np.zeros(cout)
            if cfg.norm_kind == "batch":
                buffers[f"{name}.running_mean"] = np.zeros(cout)
                buffers[f"{name}.running_var"] = np.ones(cout)
        else:
            params[f"{name}.bias"] = np.zeros(cout)
    return params, buffers


@dataclass
class Tape:
    """Activations recorded by one forward pass; consumed once by backward."""
    config: ModelConfig
    mode: str
    caches: dict = field(default_factory=dict)
    used: bool = False


class Network:
    """Parameters, buffers and per-slot trainable flags for one model."""

    def __init__(self, cfg: ModelConfig, params=None, buffers=None, trainable=None):
        self.config = cfg
        p0, b0 = init_parameters(cfg)
        self.params = p0 if params is None else params
        self.buffers = b0 if buffers is None else buffers
        self.trainable = {k: True for k in self.params} if trainable is None else dict(trainable)
        if set(self.params) != set(p0):
            raise ArgumentError("parameter slots do not match the configuration")

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    def clone(self) -> Network:
        return Network(self.config, {k: v.copy() for k, v in self.params.items()},
                       {k: v.copy() for k, v in self.buffers.items()}, self.trainable)

    def zero_grads(self):
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    # -------------------------------------------------------------- forward

    def _conv_block(self, name, x, mode, tape, dilation=1, norm=True):
        p = self.params
        y, c_conv = L.conv2d_forward(x, p[f"{name}.kernel"], p.get(f"{name}.bias"), dilation)
        tape.caches[f"{name}.conv"] = c_conv
        if not norm:
            return y
        if self.config.norm_kind == "group":
            y, c_norm = L.group_norm_forward(y, self.config.groups_per_norm,
                                             p[f"{name}.scale"], p[f"{name}.shift"])
        else:
            y, c_norm = L.batch_norm_forward(y, p[f"{name}.scale"], p[f"{name}.shift"],
                                             self.buffers[f"{name}.running_mean"],
                                             self.buffers[f"{name}.running_var"], mode)
        tape.caches[f"{name}.norm"] = c_norm
        y, c_relu = L.relu_forward(y)
        tape.caches[f"{name}.relu"] = c_relu
        return y

    def forward(self, images, mode: str = "eval", rng: Rng | None = None):
        """Run both heads.

        ``images`` is ``(N, C, H, W)`` (or ``(C, H, W)``) with H and W
        divisible by 4.  Returns ``(depth_logits, sem_logits, tape)`` at the
        input resolution.  ``rng`` drives dropout in train mode; without one
        a stream derived from the config seed is used.
        """
        if mode not in ("train", "eval"):
            raise ArgumentError(f"mode must be 'train' or 'eval', got {mode!r}")
        x = np.asarray(images, dtype=np.float64)
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None]
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.input_channels:
            raise ShapeError(f"expected (N, {cfg.input_channels}, H, W) images, got {x.shape}")
        n, _, h, w = x.shape
        if h % DOWNSAMPLE or w % DOWNSAMPLE:
            ph, pw = -h % DOWNSAMPLE, -w % DOWNSAMPLE
            raise ShapeError(
                f"input {h}x{w} is not divisible by {DOWNSAMPLE}; pad by {ph} rows and {pw} columns")
        if rng is None:
            rng = Rng(cfg.seed).split(0xD0)
        tape = Tape(cfg, mode)
        c = tape.caches

        e1 = self._conv_block("enc1", x, mode, tape)
        e1p, c["pool1"] = L.avg_pool2_forward(e1)
        skip = self._conv_block("enc2", e1p, mode, tape)
        e2p, c["pool2"] = L.avg_pool2_forward(skip)
        e3 = self._conv_block("enc3", e2p, mode, tape)
        branches = [self._conv_block(f"ctx{r}", e3, mode, tape, dilation=r) for r in cfg.dilation_rates]
        ctx = np.concatenate(branches, axis=1)
        proj = self._conv_block("proj", ctx, mode, tape)
        proj, c["proj.drop"] = L.dropout_forward(proj, cfg.dropout_rate, rng.split(1), mode)
        up, c["up"] = L.upsample_forward(proj, skip.shape[2:])
        fused = np.concatenate([up, skip], axis=1)

        outs = []
        for i, head in enumerate(("depth", "sem")):
            hdn = self._conv_block(f"{head}.hidden", fused, mode, tape)
            hdn, c[f"{head}.drop"] = L.dropout_forward(hdn, cfg.dropout_rate, rng.split(2 + i), mode)
            y = self._conv_block(f"{head}.out", hdn, mode, tape, norm=False)
            y, c[f"{head}.up"] = L.upsample_forward(y, (h, w))
            outs.append(y)
        depth, sem = outs
        if squeeze:
            depth, sem = depth[0], sem[0]
        tape.caches["squeeze"] = squeeze
        return depth, sem, tape

    # ------------------------------------------------------------- backward

    def _conv_block_backward(self, name, dy, tape, grads, norm=True):
        c = tape.caches
        if norm:
            dy = L.relu_backward(dy, c[f"{name}.relu"])
            if self.config.norm_kind == "group":
                dy, ds, db = L.group_norm_backward(dy, c[f"{name}.norm"])
            else:
                dy, ds, db = L.batch_norm_backward(dy, c[f"{name}.norm"])
            grads[f"{name}.scale"] += ds
            grads[f"{name}.shift"] += db
        dx, dk, dbias = L.conv2d_backward(dy, c[f"{name}.conv"])
        grads[f"{name}.kernel"] += dk
        if dbias is not None:
            grads[f"{name}.bias"] += dbias
        return dx

    def backward(self, tape: Tape, d_depth, d_sem):
        """Gradients of a scalar loss w.r.t. every parameter slot.

        ``d_depth``/``d_sem`` are the loss gradients w.r.t. the two logit
        tensors.  A head whose upstream gradient is all zero is skipped, so
        its slots stay exactly zero.  Frozen slots are returned as zeros.
        """
        if tape.used:
            raise StateError("tape already consumed by a previous backward pass")
        if tape.config != self.config:
            raise StateError("tape was recorded with a different model configuration")
        if tape.mode != "train":
            raise StateError("backward needs a tape recorded in train mode")
        tape.used = True
        cfg = self.config
        c = tape.caches
        grads = self.zero_grads()
        d_depth = np.asarray(d_depth, dtype=np.float64)
        d_sem = np.asarray(d_sem, dtype=np.float64)
        if c["squeeze"]:
            d_depth, d_sem = d_depth[None], d_sem[None]

        d_fused = None
        for head, d in (("depth", d_depth), ("sem", d_sem)):
            if not np.any(d):
                continue
            d = L.upsample_backward(d, c[f"{head}.up"])
            d = self._conv_block_backward(f"{head}.out", d, tape, grads, norm=False)
            d = L.dropout_backward(d, c[f"{head}.drop"])
            d = self._conv_block_backward(f"{head}.hidden", d, tape, grads)
            d_fused = d if d_fused is None else d_fused + d

        if d_fused is not None:
            w2 = 2 * cfg.base_width
            d_up, d_skip = d_fused[:, :w2], d_fused[:, w2:]
            d_proj = L.upsample_backward(d_up, c["up"])
            d_proj = L.dropout_backward(d_proj, c["proj.drop"])
            d_ctx = self._conv_block_backward("proj", d_proj, tape, grads)
            w = cfg.base_width
            d_e3 = None
            for k, r in enumerate(cfg.dilation_rates):
                d_b = self._conv_block_backward(f"ctx{r}", d_ctx[:, k * w:(k + 1) * w], tape, grads)
                d_e3 = d_b if d_e3 is None else d_e3 + d_b
            d_e2p = self._conv_block_backward("enc3", d_e3, tape, grads)
            d_skip = d_skip + L.avg_pool2_backward(d_e2p, c["pool2"])
            d_e1p = self._conv_block_backward("enc2", d_skip, tape, grads)
            d_e1 = L.avg_pool2_backward(d_e1p, c["pool1"])
            self._conv_block_backward("enc1", d_e1, tape, grads)

        for k, ok in self.trainable.items():
            if not ok:
                grads[k] = np.zeros_like(grads[k])
        return grads
