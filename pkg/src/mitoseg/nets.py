"""Forward-only reference of the anisotropic residual U-Net topologies.

Small, deterministic, NumPy-only: meant for shape/range/structure checks
and fixture generation, not training.  Tensors are (N, C, D, H, W) float32.

Topology: a 1x5x5 embedding conv; per encoder level one anisotropic
convolution block (ACB), with 1x3x3 stride-(1,2,2) convs downsampling
between levels (lateral only — depth is never touched); decoders mirror the
encoder with trilinear (1,2,2) upsampling, a 1x1x1 channel projection, an
additive skip from the encoder level, and an ACB.  ``decoders=1`` emits
semantic mask and instance boundary from one shared path (2-channel head);
``decoders=2`` gives each output its own decoder path.

The ACB is: y0 = elu(conv_1x3x3(x)); out = elu(y0 + conv_3x3x3(elu(conv_3x3x3(y0)))),
i.e. the second 3x3x3 conv is pre-activation and the skip wraps the pair.

Conventions this module pins down (the block diagram alone does not):
ELU follows the embedding, downsampling, and projection convs; skip fusion
is addition; weights initialize uniformly in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
from a seeded generator; heads are sigmoids computed in f64 and clamped to
[1e-7, 1 - 1e-7] so outputs are strictly inside (0, 1).

Parameter count closed form, summed over every conv layer:
    params(layer) = c_out * (c_in * kd * kh * kw + 1)
(the +1 is the bias).  ``param_count`` evaluates this from the config alone.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import InvalidArgumentError
from .volume import Volume, load_volume, save_volume

HEAD_CLAMP = 1e-7


@dataclass(frozen=True)
class ConvSpec:
    """Kernel/stride of one conv layer; padding is always same-size."""

    kernel: Tuple[int, int, int]
    stride: Tuple[int, int, int] = (1, 1, 1)

    def __post_init__(self) -> None:
        if any(k % 2 == 0 or k < 1 for k in self.kernel):
            raise InvalidArgumentError(f"kernels must be odd, got {self.kernel}")

    @property
    def padding(self) -> Tuple[int, int, int]:
        return tuple((k - 1) // 2 for k in self.kernel)  # type: ignore[return-value]


@dataclass(frozen=True)
class NetConfig:
    levels: int = 4
    channels: Tuple[int, ...] = (16, 32, 64, 128)
    decoders: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.channels) != self.levels:
            raise InvalidArgumentError(
                f"channels length {len(self.channels)} must equal levels {self.levels}"
            )
        if self.decoders not in (1, 2):
            raise InvalidArgumentError(f"decoders must be 1 or 2, got {self.decoders}")
        if self.levels < 1:
            raise InvalidArgumentError("levels must be >= 1")


def conv3d(x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray] = None,
           stride: Tuple[int, int, int] = (1, 1, 1)) -> np.ndarray:
    """3D cross-correlation with zero same-padding; strides subsample the output."""
    n, c, d, h, w = x.shape
    c_out, c_in, kd, kh, kw = weight.shape
    if c_in != c:
        raise InvalidArgumentError(f"weight expects {c_in} input channels, tensor has {c}")
    pd, ph, pw = (kd - 1) // 2, (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pd, pd), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kd, kh, kw), axis=(2, 3, 4))
    sd, sh, sw = stride
    win = win[:, :, ::sd, ::sh, ::sw]
    out = np.einsum("ncdhwijk,ocijk->nodhw", win, weight, optimize=True)
    if bias is not None:
        out = out + bias[None, :, None, None, None]
    return np.ascontiguousarray(out, dtype=np.float32)


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(x)).astype(np.float32)


def acb_forward(x: np.ndarray, params: Dict[str, np.ndarray], prefix: str = "") -> np.ndarray:
    y0 = elu(conv3d(x, params[prefix + "pre.w"], params[prefix + "pre.b"]))
    mid = elu(conv3d(y0, params[prefix + "c1.w"], params[prefix + "c1.b"]))
    res = conv3d(mid, params[prefix + "c2.w"], params[prefix + "c2.b"])
    return elu(y0 + res)


def trilinear_upsample(x: np.ndarray, scale: Tuple[int, int, int] = (1, 2, 2)) -> np.ndarray:
    """Linear interpolation per axis, align-corners=false, edge-clamped."""
    out = x
    for axis, s in zip((2, 3, 4), scale):
        if s == 1:
            continue
        out = _lerp_axis(out, axis, s)
    return out


def _lerp_axis(x: np.ndarray, axis: int, s: int) -> np.ndarray:
    n = x.shape[axis]
    src = (np.arange(n * s, dtype=np.float64) + 0.5) / s - 0.5
    src = np.clip(src, 0.0, n - 1)
    i0 = np.floor(src).astype(np.int64)
    t = (src - i0).astype(np.float32)
    i1 = np.minimum(i0 + 1, n - 1)
    a = np.take(x, i0, axis=axis)
    b = np.take(x, i1, axis=axis)
    shape = [1] * x.ndim
    shape[axis] = t.size
    t = t.reshape(shape)
    # a + t*(b-a): constant inputs stay bit-exactly constant
    return (a + t * (b - a)).astype(np.float32)


def layer_specs(cfg: NetConfig, in_channels: int = 1) -> List[Tuple[str, ConvSpec, int, int]]:
    """Fixed enumeration of every conv layer: (name, spec, c_in, c_out)."""
    ch = cfg.channels

    def acb(name, cin, w):
        return [
            (f"{name}.pre", ConvSpec((1, 3, 3)), cin, w),
            (f"{name}.c1", ConvSpec((3, 3, 3)), w, w),
            (f"{name}.c2", ConvSpec((3, 3, 3)), w, w),
        ]

    layers = [("embed", ConvSpec((1, 5, 5)), in_channels, ch[0])]
    for i in range(cfg.levels):
        layers += acb(f"enc{i}", ch[i], ch[i])
        if i < cfg.levels - 1:
            layers.append((f"down{i}", ConvSpec((1, 3, 3), stride=(1, 2, 2)), ch[i], ch[i + 1]))
    head_ch = 2 if cfg.decoders == 1 else 1
    for dec in range(cfg.decoders):
        for i in range(cfg.levels - 2, -1, -1):
            layers.append((f"dec{dec}.{i}.proj", ConvSpec((1, 1, 1)), ch[i + 1], ch[i]))
            layers += acb(f"dec{dec}.{i}", ch[i], ch[i])
        layers.append((f"head{dec}", ConvSpec((1, 1, 1)), ch[0], head_ch))
    return layers


def param_count(cfg: NetConfig, in_channels: int = 1) -> int:
    """Closed-form parameter total: sum of c_out * (c_in * kd*kh*kw + 1)."""
    total = 0
    for _, spec, cin, cout in layer_specs(cfg, in_channels):
        kd, kh, kw = spec.kernel
        total += cout * (cin * kd * kh * kw + 1)
    return total


def init_params(cfg: NetConfig, in_channels: int = 1) -> Dict[str, np.ndarray]:
    """Seeded uniform init in [-b, b], b = 1/sqrt(fan_in), fixed layer order."""
    rng = np.random.default_rng(cfg.seed)
    params: Dict[str, np.ndarray] = {}
    for name, spec, cin, cout in layer_specs(cfg, in_channels):
        kd, kh, kw = spec.kernel
        b = 1.0 / np.sqrt(cin * kd * kh * kw)
        params[name + ".w"] = rng.uniform(-b, b, (cout, cin, kd, kh, kw)).astype(np.float32)
        params[name + ".b"] = rng.uniform(-b, b, cout).astype(np.float32)
    return params


def resunet_forward(x: np.ndarray, cfg: NetConfig,
                    params: Dict[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Forward pass; returns (semantic mask, instance boundary), both (N,1,D,H,W)."""
    if x.ndim != 5:
        raise InvalidArgumentError(f"input must be (N, C, D, H, W), got shape {x.shape}")
    _, _, _, h, w = x.shape
    factor = 2 ** (cfg.levels - 1)
    if h % factor or w % factor:
        raise InvalidArgumentError(
            f"lateral dims ({h}, {w}) must be divisible by {factor} for {cfg.levels} levels"
        )
    x = np.asarray(x, dtype=np.float32)

    specs = {name: spec for name, spec, _, _ in layer_specs(cfg, x.shape[1])}
    t = elu(conv3d(x, params["embed.w"], params["embed.b"]))
    enc = []
    for i in range(cfg.levels):
        t = acb_forward(t, params, prefix=f"enc{i}.")
        enc.append(t)
        if i < cfg.levels - 1:
            t = elu(conv3d(t, params[f"down{i}.w"], params[f"down{i}.b"],
                           stride=specs[f"down{i}"].stride))

    heads = []
    for dec in range(cfg.decoders):
        u = enc[-1]
        for i in range(cfg.levels - 2, -1, -1):
            u = trilinear_upsample(u, (1, 2, 2))
            u = elu(conv3d(u, params[f"dec{dec}.{i}.proj.w"], params[f"dec{dec}.{i}.proj.b"]))
            u = u + enc[i]
            u = acb_forward(u, params, prefix=f"dec{dec}.{i}.")
        logits = conv3d(u, params[f"head{dec}.w"], params[f"head{dec}.b"])
        heads.append(_sigmoid_head(logits))

    if cfg.decoders == 1:
        return heads[0][:, 0:1], heads[0][:, 1:2]
    return heads[0], heads[1]


def _sigmoid_head(logits: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-logits.astype(np.float64)))
    return np.clip(s, HEAD_CLAMP, 1.0 - HEAD_CLAMP).astype(np.float32)


def save_params(params: Dict[str, np.ndarray], cfg: NetConfig, dir_path,
                in_channels: int = 1) -> None:
    """Write each tensor as an EMV1 f32 file plus a manifest with layer specs."""
    os.makedirs(dir_path, exist_ok=True)
    manifest = {
        "config": {
            "levels": cfg.levels,
            "channels": list(cfg.channels),
            "decoders": cfg.decoders,
            "seed": cfg.seed,
            "in_channels": in_channels,
        },
        "tensors": [],
    }
    for name, spec, _, _ in layer_specs(cfg, in_channels):
        for suffix in (".w", ".b"):
            arr = params[name + suffix]
            fname = (name + suffix).replace("/", "_") + ".emv"
            save_volume(Volume(_pack3d(arr)), os.path.join(dir_path, fname))
            manifest["tensors"].append({
                "name": name + suffix,
                "file": fname,
                "shape": list(arr.shape),
                "kernel": list(spec.kernel),
                "stride": list(spec.stride),
            })
    with open(os.path.join(dir_path, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)


def load_params(dir_path) -> Tuple[Dict[str, np.ndarray], NetConfig, int]:
    with open(os.path.join(dir_path, "manifest.json")) as f:
        manifest = json.load(f)
    c = manifest["config"]
    cfg = NetConfig(levels=c["levels"], channels=tuple(c["channels"]),
                    decoders=c["decoders"], seed=c["seed"])
    params = {}
    for entry in manifest["tensors"]:
        v = load_volume(os.path.join(dir_path, entry["file"]))
        params[entry["name"]] = v.data.reshape(entry["shape"]).copy()
    return params, cfg, c["in_channels"]


def _pack3d(arr: np.ndarray) -> np.ndarray:
    """Reshape an arbitrary tensor into 3D for EMV1 (exact element order kept)."""
    if arr.ndim == 1:
        return np.ascontiguousarray(arr.reshape(1, 1, -1), dtype=np.float32)
    lead = int(np.prod(arr.shape[:-2]))
    return np.ascontiguousarray(arr.reshape(lead, arr.shape[-2], arr.shape[-1]),
                                dtype=np.float32)
