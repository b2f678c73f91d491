"""Compact encoder-decoder UNet with skip connections.

Blocks downsample by 2 while the spatial size stays even and above the
bottleneck size of 3; on small inputs trailing blocks run at stride 1 so the
configured depth is preserved. Extra feature channels (the attended
instruction representation) can be concatenated at the bottleneck.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import numerics as nm


@dataclass
class UNetSpec:
    in_ch: int
    out_ch: int
    base: int
    depth: int
    spatial: int
    bneck_extra: int = 0
    down_flags: list[bool] = field(default_factory=list)
    channels: list[int] = field(default_factory=list)
    bneck_size: int = 0

    def __post_init__(self):
        if not self.down_flags:
            s = self.spatial
            for _ in range(self.depth):
                if s > 3 and s % 2 == 0:
                    self.down_flags.append(True)
                    s //= 2
                else:
                    self.down_flags.append(False)
            self.bneck_size = s
        if not self.channels:
            self.channels = [self.base * min(2**i, 2) for i in range(self.depth)]


def _conv_param(rng, p, name, cin, cout, k=3):
    fan_in = cin * k * k
    fan_out = cout * k * k
    p[name + ".w"] = nm.glorot_uniform(rng, (cout, cin, k, k), fan_in, fan_out)
    p[name + ".b"] = nm.zeros_param((cout,))


def init_unet(rng: np.random.Generator, spec: UNetSpec, prefix: str,
              head_bias: float = 0.0) -> dict:
    """Initialize parameters. ``head_bias`` presets the output layer's bias;
    heads trained with squared error through a sigmoid should start at the
    target base rate (a negative bias for sparse targets), otherwise the
    dominant all-zero cells can drive every logit deep into saturation
    early in training, after which the vanishing sigmoid derivative leaves
    the head permanently stuck near zero output."""
    p = {}
    cin = spec.in_ch
    for i, (ch, down) in enumerate(zip(spec.channels, spec.down_flags)):
        _conv_param(rng, p, f"{prefix}enc{i}.c1", cin, ch)
        if down:
            _conv_param(rng, p, f"{prefix}enc{i}.c2", ch, ch)
        cin = ch
    _conv_param(rng, p, f"{prefix}bneck", cin + spec.bneck_extra, cin)
    for i in reversed(range(spec.depth)):
        ch = spec.channels[i]
        _conv_param(rng, p, f"{prefix}dec{i}.up", cin, ch)
        _conv_param(rng, p, f"{prefix}dec{i}.mix", ch + spec.channels[i], ch)
        cin = ch
    _conv_param(rng, p, f"{prefix}head", cin, spec.out_ch, k=1)
    if head_bias:
        p[f"{prefix}head.w"].data *= 0.1
        p[f"{prefix}head.b"].data += head_bias
    return p


def apply_unet(x: nm.Tensor, params: dict, spec: UNetSpec, prefix: str,
               bneck_features: nm.Tensor | None = None):
    """Forward pass; returns (logits, bottleneck activation)."""
    skips = []
    h = x
    for i, down in enumerate(spec.down_flags):
        h = nm.leaky_relu(nm.conv2d(h, params[f"{prefix}enc{i}.c1.w"],
                                    params[f"{prefix}enc{i}.c1.b"], padding=1))
        skips.append(h)
        if down:
            h = nm.leaky_relu(nm.conv2d(h, params[f"{prefix}enc{i}.c2.w"],
                                        params[f"{prefix}enc{i}.c2.b"], padding=1))
            h = nm.avg_pool2d(h, 2)
    if bneck_features is not None:
        h = nm.concat([h, bneck_features], axis=-3)
    h = nm.leaky_relu(nm.conv2d(h, params[f"{prefix}bneck.w"],
                                params[f"{prefix}bneck.b"], padding=1))
    bottleneck = h
    for i in reversed(range(spec.depth)):
        if spec.down_flags[i]:
            h = nm.leaky_relu(nm.conv_transpose2d(h, params[f"{prefix}dec{i}.up.w"],
                                                  params[f"{prefix}dec{i}.up.b"]))
        else:
            h = nm.leaky_relu(nm.conv2d(h, params[f"{prefix}dec{i}.up.w"],
                                        params[f"{prefix}dec{i}.up.b"], padding=1))
        h = nm.concat([h, skips[i]], axis=-3)
        h = nm.leaky_relu(nm.conv2d(h, params[f"{prefix}dec{i}.mix.w"],
                                    params[f"{prefix}dec{i}.mix.b"], padding=1))
    logits = nm.conv2d(h, params[f"{prefix}head.w"], params[f"{prefix}head.b"])
    return logits, bottleneck
