"""The full network: map encoders, two cross-modal attention blocks, the
stacked occupancy/semantic prediction UNets, and the waypoint-path UNet.

All forward methods are stateless: outputs depend only on the inputs passed
in, so repeated calls with identical inputs are bit-identical.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import numerics as nm
from ..errors import ConfigError
from ..language.encoder import encode_instruction, init_instruction_params, pad_mask
from ..language.vocab import VOCAB_SIZE
from ..worldsim.floorplan import NUM_CLASSES
from .attention import cross_modal_attend, init_cross_modal
from .unet import UNetSpec, apply_unet, init_unet

ENCODER_DOWNSAMPLE = 8


@dataclass
class ModelConfig:
    ego_size: int = 48
    d: int = 128
    k: int = 10
    num_classes: int = NUM_CLASSES
    vocab_size: int = VOCAB_SIZE
    n_instr_layers: int = 2
    unet_base: int = 16
    unet_depth: int = 4
    sigma: float = 1.0
    use_map_attention: bool = True
    use_start_heatmap: bool = True

    @property
    def heatmap_size(self) -> int:
        return self.ego_size // 2

    @property
    def token_grid(self) -> int:
        return self.ego_size // ENCODER_DOWNSAMPLE

    @property
    def n_tokens(self) -> int:
        return self.token_grid**2

    def validate(self):
        if self.ego_size % ENCODER_DOWNSAMPLE != 0:
            raise ConfigError(f"ego_size {self.ego_size} must be divisible by {ENCODER_DOWNSAMPLE}")
        if self.d < 8 or self.k < 2:
            raise ConfigError(f"invalid model dims d={self.d} k={self.k}")


def _encoder_channels(d: int) -> list[int]:
    return [max(d // 4, 8), max(d // 2, 8), d]


def init_map_encoder(rng, in_ch: int, d: int, prefix: str) -> dict:
    p = {}
    cin = in_ch
    for i, ch in enumerate(_encoder_channels(d)):
        fan_in, fan_out = cin * 9, ch * 9
        p[f"{prefix}c{i}.w"] = nm.glorot_uniform(rng, (ch, cin, 3, 3), fan_in, fan_out)
        p[f"{prefix}c{i}.b"] = nm.zeros_param((ch,))
        cin = ch
    return p


def apply_map_encoder(x: nm.Tensor, params: dict, d: int, prefix: str) -> nm.Tensor:
    """(B,C,h,w) -> (B,d,h/8,w/8) via 3 strided conv blocks."""
    h = x
    for i in range(3):
        h = nm.leaky_relu(nm.conv2d(h, params[f"{prefix}c{i}.w"],
                                    params[f"{prefix}c{i}.b"], padding=1))
        h = nm.avg_pool2d(h, 2)
    return h


class CM2Model:
    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None,
                 params: dict[str, nm.Tensor] | None = None):
        config.validate()
        self.config = config
        c = config
        self.unet_o_spec = UNetSpec(in_ch=3, out_ch=3, base=c.unet_base,
                                    depth=c.unet_depth, spatial=c.ego_size,
                                    bneck_extra=c.d)
        self.unet_s_spec = UNetSpec(in_ch=3 + c.num_classes, out_ch=c.num_classes,
                                    base=c.unet_base, depth=c.unet_depth,
                                    spatial=c.ego_size, bneck_extra=c.d)
        self.unet_f_spec = UNetSpec(in_ch=c.d + 1, out_ch=c.k, base=c.unet_base,
                                    depth=c.unet_depth, spatial=c.heatmap_size)
        if params is not None:
            self.params = params
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            self.params = self._init_params(rng)

    def _init_params(self, rng) -> dict[str, nm.Tensor]:
        c = self.config
        p = {}
        p.update(init_instruction_params(rng, c.d, c.vocab_size, c.n_instr_layers))
        p.update(init_map_encoder(rng, 3, c.d, "enc_o."))
        p.update(init_map_encoder(rng, c.num_classes, c.d, "enc_s."))
        p.update(init_cross_modal(rng, c.d, "attn_o."))
        p.update(init_cross_modal(rng, c.d, "attn_s."))
        p.update(init_unet(rng, self.unet_o_spec, "g_o."))
        p.update(init_unet(rng, self.unet_s_spec, "g_s."))
        # waypoint-heatmap targets are sparse (a few Gaussian bumps on a
        # mostly-zero grid): start the sigmoid head near the base rate
        p.update(init_unet(rng, self.unet_f_spec, "f.", head_bias=-3.5))
        ch_f = self.unet_f_spec.channels[-1]
        p["xi.w"] = nm.glorot_uniform(rng, (ch_f, c.k), ch_f, c.k)
        p["xi.b"] = nm.zeros_param((c.k,))
        # learned constant token grid used by the no-map-attention ablation
        p["const_h_o"] = nm.Tensor(rng.normal(0.0, 0.02, size=(c.n_tokens, c.d)),
                                   requires_grad=True)
        return p

    # ------------------------------------------------------------------
    def encode_instruction(self, tokens) -> tuple[nm.Tensor, np.ndarray]:
        x = encode_instruction(tokens, self.params, self.config.d,
                               self.config.n_instr_layers)
        return x, pad_mask(tokens)

    def _attend_tokens(self, enc: nm.Tensor, instr, attn_prefix: str,
                       use_attention: bool = True):
        """Per-sample cross-modal attention over encoded map tokens.

        ``enc`` is (B,d,hs,ws); ``instr`` a list of (X, mask). Returns the
        attended grid (B,d,hs,ws) and the per-sample attention matrices.
        """
        c = self.config
        bsz, d, hs, ws = enc.shape
        hs_list, attn_list = [], []
        for b in range(bsz):
            y = nm.transpose(nm.reshape(nm.take(enc, b, axis=0), (d, hs * ws)))
            if use_attention:
                x, mask = instr[b]
                h, attn = cross_modal_attend(y, x, self.params, attn_prefix,
                                             x_pad_mask=mask)
            else:
                h, attn = self.params["const_h_o"], np.zeros((hs * ws, 1))
            hs_list.append(nm.reshape(nm.transpose(h), (d, hs, ws)))
            attn_list.append(attn)
        return nm.stack(hs_list, axis=0), attn_list

    @staticmethod
    def _fit_bneck(h_grid: nm.Tensor, size: int) -> nm.Tensor:
        """Resize the attended token grid to the UNet bottleneck resolution."""
        g = h_grid.shape[-1]
        if g == size:
            return h_grid
        if g > size and g % size == 0:
            return nm.avg_pool2d(h_grid, g // size)
        return nm.bilinear_resize(h_grid, size, size)

    # ------------------------------------------------------------------
    def predict_maps(self, occ_in, sem_obs_in, instr):
        """Occupancy completion and semantic hallucination.

        occ_in: (B,3,h,w) ego occupancy crop; sem_obs_in: (B,c,h,w)
        ground-projected semantic observation; instr: list of B
        (X, pad_mask) pairs. Returns (occ_probs, sem_probs, h_grid,
        attention list).
        """
        c = self.config
        occ_in = occ_in if isinstance(occ_in, nm.Tensor) else nm.Tensor(occ_in)
        sem_obs_in = sem_obs_in if isinstance(sem_obs_in, nm.Tensor) else nm.Tensor(sem_obs_in)
        if occ_in.shape[-1] != c.ego_size or sem_obs_in.shape[-3] != c.num_classes:
            raise ConfigError(
                f"predict_maps: got occupancy {occ_in.shape}, semantics "
                f"{sem_obs_in.shape} for ego_size {c.ego_size}, c {c.num_classes}"
            )
        enc = apply_map_encoder(occ_in, self.params, c.d, "enc_o.")
        h_grid, attns = self._attend_tokens(enc, instr, "attn_o.",
                                            use_attention=c.use_map_attention)
        h_bneck = self._fit_bneck(h_grid, self.unet_o_spec.bneck_size)
        occ_logits, _ = apply_unet(occ_in, self.params, self.unet_o_spec, "g_o.",
                                   bneck_features=h_bneck)
        occ_probs = nm.softmax(occ_logits, axis=-3)
        sem_logits, _ = apply_unet(nm.concat([occ_probs, sem_obs_in], axis=-3),
                                   self.params, self.unet_s_spec, "g_s.",
                                   bneck_features=h_bneck)
        sem_probs = nm.softmax(sem_logits, axis=-3)
        return occ_probs, sem_probs, h_grid, attns

    def predict_path(self, sem_in, instr, start_heatmap):
        """Waypoint heatmaps and traversal probabilities.

        sem_in: (B,c,h,w) semantic map (predicted or ground truth); instr:
        list of B (X, pad_mask); start_heatmap: (B,1,u,v). Returns
        (heatmaps, traversed, h_grid, attention list).
        """
        c = self.config
        sem_in = sem_in if isinstance(sem_in, nm.Tensor) else nm.Tensor(sem_in)
        if sem_in.shape[-3] != c.num_classes or sem_in.shape[-1] != c.ego_size:
            raise ConfigError(f"predict_path: bad semantic input {sem_in.shape}")
        u = c.heatmap_size
        enc = apply_map_encoder(sem_in, self.params, c.d, "enc_s.")
        h_grid, attns = self._attend_tokens(enc, instr, "attn_s.")
        h_up = nm.bilinear_resize(h_grid, u, u)
        p0 = start_heatmap if isinstance(start_heatmap, nm.Tensor) else nm.Tensor(start_heatmap)
        if not c.use_start_heatmap:
            p0 = nm.Tensor(np.zeros(p0.shape))
        logits, bneck = apply_unet(nm.concat([h_up, p0], axis=-3),
                                   self.params, self.unet_f_spec, "f.")
        heatmaps = nm.sigmoid(logits)
        pooled = nm.tmean(bneck, axis=(-2, -1))
        traversed = nm.sigmoid(nm.linear(pooled, self.params["xi.w"], self.params["xi.b"]))
        return heatmaps, traversed, h_grid, attns

    # ------------------------------------------------------------------
    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def save(self, path):
        nm.save_checkpoint(path, self.params, config=asdict(self.config))

    @classmethod
    def load(cls, path) -> "CM2Model":
        raw, cfg = nm.load_checkpoint(path)
        config = ModelConfig(**cfg)
        params = {k: nm.Tensor(v, requires_grad=True) for k, v in raw.items()}
        model = cls(config, params=params)
        # verify stored parameter shapes against a fresh init
        ref = cls(config, rng=np.random.default_rng(0))
        for name, p in ref.params.items():
            if name not in params or params[name].shape != p.shape:
                raise ConfigError(f"checkpoint incompatible with config at '{name}'")
        return model
