"""Single experiment configuration: every tunable with its default, JSON
round-trip, validation, and the CM2_SEED environment override."""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

from .controller import ControllerConfig
from .errors import ConfigError
from .model.cm2 import ModelConfig

MODES = ("cm2", "cm2-gt")


@dataclass
class RunConfig:
    # world and sensing
    world_size: int = 64          # world grid cells (0.2 m/cell)
    ego_size: int = 48            # ego crop cells (9.6 m extent)
    num_rays: int = 64
    max_range: float = 4.8
    p_noise: float = 0.0          # semantic sensor label-noise probability

    # model
    d: int = 128
    k: int = 10
    unet_base: int = 16
    unet_depth: int = 4
    sigma: float = 1.0
    n_instr_layers: int = 2
    mode: str = "cm2"             # "cm2" or "cm2-gt" (path head on GT maps)
    use_map_attention: bool = True
    use_start_heatmap: bool = True

    # loss weights
    lambda_wp: float = 1.0
    lambda_m: float = 1.0
    lambda_xi: float = 1.0

    # training
    lr: float = 0.0002
    batch_size: int = 8
    train_steps: int = 2000
    checkpoint_every: int = 500
    seed: int = 0

    # dataset
    num_floorplans: int = 200
    heldout_floorplans: int = 50
    episodes_per_floorplan: int = 10
    samples_per_episode: int = 10

    # controller / evaluation
    tau: float = 0.5
    gamma: float = 0.6
    budget: int = 500
    success_radius: float = 1.0
    unknown_cost: float = 2.0
    eval_episodes: int = 50
    workers: int = 1

    def __post_init__(self):
        env = os.environ.get("CM2_SEED")
        if env is not None:
            try:
                self.seed = int(env)
            except ValueError as e:
                raise ConfigError(f"CM2_SEED must be an integer, got {env!r}") from e

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.ego_size % 8 != 0 or self.ego_size <= 0:
            raise ConfigError(f"ego_size must be a positive multiple of 8, got {self.ego_size}")
        if self.world_size <= 0:
            raise ConfigError(f"world_size must be positive, got {self.world_size}")
        if self.lr <= 0 or self.batch_size <= 0 or self.train_steps < 0:
            raise ConfigError("lr, batch_size must be positive; train_steps non-negative")
        if not 0.0 <= self.p_noise <= 1.0:
            raise ConfigError(f"p_noise must be in [0,1], got {self.p_noise}")
        if self.k < 2:
            raise ConfigError(f"k must be at least 2, got {self.k}")
        self.controller_config().validate()
        self.model_config().validate()
        return self

    # ------------------------------------------------------------------
    def model_config(self) -> ModelConfig:
        return ModelConfig(
            ego_size=self.ego_size, d=self.d, k=self.k,
            n_instr_layers=self.n_instr_layers, unet_base=self.unet_base,
            unet_depth=self.unet_depth, sigma=self.sigma,
            use_map_attention=self.use_map_attention,
            use_start_heatmap=self.use_start_heatmap,
        )

    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(
            tau=self.tau, gamma=self.gamma, budget=self.budget,
            success_radius=self.success_radius, unknown_cost=self.unknown_cost,
        )

    # ------------------------------------------------------------------
    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid config JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("config JSON must be an object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())
