"""One Monte-Carlo instance: calibrated channels plus the sensing scene."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import ChannelSet, SensingScene, build_scene, generate_channels
from .config import ScenarioConfig
from .sensing import UnidentifiableError, calibrate_radar_noise
from .solver import SensingInfeasibleError

CHANNEL_STREAM = 0
INIT_STREAM = 1


@dataclass
class Instance:
    cfg: ScenarioConfig
    ch: ChannelSet
    scene: SensingScene
    seed: int

    def init_rng(self):
        """Stream for the solver's random initial phases (same for every scheme)."""
        return np.random.default_rng(np.random.SeedSequence([self.seed, INIT_STREAM]))


def make_instance(cfg: ScenarioConfig, seed=None) -> Instance:
    seed = cfg.rng_seed if seed is None else int(seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, CHANNEL_STREAM]))
    ch = generate_channels(cfg, rng)
    scene = build_scene(cfg)
    try:
        sigma_r = calibrate_radar_noise(scene, ch, cfg.p_max, cfg.crb_ref_eps / cfg.crb_ref_ratio)
    except UnidentifiableError as exc:
        raise SensingInfeasibleError(f"scenario sensing-infeasible: {exc}") from exc
    return Instance(cfg, ch, scene.with_sigma(sigma_r), seed)
