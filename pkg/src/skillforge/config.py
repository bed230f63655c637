"""Tunable constants and config-file loading.

Every constant that the learning or diagnosis maths depends on lives here so
that a config file (or the service) can override it in one place.
"""

import os
from dataclasses import dataclass, field, replace

import yaml

ENV_CONFIG = "SKILLFORGE_CONFIG"


@dataclass(frozen=True)
class SensorModel:
    """Per-tick channel model: value = base(kind, attributes) + N(0, sigma_noise^2).

    The sliding/poking/pressing bases are chosen to give at least a 3 sigma
    separation between the classes a perceptual model has to tell apart.
    """

    sigma_noise: float = 0.5
    slide_orientation_base: dict = field(
        default_factory=lambda: {0: 0.0, 90: 4.0, 180: 8.0, 270: 12.0}
    )
    poke_height_step: float = 3.0
    poke_lid_open: float = 1.0
    poke_lid_closed: float = 6.0
    press_width: dict = field(
        default_factory=lambda: {"book": 3.0, "box_stack": 2.0, "lid_box": 2.0, "cube": 1.0}
    )


@dataclass(frozen=True)
class PlayConstants:
    """Projective-simulation update rule: reward lambda, damping gamma, floor h_min."""

    reward: float = 1.0
    damping: float = 0.0
    h_min: float = 1.0
    promotion_window: int = 50
    promotion_threshold: float = 0.8


@dataclass(frozen=True)
class DiagnosisConstants:
    epsilon_bg: float = 0.01       # likelihood of a failure for a function never active
    beta_low: float = 0.1          # function active during a successful run
    beta_high: float = 0.9         # function inactive during a successful run
    lambda_t: float = 5.0          # tick scale of the |t_last_active - t_fail| decay
    kappa: float = 1.0             # weight of the FPF deviation term
    rho: float = 0.9               # p(fail | tested skill covers the faulty function)
    rho_0: float = 0.05            # p(fail | fault not covered, or no fault)
    certainty: float = 0.95        # stop a diagnosis session at this posterior mass
    n_min: int = 10                # minimum successful records to train MOM/FPF
    variance_floor: float = 1e-6
    mom_quantile: float = 0.999    # chi-square quantile defining the MOM threshold tau
    smoothing_window: int = 3      # trailing window for the fail-time deviation score


@dataclass(frozen=True)
class EngineConfig:
    store_path: str = ":memory:"
    scenario_catalog: str | None = None     # None = packaged default catalog
    sensor: SensorModel = field(default_factory=SensorModel)
    play: PlayConstants = field(default_factory=PlayConstants)
    diagnosis: DiagnosisConstants = field(default_factory=DiagnosisConstants)
    port: int = 8322


def _merged(dc, overrides):
    if not overrides:
        return dc
    known = {k: v for k, v in overrides.items() if hasattr(dc, k)}
    unknown = set(overrides) - set(known)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return replace(dc, **known)


def load_config(path=None):
    """Build an EngineConfig from a YAML file.

    Resolution order: explicit path argument, then the SKILLFORGE_CONFIG
    environment variable, then built-in defaults.
    """
    path = path or os.environ.get(ENV_CONFIG)
    if path is None:
        return EngineConfig()
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    cfg = EngineConfig(
        store_path=doc.get("store_path", ":memory:"),
        scenario_catalog=doc.get("scenario_catalog"),
        port=int(doc.get("port", 8322)),
    )
    cfg = replace(cfg, sensor=_merged(cfg.sensor, doc.get("sensor")))
    cfg = replace(cfg, play=_merged(cfg.play, doc.get("playing")))
    cfg = replace(cfg, diagnosis=_merged(cfg.diagnosis, doc.get("diagnosis")))
    return cfg
