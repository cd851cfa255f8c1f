"""Scenario configuration: INI parsing, defaults, and geometry assembly.

The geometry is the incomplete Mach-Zehnder of the figures: a beam splitter on
the x-axis hit from the upper left, horizontal mirrors closing the two arms,
the crossing region I on the axis, and half-plane detectors D1 (up) / D2
(down) past the crossing. All numeric defaults are artifact choices (the
physics fixes none); they are echoed into the run manifest.
"""

from __future__ import annotations

import configparser
import enum
import hashlib
import math
from dataclasses import dataclass, fields as dc_fields
from typing import Optional

from .errors import ConfigError, GeometryError
from .optics import (
    ConvexRegion,
    DetectorId,
    DetectorRegion,
    FieldTimeline,
    InterferometerGeometry,
    OpticalEvent,
    Plane2D,
    build_timeline,
    evolve_field,
)
from .wavefield import GaussianPacket, PhysicalConstants, WaveField, WWLabel


class ScenarioKind(enum.Enum):
    SIMPLE = "simple"
    WW = "ww"


@dataclass
class ScenarioConfig:
    scenario: ScenarioKind
    seed: int
    n: int = 200
    workers: int = 1
    oracle: bool = True
    out: Optional[str] = None
    # geometry (lengths in units of sigma0 = 1 by default)
    sigma0: float = 1.0
    wavevector: float = 10.0
    incidence_deg: float = 45.0
    inlet_length: float = 5.0
    arm_length: float = 20.0
    outlet_length: float = 25.0
    tag_fraction: float = 0.35
    unbalance_r: float = 1.0
    region_half_width: float = 5.0
    # tolerances
    tol_step: float = 1e-8
    node_rel: float = 1e-10
    h_min: float = 1e-12
    # constants
    hbar: float = 1.0
    mass: float = 1.0

    def validate(self):
        bad = []
        for name in ("n", "workers"):
            if getattr(self, name) < 0 or (name == "workers" and self.workers < 1):
                bad.append(f"{name} must be positive (got {getattr(self, name)})")
        for name in (
            "sigma0", "wavevector", "inlet_length", "arm_length", "outlet_length",
            "region_half_width", "tol_step", "node_rel", "h_min", "hbar", "mass",
            "unbalance_r",
        ):
            if not getattr(self, name) > 0.0:
                bad.append(f"{name} must be positive (got {getattr(self, name)})")
        if not 0.0 < self.tag_fraction < 1.0:
            bad.append(f"tag_fraction must be in (0, 1) (got {self.tag_fraction})")
        if not 0.0 < self.incidence_deg < 90.0:
            bad.append(f"incidence_deg must be in (0, 90) (got {self.incidence_deg})")
        if bad:
            raise ConfigError("invalid configuration: " + "; ".join(bad))


_SCHEMA = {
    "run": {
        "scenario": ("scenario", lambda s: ScenarioKind(s.strip().lower())),
        "seed": ("seed", int),
        "n": ("n", int),
        "workers": ("workers", int),
        "oracle": ("oracle", lambda s: {"true": True, "false": False}[s.strip().lower()]),
        "out": ("out", str),
    },
    "geometry": {
        k: (k, float)
        for k in (
            "sigma0", "wavevector", "incidence_deg", "inlet_length", "arm_length",
            "outlet_length", "tag_fraction", "unbalance_r", "region_half_width",
        )
    },
    "tolerances": {k: (k, float) for k in ("tol_step", "node_rel", "h_min")},
    "constants": {k: (k, float) for k in ("hbar", "mass")},
}


def parse_config(path, overrides: Optional[dict] = None) -> tuple[ScenarioConfig, dict]:
    """Parse and validate an INI scenario file.

    Unknown sections or keys are errors (strict mode). Returns the config plus
    the dict of defaults that were applied (for the run manifest).
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except configparser.Error as e:
        raise ConfigError(f"parse error in {path}: {e}") from e

    values: dict = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key '{key}' in section [{section}]")
            attr, conv = _SCHEMA[section][key]
            try:
                values[attr] = conv(raw)
            except (ValueError, KeyError) as e:
                raise ConfigError(
                    f"{path}: bad value for [{section}] {key} = {raw!r}"
                ) from e
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    if "scenario" not in values:
        raise ConfigError(f"{path}: [run] scenario is required")
    if "seed" not in values:
        raise ConfigError(f"{path}: [run] seed is required (no entropy-source default)")

    cfg = ScenarioConfig(**values)
    cfg.validate()
    explicit = set(values)
    defaults = {
        f.name: getattr(cfg, f.name)
        for f in dc_fields(ScenarioConfig)
        if f.name not in explicit
    }
    return cfg, defaults


# execution knobs: not physics, excluded from fingerprints and manifests so
# that worker counts and output paths cannot change exported bytes
EXECUTION_FIELDS = frozenset({"workers", "out", "oracle"})


def config_fingerprint(cfg: ScenarioConfig) -> str:
    lines = []
    for f in dc_fields(ScenarioConfig):
        if f.name in EXECUTION_FIELDS:
            continue
        v = getattr(cfg, f.name)
        if isinstance(v, enum.Enum):
            v = v.value
        lines.append(f"{f.name}={v!r}")
    return hashlib.sha256("\n".join(sorted(lines)).encode()).hexdigest()


@dataclass
class Scenario:
    """Resolved run: geometry, event list and the evolved field timeline."""

    config: ScenarioConfig
    constants: PhysicalConstants
    geometry: InterferometerGeometry
    events: tuple[OpticalEvent, ...]
    timeline: FieldTimeline

    @property
    def tol_step(self) -> float:
        return self.config.tol_step

    @property
    def node_rel(self) -> float:
        return self.config.node_rel

    @property
    def h_min(self) -> float:
        return self.config.h_min

    @property
    def t_split(self) -> float:
        from .optics import EventKind

        return next(e.time for e in self.events if e.kind is EventKind.BEAM_SPLIT)

    @property
    def t_cross(self) -> float:
        """Arrival time of the balanced arms at the crossing point."""
        v = self.config.hbar * self.config.wavevector / self.config.mass
        return self.t_split + 2.0 * self.config.arm_length / v

    @property
    def speed(self) -> float:
        return self.config.hbar * self.config.wavevector / self.config.mass


def build_geometry(cfg: ScenarioConfig) -> InterferometerGeometry:
    th = math.radians(cfg.incidence_deg)
    cos_t, sin_t = math.cos(th), math.sin(th)
    k0 = cfg.wavevector
    v = cfg.hbar * k0 / cfg.mass

    source = GaussianPacket(
        center0=(-cfg.inlet_length * cos_t, cfg.inlet_length * sin_t),
        wavevector=(k0 * cos_t, -k0 * sin_t),
        sigma0=cfg.sigma0,
        birth_time=0.0,
        amplitude=1.0 + 0.0j,
    )
    bs = Plane2D((0.0, 0.0), (0.0, 1.0))

    arm_r = cfg.arm_length * cfg.unbalance_r
    arm_t = cfg.arm_length
    mirror_y = arm_r * sin_t
    mirror_r = Plane2D((arm_r * cos_t, mirror_y), (0.0, 1.0))
    mirror_t = Plane2D((arm_t * cos_t, -(arm_t * sin_t)), (0.0, 1.0))

    tag_planes = None
    if cfg.scenario is ScenarioKind.WW:
        d_tag = cfg.tag_fraction * cfg.arm_length
        cr = Plane2D((d_tag * cos_t, d_tag * sin_t), (cos_t, sin_t))
        ct = Plane2D((d_tag * cos_t, -(d_tag * sin_t)), (cos_t, -sin_t))
        tag_planes = (cr, ct)
        # disjoint-support rule: branch separation at tag time must exceed 6 sigma
        t_tag = (cfg.inlet_length + d_tag) / v
        sep = 2.0 * d_tag * sin_t
        theta = cfg.hbar * t_tag / (2.0 * cfg.mass * cfg.sigma0**2)
        sigma_tag = cfg.sigma0 * math.sqrt(1.0 + theta * theta)
        if sep < 6.0 * sigma_tag:
            raise GeometryError(
                f"branches only {sep / sigma_tag:.2f} sigma apart at the tag time; "
                "increase tag_fraction or wavevector"
            )

    cross_x = 2.0 * arm_t * cos_t
    region = ConvexRegion.box(cross_x, 0.0, cfg.region_half_width)
    d1 = DetectorRegion(DetectorId.D1, Plane2D((cross_x, 0.0), (0.0, 1.0)))
    d2 = DetectorRegion(DetectorId.D2, Plane2D((cross_x, 0.0), (0.0, -1.0)))

    t_final = (cfg.inlet_length + arm_r + arm_t + cfg.outlet_length) / v
    return InterferometerGeometry(
        source=source,
        beam_splitter=bs,
        mirrors=(mirror_r, mirror_t),
        ww_tag_planes=tag_planes,
        detectors=(d1, d2),
        region_I=region,
        final_time=t_final,
    )


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    cfg.validate()
    constants = PhysicalConstants(hbar=cfg.hbar, mass=cfg.mass)
    geom = build_geometry(cfg)
    events = build_timeline(geom, constants)
    field0 = WaveField(((WWLabel.NONE, geom.source),), constants)
    timeline = evolve_field(field0, events, geom.final_time)
    return Scenario(cfg, constants, geom, tuple(events), timeline)
