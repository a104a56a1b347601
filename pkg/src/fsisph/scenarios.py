"""Built-in benchmark scenarios, configuration (de)serialization, probes, and
analytic reference curves.

Every scenario is a declarative ScenarioConfig: geometry blocks per phase,
materials, discretization, probes. ``build_simulation`` turns a config into a
ready-to-step Simulation plus resolved Lagrangian probes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fluid import FluidMaterial
from .integrator import Simulation, StepControl
from .particles import (ParticleBuilder, Particles, Phase, Rect,
                        build_bonds, component_count)
from .solid import SolidMaterial, damage

__all__ = [
    "ConfigError",
    "GeometryBlock",
    "ProbeSpec",
    "BeamInitSpec",
    "ScenarioConfig",
    "ProbeSet",
    "SCENARIOS",
    "scenario_dam_break",
    "scenario_hydrostatic",
    "scenario_beam",
    "scenario_gate",
    "scenario_obstacle",
    "scenario_notched",
    "build_scenario",
    "build_simulation",
    "beam_init_velocity",
    "ritter_front",
]

GRAVITY = 9.81

PHASE_NAMES = {Phase.FLUID: "fluid", Phase.SOLID: "solid", Phase.WALL: "wall"}
PHASE_BY_NAME = {v: k for k, v in PHASE_NAMES.items()}

PROBE_KINDS = {
    "front_position": "-",
    "point_displacement": "m",
    "point_pressure": "Pa",
    "damage_fraction": "-",
    "component_count": "-",
}


class ConfigError(ValueError):
    """Configuration parse/validation failure."""


def _check_keys(d: dict, allowed, where: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")


@dataclass(frozen=True)
class GeometryBlock:
    """One lattice block of a single phase; snap tolerates non-divisible sides."""

    role: str
    phase: str
    rect: Rect
    snap: bool = False

    def to_dict(self) -> dict:
        return {"role": self.role, "phase": self.phase,
                "rect": [self.rect.x0, self.rect.y0, self.rect.width, self.rect.height],
                "snap": self.snap}

    @classmethod
    def from_dict(cls, d: dict) -> "GeometryBlock":
        _check_keys(d, ("role", "phase", "rect", "snap"), "geometry block")
        if d["phase"] not in PHASE_BY_NAME:
            raise ConfigError(f"unknown phase {d['phase']!r}")
        return cls(role=d["role"], phase=d["phase"], rect=Rect(*d["rect"]),
                   snap=bool(d.get("snap", False)))


@dataclass(frozen=True)
class ProbeSpec:
    """One output column: what to measure and where."""

    kind: str
    name: str
    point: tuple[float, float] | None = None
    phase: str | None = None
    component: str | None = None
    scale: float | None = None

    def __post_init__(self):
        if self.kind not in PROBE_KINDS:
            raise ConfigError(f"unknown probe kind {self.kind!r}")
        if self.kind in ("point_displacement", "point_pressure"):
            if self.point is None or self.phase is None:
                raise ConfigError(f"probe {self.name!r} needs point and phase")
        if self.kind == "point_displacement" and self.component not in ("x", "y"):
            raise ConfigError(f"probe {self.name!r} needs component 'x' or 'y'")

    @property
    def unit(self) -> str:
        return PROBE_KINDS[self.kind]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "name": self.name,
                "point": list(self.point) if self.point is not None else None,
                "phase": self.phase, "component": self.component, "scale": self.scale}

    @classmethod
    def from_dict(cls, d: dict) -> "ProbeSpec":
        _check_keys(d, ("kind", "name", "point", "phase", "component", "scale"),
                    f"probe {d.get('name', '?')!r}")
        point = tuple(d["point"]) if d.get("point") is not None else None
        return cls(kind=d["kind"], name=d["name"], point=point,
                   phase=d.get("phase"), component=d.get("component"),
                   scale=d.get("scale"))


@dataclass(frozen=True)
class BeamInitSpec:
    """First-mode transverse velocity profile for the oscillating beam."""

    v_f: float
    kl: float
    length: float
    c0: float
    M: float = field(init=False)
    N: float = field(init=False)
    Q: float = field(init=False)

    def __post_init__(self):
        kl = self.kl
        # clamped-free mode condition; 1.875 is the first root
        if abs(math.cos(kl) * math.cosh(kl) + 1.0) >= 1e-3:
            raise ConfigError(f"kl={kl} does not satisfy the clamped-free mode condition")
        object.__setattr__(self, "M", math.sin(kl) + math.sinh(kl))
        object.__setattr__(self, "N", math.cos(kl) + math.cosh(kl))
        object.__setattr__(self, "Q", 2.0 * (math.cos(kl) * math.sinh(kl)
                                             - math.sin(kl) * math.cosh(kl)))

    def to_dict(self) -> dict:
        return {"v_f": self.v_f, "kl": self.kl, "length": self.length, "c0": self.c0}

    @classmethod
    def from_dict(cls, d: dict) -> "BeamInitSpec":
        _check_keys(d, ("v_f", "kl", "length", "c0"), "beam_init")
        return cls(v_f=d["v_f"], kl=d["kl"], length=d["length"], c0=d["c0"])


def beam_init_velocity(x, spec: BeamInitSpec):
    """Transverse starting velocity at axial coordinate x (zero at the clamp)."""
    k = spec.kl / spec.length
    kx = k * np.asarray(x, dtype=np.float64)
    num = spec.M * (np.cos(kx) - np.cosh(kx)) - spec.N * (np.sin(kx) - np.sinh(kx))
    out = spec.c0 * spec.v_f * num / spec.Q
    return float(out) if out.ndim == 0 else out


def ritter_front(tau):
    """Closed-form shallow-water dam-break front: x/H = 1 + 2 tau."""
    return 1.0 + 2.0 * np.asarray(tau, dtype=np.float64)


_FLUID_KEYS = ("rho0", "c0", "mu_f", "gamma_eos", "delta", "beta1", "beta2")
_SOLID_KEYS = ("rho0", "E", "nu", "gamma_ap", "eps_f", "fracture_enabled",
               "beta1", "beta2")


def _fluid_to_dict(m: FluidMaterial) -> dict:
    return {k: getattr(m, k) for k in _FLUID_KEYS}


def _fluid_from_dict(d: dict) -> FluidMaterial:
    _check_keys(d, _FLUID_KEYS, "fluid material")
    return FluidMaterial(**d)


def _solid_to_dict(m: SolidMaterial) -> dict:
    return {k: getattr(m, k) for k in _SOLID_KEYS}


def _solid_from_dict(d: dict) -> SolidMaterial:
    _check_keys(d, _SOLID_KEYS, "solid material")
    return SolidMaterial(**d)


@dataclass(frozen=True)
class ScenarioConfig:
    """Full run description; the CLI serializes this to/from JSON losslessly."""

    name: str
    dp: float
    end_time: float
    output_every: float
    h_over_dp: float = 1.5
    gravity: tuple[float, float] = (0.0, 0.0)
    cfl: float = 0.25
    fluid: FluidMaterial | None = None
    solid: SolidMaterial | None = None
    contact_c: float | None = None
    blocks: tuple[GeometryBlock, ...] = ()
    pinned: tuple[Rect, ...] = ()
    notches: tuple[Rect, ...] = ()
    probes: tuple[ProbeSpec, ...] = ()
    beam_init: BeamInitSpec | None = None
    time_scale: float | None = None   # plot abscissa normalization (tau = t / time_scale)
    front_ref: str | None = None      # analytic overlay for front probes

    _KEYS = ("name", "dp", "end_time", "output_every", "h_over_dp", "gravity",
             "cfl", "fluid", "solid", "contact_c", "blocks", "pinned",
             "notches", "probes", "beam_init", "time_scale", "front_ref")

    def validate(self) -> None:
        if self.dp <= 0.0:
            raise ConfigError("dp must be positive")
        if self.end_time < 0.0:
            raise ConfigError("end_time must be non-negative")
        if self.output_every <= 0.0:
            raise ConfigError("output_every must be positive")
        if not self.blocks:
            raise ConfigError("scenario has no geometry blocks")
        for blk in self.blocks:
            if blk.rect.width <= 0.0 or blk.rect.height <= 0.0:
                raise ConfigError(f"block {blk.role!r} has a non-positive dimension")
            if blk.phase == "fluid" and self.fluid is None:
                raise ConfigError("fluid blocks present but no fluid material")
            if blk.phase == "solid" and self.solid is None:
                raise ConfigError("solid blocks present but no solid material")
            if blk.phase == "wall" and self.fluid is None:
                raise ConfigError("wall blocks need the fluid material")

    def to_dict(self) -> dict:
        return {
            "name": self.name, "dp": self.dp, "end_time": self.end_time,
            "output_every": self.output_every, "h_over_dp": self.h_over_dp,
            "gravity": list(self.gravity), "cfl": self.cfl,
            "fluid": _fluid_to_dict(self.fluid) if self.fluid else None,
            "solid": _solid_to_dict(self.solid) if self.solid else None,
            "contact_c": self.contact_c,
            "blocks": [b.to_dict() for b in self.blocks],
            "pinned": [[r.x0, r.y0, r.width, r.height] for r in self.pinned],
            "notches": [[r.x0, r.y0, r.width, r.height] for r in self.notches],
            "probes": [p.to_dict() for p in self.probes],
            "beam_init": self.beam_init.to_dict() if self.beam_init else None,
            "time_scale": self.time_scale,
            "front_ref": self.front_ref,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        _check_keys(d, cls._KEYS, "scenario config")
        for key in ("name", "dp", "end_time", "output_every"):
            if key not in d:
                raise ConfigError(f"missing required key {key!r}")
        return cls(
            name=d["name"], dp=d["dp"], end_time=d["end_time"],
            output_every=d["output_every"],
            h_over_dp=d.get("h_over_dp", 1.5),
            gravity=tuple(d.get("gravity", (0.0, 0.0))),
            cfl=d.get("cfl", 0.25),
            fluid=_fluid_from_dict(d["fluid"]) if d.get("fluid") else None,
            solid=_solid_from_dict(d["solid"]) if d.get("solid") else None,
            contact_c=d.get("contact_c"),
            blocks=tuple(GeometryBlock.from_dict(b) for b in d.get("blocks", ())),
            pinned=tuple(Rect(*r) for r in d.get("pinned", ())),
            notches=tuple(Rect(*r) for r in d.get("notches", ())),
            probes=tuple(ProbeSpec.from_dict(p) for p in d.get("probes", ())),
            beam_init=BeamInitSpec.from_dict(d["beam_init"]) if d.get("beam_init") else None,
            time_scale=d.get("time_scale"),
            front_ref=d.get("front_ref"),
        )


# ---------------------------------------------------------------------------
# Probes
# ---------------------------------------------------------------------------

class ProbeSet:
    """Probe specs resolved to concrete particles at t=0 (Lagrangian tracking)."""

    def __init__(self, specs: tuple[ProbeSpec, ...], idx: list[int],
                 x0: np.ndarray):
        self.specs = specs
        self.idx = idx
        self.x0 = x0

    @classmethod
    def resolve(cls, specs, pts: Particles) -> "ProbeSet":
        idx: list[int] = []
        for s in specs:
            if s.kind in ("point_displacement", "point_pressure"):
                ph = int(PHASE_BY_NAME[s.phase])
                cand = np.nonzero(pts.phase == ph)[0]
                if cand.size == 0:
                    raise ConfigError(
                        f"probe {s.name!r}: no particles of phase {s.phase!r}")
                d = pts.x[cand] - np.asarray(s.point)
                idx.append(int(cand[np.argmin(np.sum(d * d, axis=1))]))
            else:
                idx.append(-1)
        return cls(tuple(specs), idx, pts.x.copy())

    def columns(self) -> list[str]:
        return [f"{s.name} [{s.unit}]" for s in self.specs]

    def sample(self, sim: Simulation) -> list[float]:
        pts = sim.pts
        bonds = sim.bonds
        out: list[float] = []
        for s, i in zip(self.specs, self.idx):
            if s.kind == "front_position":
                fluid = pts.phase == int(Phase.FLUID)
                val = float(pts.x[fluid, 0].max()) / (s.scale or 1.0)
            elif s.kind == "point_displacement":
                c = 0 if s.component == "x" else 1
                val = float(pts.x[i, c] - self.x0[i, c])
            elif s.kind == "point_pressure":
                val = float(pts.p[i])
            elif s.kind == "damage_fraction":
                val = bonds.broken_count() / bonds.n_bonds if bonds.n_bonds else 0.0
            else:  # component_count
                val = float(component_count(bonds, pts))
            out.append(val)
        return out


# ---------------------------------------------------------------------------
# Scenario builders
# ---------------------------------------------------------------------------

def _wall_blocks(interior: Rect, dp: float, layers: int = 3,
                 sides=("floor", "left", "right")) -> list[GeometryBlock]:
    t = layers * dp
    rects = {
        "floor": Rect(interior.x0 - t, interior.y0 - t, interior.width + 2 * t, t),
        "left": Rect(interior.x0 - t, interior.y0, t, interior.height),
        "right": Rect(interior.x1, interior.y0, t, interior.height),
    }
    return [GeometryBlock(role=f"wall_{s}", phase="wall", rect=rects[s], snap=True)
            for s in sides]


def scenario_dam_break(dp: float = 0.00057) -> ScenarioConfig:
    """Water column collapsing along a dry bed inside a rigid tank."""
    H = 0.057
    tank = Rect(0.0, 0.0, 4.0 * H, 3.0 * H)
    # snap: the selectable coarse spacings (0.0014, 0.0029) do not divide H
    water = GeometryBlock(role="water", phase="fluid", rect=Rect(0.0, 0.0, H, H),
                          snap=True)
    time_scale = math.sqrt(H / GRAVITY)
    return ScenarioConfig(
        name="dam_break", dp=dp, end_time=2.0 * time_scale, output_every=0.01,
        gravity=(0.0, -GRAVITY),
        fluid=FluidMaterial(rho0=1000.0, c0=15.0, mu_f=0.05),
        blocks=tuple([water] + _wall_blocks(tank, dp)),
        probes=(ProbeSpec(kind="front_position", name="front_x_over_H", scale=H),),
        time_scale=time_scale,
        front_ref="ritter",
    )


def scenario_hydrostatic(dp: float = 0.005) -> ScenarioConfig:
    """Still water tank relaxing to the hydrostatic pressure profile."""
    H = 0.1
    tank = Rect(0.0, 0.0, 0.1, 0.15)
    water = GeometryBlock(role="water", phase="fluid", rect=Rect(0.0, 0.0, 0.1, H))
    mid = H / 2.0
    return ScenarioConfig(
        name="hydrostatic", dp=dp, end_time=1.0, output_every=0.2,
        gravity=(0.0, -GRAVITY),
        fluid=FluidMaterial(rho0=1000.0, c0=10.0, mu_f=0.05),
        blocks=tuple([water] + _wall_blocks(tank, dp)),
        probes=(
            ProbeSpec(kind="point_pressure", name="p_mid", point=(0.05, mid),
                      phase="fluid"),
            ProbeSpec(kind="point_pressure", name="p_fluid_at_wall",
                      point=(0.0, mid), phase="fluid"),
            ProbeSpec(kind="point_pressure", name="p_wall_mid",
                      point=(-dp, mid), phase="wall"),
        ),
    )


def scenario_beam(dp: float = 0.05) -> ScenarioConfig:
    """Clamped-free elastic beam started in its first transverse mode."""
    L, d = 10.0, 1.0
    solid = SolidMaterial(rho0=7850.0, E=211.0e9, nu=0.3, gamma_ap=0.3,
                          fracture_enabled=False)
    clamp_w = 3.0 * dp
    beam = GeometryBlock(role="beam", phase="solid", rect=Rect(0.0, -d / 2, L, d))
    clamp = GeometryBlock(role="clamp", phase="solid",
                          rect=Rect(-clamp_w, -d / 2, clamp_w, d), snap=True)
    return ScenarioConfig(
        name="beam", dp=dp, end_time=0.5, output_every=0.005,
        gravity=(0.0, 0.0),
        solid=solid,
        blocks=(beam, clamp),
        pinned=(Rect(-clamp_w, -d / 2, clamp_w, d),),
        probes=(
            ProbeSpec(kind="point_displacement", name="tip_uy", point=(L, 0.0),
                      phase="solid", component="y"),
            ProbeSpec(kind="point_displacement", name="tip_ux", point=(L, 0.0),
                      phase="solid", component="x"),
        ),
        beam_init=BeamInitSpec(v_f=0.05, kl=1.875, length=L, c0=solid.c0),
    )


def scenario_gate(dp: float = 0.0008) -> ScenarioConfig:
    """Water column released through a deformable rubber gate clamped from above."""
    W, H = 0.1, 0.14
    gate_len, gate_th = 0.079, 0.005
    tank_h = 0.2
    outflow_end = 0.6
    t = 3 * dp
    clamp_depth = 0.01
    blocks = [
        GeometryBlock(role="water", phase="fluid", rect=Rect(0.0, 0.0, W, H)),
        GeometryBlock(role="gate", phase="solid",
                      rect=Rect(W, 0.0, gate_th, gate_len), snap=True),
        GeometryBlock(role="wall_floor", phase="wall",
                      rect=Rect(-t, -t, outflow_end + 2 * t, t), snap=True),
        GeometryBlock(role="wall_left", phase="wall",
                      rect=Rect(-t, 0.0, t, tank_h), snap=True),
        GeometryBlock(role="wall_above_gate", phase="wall",
                      rect=Rect(W, gate_len, t, tank_h - gate_len), snap=True),
        GeometryBlock(role="wall_right", phase="wall",
                      rect=Rect(outflow_end, 0.0, t, tank_h), snap=True),
    ]
    return ScenarioConfig(
        name="gate", dp=dp, end_time=0.4, output_every=0.01,
        gravity=(0.0, -GRAVITY),
        fluid=FluidMaterial(rho0=1000.0, c0=25.0, mu_f=0.05),
        solid=SolidMaterial(rho0=1100.0, E=12.0e6, nu=0.45, gamma_ap=0.3,
                            fracture_enabled=False),
        blocks=tuple(blocks),
        pinned=(Rect(W, gate_len - clamp_depth, gate_th, clamp_depth + dp),),
        probes=(
            ProbeSpec(kind="point_displacement", name="gate_ux",
                      point=(W + gate_th / 2, 0.0), phase="solid", component="x"),
            ProbeSpec(kind="point_displacement", name="gate_uy",
                      point=(W + gate_th / 2, 0.0), phase="solid", component="y"),
        ),
    )


def scenario_obstacle(dp: float = 0.0025) -> ScenarioConfig:
    """Dam break impacting a flexible plate fixed at its base."""
    W, H = 0.146, 0.292
    span = 4.0 * W
    a, b = 0.012, 0.08  # plate thickness, height
    plate_x = 2.0 * W
    tank = Rect(0.0, 0.0, span, 3.0 * H)
    blocks = [
        GeometryBlock(role="water", phase="fluid", rect=Rect(0.0, 0.0, W, H),
                      snap=True),  # 0.146/0.0025 = 58.4 columns
        GeometryBlock(role="obstacle", phase="solid",
                      rect=Rect(plate_x, 0.0, a, b), snap=True),
    ] + _wall_blocks(tank, dp)
    return ScenarioConfig(
        name="obstacle", dp=dp, end_time=1.0, output_every=0.02,
        gravity=(0.0, -GRAVITY),
        fluid=FluidMaterial(rho0=1000.0, c0=34.0, mu_f=0.05),
        solid=SolidMaterial(rho0=2500.0, E=1.0e6, nu=0.0, gamma_ap=0.3,
                            fracture_enabled=False),
        blocks=tuple(blocks),
        pinned=(Rect(plate_x, 0.0, a, 0.999 * dp),),
        probes=(
            ProbeSpec(kind="point_displacement", name="obs_ux",
                      point=(plate_x, b), phase="solid", component="x"),
        ),
        time_scale=math.sqrt(H / GRAVITY),
    )


def scenario_notched(dp: float = 0.0025, fracture: bool = True) -> ScenarioConfig:
    """Dam break onto a brittle obstacle with an initial notch; crack and detach."""
    W, H = 0.15, 0.3
    span = 4.0 * W
    b, d = 0.09, 0.03        # obstacle height, thickness
    notch_len, notch_y = 0.008, 0.025
    obs_x = 2.0 * W
    tank = Rect(0.0, 0.0, span, 2.0 * H)
    blocks = [
        GeometryBlock(role="water", phase="fluid", rect=Rect(0.0, 0.0, W, H)),
        GeometryBlock(role="obstacle", phase="solid",
                      rect=Rect(obs_x, 0.0, d, b), snap=True),
    ] + _wall_blocks(tank, dp)
    return ScenarioConfig(
        name="notched", dp=dp, end_time=0.35, output_every=0.01,
        gravity=(0.0, -GRAVITY),
        fluid=FluidMaterial(rho0=1000.0, c0=35.0, mu_f=0.05),
        solid=SolidMaterial(rho0=2500.0, E=1.0e6, nu=0.0, gamma_ap=0.3,
                            eps_f=0.05, fracture_enabled=fracture),
        blocks=tuple(blocks),
        pinned=(Rect(obs_x, 0.0, d, 0.999 * dp),),
        notches=(Rect(obs_x, notch_y, notch_len, dp),),
        probes=(
            ProbeSpec(kind="damage_fraction", name="damage"),
            ProbeSpec(kind="component_count", name="components"),
        ),
        time_scale=math.sqrt(H / GRAVITY),
    )


SCENARIOS = {
    "dam_break": scenario_dam_break,
    "hydrostatic": scenario_hydrostatic,
    "beam": scenario_beam,
    "gate": scenario_gate,
    "obstacle": scenario_obstacle,
    "notched": scenario_notched,
}


def build_scenario(name: str, dp: float | None = None) -> ScenarioConfig:
    if name not in SCENARIOS:
        raise ConfigError(
            f"unknown scenario {name!r}; available: {', '.join(sorted(SCENARIOS))}")
    return SCENARIOS[name]() if dp is None else SCENARIOS[name](dp=dp)


def build_simulation(config: ScenarioConfig) -> tuple[Simulation, ProbeSet]:
    """Construct particles, bonds, and probes for a config."""
    config.validate()
    dp = config.dp
    h = config.h_over_dp * dp
    pb = ParticleBuilder(dp, h)
    for blk in config.blocks:
        ph = PHASE_BY_NAME[blk.phase]
        if ph == Phase.SOLID:
            rho0, c0 = config.solid.rho0, config.solid.c0
        else:
            rho0, c0 = config.fluid.rho0, config.fluid.c0
        pb.add_block(blk.rect, ph, rho0, c0, snap=blk.snap)
    for rect in config.notches:
        pb.remove(rect)
    for rect in config.pinned:
        pb.pin(rect)
    pts = pb.build()
    bonds = build_bonds(pts, dp)

    if config.beam_init is not None:
        free = (pts.phase == int(Phase.SOLID)) & ~pts.pinned
        pts.v[free, 1] = beam_init_velocity(pts.x[free, 0], config.beam_init)

    control = StepControl(cfl=config.cfl, end_time=config.end_time)
    sim = Simulation(pts, bonds, dp, fluid_mat=config.fluid,
                     solid_mat=config.solid, gravity=config.gravity,
                     control=control, contact_c=config.contact_c)
    probes = ProbeSet.resolve(config.probes, pts)
    return sim, probes


def solid_damage_field(sim: Simulation) -> np.ndarray:
    """Per-particle damage for snapshots (zero for fluid/wall)."""
    return damage(sim.bonds, sim.pts.n)
