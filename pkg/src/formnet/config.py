"""Scenario files.

A scenario is an INI-style file with sections ``[mesh]``, ``[formation]``,
``[plant]``, ``[gains]`` and ``[sim]``.  Values are JSON literals (numbers,
lists, nested lists) or bare words for enumerations.  Missing keys take the
defaults of the bundled spacecraft preset; unknown sections or keys are
errors.  Units: hours and km for the spacecraft plant.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .controller import ControllerGains
from .errors import ConfigurationError
from .network import (FormationSpec, GcoTrajectory, MeshGraph, PolynomialTrajectory,
                      StaticTrajectory, build_mesh)
from .phcore import PlantModel, SpacecraftPlantParams, mechanical_plant, spacecraft_plant
from .simulator import SimConfig

__all__ = ["Scenario", "load_scenario", "parse_scenario", "dump_scenario",
           "bundled_config_path", "preset"]

_SIM_KEYS = ("dt", "t_end", "integrator", "accel_mode", "alpha", "seed", "perturbation")


@dataclass
class Scenario:
    dims: int = 2
    extents: list = field(default_factory=lambda: [3, 2])
    axis_offsets: list = field(default_factory=lambda: [[10.0, 0.0, 0.0], [0.0, 20.0, 0.0]])
    trajectory: str = "gco"
    radius: float = 5.0
    position: list = None
    coefficients: list = None
    plant: str = "spacecraft"
    n0: float = 0.5307
    mass: list = None
    damping: list = None
    stiffness: list = None
    K: list = field(default_factory=lambda: [[30.0, 0.0, 0.0], [0.0, 30.0, 0.0], [0.0, 0.0, 20.0]])
    Jbar: list = field(default_factory=lambda: [[0.0, 1.0615, 0.0], [-1.0615, 0.0, 0.0], [0.0, 0.0, 0.0]])
    Rbar: list = field(default_factory=lambda: [[34.4, 0.0, 0.0], [0.0, 42.3, 0.0], [0.0, 0.0, 10.59]])
    sim: SimConfig = field(default_factory=SimConfig)

    def build_plant(self) -> PlantModel:
        if self.plant == "spacecraft":
            return spacecraft_plant(SpacecraftPlantParams(self.n0))
        if self.plant == "generic":
            n = len(self.K)
            M = np.eye(n) if self.mass is None else self.mass
            return mechanical_plant(M, self.damping, self.stiffness)
        raise ConfigurationError(f"plant.model must be 'spacecraft' or 'generic', got {self.plant!r}")

    def build_gains(self) -> ControllerGains:
        return ControllerGains(np.array(self.K, dtype=float), np.array(self.Jbar, dtype=float),
                               np.array(self.Rbar, dtype=float))

    def build_graph(self) -> MeshGraph:
        return build_mesh(self.dims, self.extents)

    def build_formation(self) -> FormationSpec:
        if self.trajectory == "gco":
            traj = GcoTrajectory(self.radius, self.n0)
        elif self.trajectory == "static":
            if self.position is None:
                raise ConfigurationError("formation.position is required for a static trajectory")
            traj = StaticTrajectory(self.position)
        elif self.trajectory == "custom-polynomial":
            if self.coefficients is None:
                raise ConfigurationError("formation.coefficients is required for custom-polynomial")
            traj = PolynomialTrajectory(self.coefficients)
        else:
            raise ConfigurationError(
                f"formation.trajectory must be gco, static or custom-polynomial, got {self.trajectory!r}")
        return FormationSpec(self.axis_offsets, traj)

    def build(self):
        """``(graph, formation, plant, gains)`` after full validation."""
        plant = self.build_plant()
        try:
            gains = self.build_gains()
        except ConfigurationError as exc:
            raise ConfigurationError(f"[gains] {exc}") from None
        graph = self.build_graph()
        formation = self.build_formation()
        n = plant.n
        if gains.n != n:
            raise ConfigurationError(f"[gains] matrices are {gains.n}x{gains.n}, plant has n={n}")
        if formation.n != n:
            raise ConfigurationError(f"[formation] axis_offsets have length {formation.n}, plant has n={n}")
        formation.check_graph(graph)
        q, qd, qdd = formation.leader_trajectory(0.0)
        if np.shape(q) != (n,):
            raise ConfigurationError(f"[formation] trajectory has dimension {np.shape(q)}, plant has n={n}")
        return graph, formation, plant, gains

    def with_sim(self, **changes) -> "Scenario":
        return replace(self, sim=replace(self.sim, **changes))

    def to_sections(self) -> dict:
        mesh = {"dims": self.dims, "extents": list(self.extents)}
        form = {"axis_offsets": self.axis_offsets, "trajectory": self.trajectory}
        if self.trajectory == "gco":
            form["radius"] = self.radius
        if self.position is not None:
            form["position"] = self.position
        if self.coefficients is not None:
            form["coefficients"] = self.coefficients
        plant = {"model": self.plant, "n0": self.n0}
        for k in ("mass", "damping", "stiffness"):
            if getattr(self, k) is not None:
                plant[k] = getattr(self, k)
        gains = {"K": self.K, "Jbar": self.Jbar, "Rbar": self.Rbar}
        sim = {k: getattr(self.sim, k) for k in _SIM_KEYS}
        return {"mesh": mesh, "formation": form, "plant": plant, "gains": gains, "sim": sim}


_ALLOWED = {
    "mesh": {"dims", "extents"},
    "formation": {"axis_offsets", "trajectory", "radius", "position", "coefficients"},
    "plant": {"model", "n0", "mass", "damping", "stiffness"},
    "gains": {"K", "Jbar", "Rbar"},
    "sim": set(_SIM_KEYS),
}
_ENUMS = {("formation", "trajectory"), ("plant", "model"), ("sim", "integrator"),
          ("sim", "accel_mode"), ("sim", "perturbation")}


def _value(section, key, raw):
    if (section, key) in _ENUMS:
        return raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        raise ConfigurationError(f"[{section}] {key}: cannot parse value {raw!r}") from None


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source}: {exc}") from None

    kw, sim_kw = {}, {}
    for section in cp.sections():
        if section not in _ALLOWED:
            raise ConfigurationError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _ALLOWED[section]:
                raise ConfigurationError(f"{source}: unknown key '{key}' in [{section}]")
            val = _value(section, key, raw)
            if section == "sim":
                sim_kw[key] = val
            elif section == "plant":
                kw["plant" if key == "model" else key] = val
            else:
                kw[key] = val

    if "extents" in kw and "dims" not in kw and isinstance(kw["extents"], list):
        kw["dims"] = len(kw["extents"])
    if "dims" in kw and not isinstance(kw["dims"], int):
        raise ConfigurationError("[mesh] dims must be an integer")
    for k in ("dt", "t_end", "alpha"):
        if k in sim_kw and not isinstance(sim_kw[k], (int, float)):
            raise ConfigurationError(f"[sim] {k} must be a number")
    if "seed" in sim_kw and not isinstance(sim_kw["seed"], int):
        raise ConfigurationError("[sim] seed must be an integer")
    for k in ("dt", "t_end", "alpha"):
        if k in sim_kw:
            sim_kw[k] = float(sim_kw[k])
    try:
        sim = SimConfig(**sim_kw)
    except ConfigurationError as exc:
        raise ConfigurationError(f"[sim] {exc}") from None
    scenario = Scenario(sim=sim, **kw)
    scenario.build()
    return scenario


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario file {path}: {exc}") from None
    return parse_scenario(text, source=str(path))


def _fmt(v):
    if isinstance(v, str):
        return v
    return json.dumps(v)


def dump_scenario(scenario: Scenario) -> str:
    """Canonical text form; ``parse_scenario(dump_scenario(s))`` reproduces ``s``."""
    lines = []
    for section, items in scenario.to_sections().items():
        lines.append(f"[{section}]")
        for k, v in items.items():
            lines.append(f"{k} = {_fmt(v)}")
        lines.append("")
    return "\n".join(lines)


def bundled_config_path(name: str = "sff_meo.cfg") -> Path:
    return Path(resources.files("formnet") / "data" / name)


def preset() -> Scenario:
    """The spacecraft formation flying scenario shipped with the package."""
    return load_scenario(bundled_config_path())
