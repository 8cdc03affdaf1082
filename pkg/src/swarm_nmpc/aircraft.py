"""Aircraft geometry, mass properties, and parameter file I/O.

The default parameter set models a 0.61 m wingspan, 0.120 kg aerobatic
foam EPP model with a 7-inch propeller. Mass, wingspan, and propeller
size follow the physical vehicle; surface areas, lever arms, the inertia
tensor, thrust-model constants, and backwash coefficients are estimates
chosen to give plausible closed-loop behavior, and every value can be
overridden through the YAML parameter file (see ``data/edge540_24in.yaml``).

Aerodynamic surfaces are listed in a fixed order:

    wing, h-fuselage, v-fuselage, h-tail, v-tail,
    aileron-left, aileron-right, elevator, rudder

Horizontal surfaces have their normal along body z; vertical surfaces are
mounted rotated -90 deg about body x so the surface normal is body y.
Actuated surfaces rotate about their own y axis (the hinge line) by the
deflection angle; the left aileron carries ``deflection_sign = -1`` so it
mirrors the right one.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np
import yaml

SURFACE_ORDER = (
    "wing",
    "h-fuselage",
    "v-fuselage",
    "h-tail",
    "v-tail",
    "aileron-left",
    "aileron-right",
    "elevator",
    "rudder",
)


@dataclass
class SurfaceSpec:
    """One flat-plate aerodynamic surface.

    Parameters
    ----------
    name : str
        Label; must match its slot in ``SURFACE_ORDER``.
    area : float
        Plate area [m^2].
    r_h : np.ndarray
        Body-frame displacement from the center of mass to the hinge /
        attachment point [m].
    r_s : np.ndarray
        Surface-frame displacement from the hinge point to the center of
        pressure [m].
    orientation : np.ndarray
        Rotation of the undeflected surface frame w.r.t. the body frame
        (3x3; columns are surface axes in body coordinates).
    backwash_gamma : float
        Fraction of the propeller backwash velocity seen by this surface,
        in [0, 1].
    actuated_index : int or None
        Index into the deflection block of the state for actuated
        surfaces; None for fixed surfaces.
    deflection_sign : float
        Sign applied to the deflection state (the left aileron mirrors
        the right with -1).
    """

    name: str
    area: float
    r_h: np.ndarray
    r_s: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))
    backwash_gamma: float = 0.0
    actuated_index: int | None = None
    deflection_sign: float = 1.0

    def __post_init__(self):
        self.area = float(self.area)
        self.r_h = np.asarray(self.r_h, dtype=float).reshape(3)
        self.r_s = np.asarray(self.r_s, dtype=float).reshape(3)
        self.orientation = np.asarray(self.orientation, dtype=float).reshape(3, 3)
        self.backwash_gamma = float(self.backwash_gamma)
        self.deflection_sign = float(self.deflection_sign)
        if self.area <= 0.0:
            raise ValueError(f"surface {self.name!r}: area must be positive")
        if not 0.0 <= self.backwash_gamma <= 1.0:
            raise ValueError(f"surface {self.name!r}: backwash_gamma must be in [0, 1]")


@dataclass
class AircraftParams:
    """Mass, inertia, surface set, and thrust model of one aircraft."""

    mass: float
    inertia: np.ndarray
    surfaces: list[SurfaceSpec]
    thrust_orientation: np.ndarray = field(default_factory=lambda: np.eye(3))
    a_t: float = -5.0
    b_t: float = 9.0
    disk_area: float = 0.0249
    air_density: float = 1.204
    gravity: float = 9.81
    body_radius: float = 0.305

    def __post_init__(self):
        self.mass = float(self.mass)
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        self.thrust_orientation = np.asarray(self.thrust_orientation, dtype=float).reshape(3, 3)
        if self.mass <= 0.0 or self.disk_area <= 0.0 or self.air_density <= 0.0:
            raise ValueError("mass, disk_area, and air_density must be positive")
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-12):
            raise ValueError("inertia tensor must be symmetric")
        if np.any(np.linalg.eigvalsh(self.inertia) <= 0.0):
            raise ValueError("inertia tensor must be positive definite")
        self._stacked = None
        self._inertia_inv = None

    def surface(self, name: str) -> SurfaceSpec:
        for s in self.surfaces:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def stacked(self) -> "StackedSurfaces":
        """Surface constants stacked into arrays (cached)."""
        if self._stacked is None:
            self._stacked = StackedSurfaces.from_surfaces(self.surfaces)
        return self._stacked

    @property
    def inertia_inv(self) -> np.ndarray:
        if self._inertia_inv is None:
            self._inertia_inv = np.linalg.inv(self.inertia)
        return self._inertia_inv


@dataclass
class StackedSurfaces:
    """Per-surface constants packed for vectorized force evaluation."""

    area: np.ndarray        # (S,)
    r_h: np.ndarray         # (S, 3)
    r_s: np.ndarray         # (S, 3)
    orientation: np.ndarray  # (S, 3, 3)
    gamma: np.ndarray       # (S,)
    act_index: np.ndarray   # (S,) int, -1 for fixed surfaces
    sign: np.ndarray        # (S,)

    @classmethod
    def from_surfaces(cls, surfaces: list[SurfaceSpec]) -> "StackedSurfaces":
        return cls(
            area=np.array([s.area for s in surfaces]),
            r_h=np.array([s.r_h for s in surfaces]),
            r_s=np.array([s.r_s for s in surfaces]),
            orientation=np.array([s.orientation for s in surfaces]),
            gamma=np.array([s.backwash_gamma for s in surfaces]),
            act_index=np.array(
                [-1 if s.actuated_index is None else s.actuated_index for s in surfaces],
                dtype=int,
            ),
            sign=np.array([s.deflection_sign for s in surfaces]),
        )


# Rotation mapping a vertical surface's frame into the body frame:
# x_s -> x_b, y_s -> -z_b, z_s -> y_b (rotation of -90 deg about body x).
VERTICAL_MOUNT = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, -1.0, 0.0],
])


def _surface_dict(s: SurfaceSpec) -> dict:
    return {
        "name": s.name,
        "area": s.area,
        "r_h": s.r_h.tolist(),
        "r_s": s.r_s.tolist(),
        "orientation": s.orientation.tolist(),
        "backwash_gamma": s.backwash_gamma,
        "actuated_index": s.actuated_index,
        "deflection_sign": s.deflection_sign,
    }


def save_aircraft_params(params: AircraftParams, path) -> None:
    """Write an AircraftParams YAML parameter file (SI units throughout)."""
    doc = {
        "mass": params.mass,
        "inertia": params.inertia.tolist(),
        "thrust_orientation": params.thrust_orientation.tolist(),
        "a_t": params.a_t,
        "b_t": params.b_t,
        "disk_area": params.disk_area,
        "air_density": params.air_density,
        "gravity": params.gravity,
        "body_radius": params.body_radius,
        "surfaces": [_surface_dict(s) for s in params.surfaces],
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def _params_from_dict(doc: dict) -> AircraftParams:
    surfaces = []
    raw = doc.get("surfaces")
    if not isinstance(raw, list) or len(raw) != len(SURFACE_ORDER):
        raise ValueError(
            f"parameter file must list exactly {len(SURFACE_ORDER)} surfaces "
            f"in the order {SURFACE_ORDER}"
        )
    for slot, sd in zip(SURFACE_ORDER, raw):
        if sd.get("name") != slot:
            raise ValueError(f"surface order mismatch: expected {slot!r}, got {sd.get('name')!r}")
        surfaces.append(SurfaceSpec(
            name=sd["name"],
            area=sd["area"],
            r_h=sd["r_h"],
            r_s=sd.get("r_s", (0.0, 0.0, 0.0)),
            orientation=sd.get("orientation", np.eye(3)),
            backwash_gamma=sd.get("backwash_gamma", 0.0),
            actuated_index=sd.get("actuated_index"),
            deflection_sign=sd.get("deflection_sign", 1.0),
        ))
    return AircraftParams(
        mass=doc["mass"],
        inertia=doc["inertia"],
        surfaces=surfaces,
        thrust_orientation=doc.get("thrust_orientation", np.eye(3)),
        a_t=doc.get("a_t", -5.0),
        b_t=doc.get("b_t", 9.0),
        disk_area=doc.get("disk_area", 0.0249),
        air_density=doc.get("air_density", 1.204),
        gravity=doc.get("gravity", 9.81),
        body_radius=doc.get("body_radius", 0.305),
    )


def load_aircraft_params(path=None) -> AircraftParams:
    """Load aircraft parameters from YAML; defaults to the packaged model."""
    if path is None:
        ref = importlib.resources.files("swarm_nmpc") / "data" / "edge540_24in.yaml"
        doc = yaml.safe_load(ref.read_text())
    else:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    return _params_from_dict(doc)


def default_params() -> AircraftParams:
    """Default 0.61 m span / 0.120 kg aerobatic model (see module docstring)."""
    eye = np.eye(3)
    surfaces = [
        SurfaceSpec("wing", area=0.092, r_h=(0.02, 0.0, 0.0), r_s=(0.0, 0.0, 0.0),
                    orientation=eye, backwash_gamma=0.25),
        SurfaceSpec("h-fuselage", area=0.008, r_h=(-0.08, 0.0, 0.0),
                    orientation=eye, backwash_gamma=1.0),
        SurfaceSpec("v-fuselage", area=0.016, r_h=(-0.08, 0.0, 0.0),
                    orientation=VERTICAL_MOUNT, backwash_gamma=1.0),
        SurfaceSpec("h-tail", area=0.0125, r_h=(-0.37, 0.0, 0.0),
                    orientation=eye, backwash_gamma=1.0),
        SurfaceSpec("v-tail", area=0.0098, r_h=(-0.38, 0.0, 0.035),
                    orientation=VERTICAL_MOUNT, backwash_gamma=1.0),
        SurfaceSpec("aileron-left", area=0.0119, r_h=(-0.055, -0.20, 0.0),
                    r_s=(-0.022, 0.0, 0.0), orientation=eye, backwash_gamma=0.0,
                    actuated_index=0, deflection_sign=-1.0),
        SurfaceSpec("aileron-right", area=0.0119, r_h=(-0.055, 0.20, 0.0),
                    r_s=(-0.022, 0.0, 0.0), orientation=eye, backwash_gamma=0.0,
                    actuated_index=0, deflection_sign=1.0),
        SurfaceSpec("elevator", area=0.0105, r_h=(-0.41, 0.0, 0.0),
                    r_s=(-0.025, 0.0, 0.0), orientation=eye, backwash_gamma=1.0,
                    actuated_index=1, deflection_sign=1.0),
        SurfaceSpec("rudder", area=0.0082, r_h=(-0.42, 0.0, 0.03),
                    r_s=(-0.028, 0.0, 0.0), orientation=VERTICAL_MOUNT,
                    backwash_gamma=1.0, actuated_index=2, deflection_sign=1.0),
    ]
    return AircraftParams(
        mass=0.120,
        inertia=np.diag([0.0021, 0.0032, 0.0045]),
        surfaces=surfaces,
        thrust_orientation=np.eye(3),
        a_t=-5.0,
        b_t=9.0,
        disk_area=0.0249,   # 7 in propeller
        air_density=1.204,
        gravity=9.81,
        body_radius=0.305,  # half of the 0.61 m wingspan
    )
