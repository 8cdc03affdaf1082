"""Steady forward-flight trim.

Finds the pitch angle, elevator deflection, and thrust that hold a
constant-speed straight line. At the low speeds this airframe flies, the
flat-plate wing cannot carry the full weight aerodynamically, so trim
settles at a nose-high attitude with a substantial thrust share; that is
the regime the planner and tracker operate in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .aircraft import AircraftParams
from .dynamics import dynamics
from .states import IDELTA, IDELTA_T, IOMEGA, IR, ITHETA, IV, INPUT_DIM, STATE_DIM


@dataclass
class TrimPoint:
    """Trim solution at one airspeed."""

    speed: float
    pitch: float
    elevator: float
    thrust: float
    residual: float

    def state(self, position=(0.0, 0.0, 0.0), heading: float = 0.0) -> np.ndarray:
        """Full 16-state at this trim, at the given position and heading."""
        x = np.zeros(STATE_DIM)
        x[IR] = np.asarray(position, dtype=float)
        x[ITHETA] = [0.0, self.pitch, heading]
        x[IDELTA] = [0.0, self.elevator, 0.0]
        x[IDELTA_T] = self.thrust
        c, s = np.cos(self.pitch), np.sin(self.pitch)
        x[IV] = [self.speed * c, 0.0, self.speed * s]
        x[IOMEGA] = 0.0
        return x

    def input(self, params: AircraftParams) -> np.ndarray:
        """Input holding the trim (zero surface rates, steady throttle)."""
        u = np.zeros(INPUT_DIM)
        u[3] = -params.a_t * self.thrust / params.b_t
        return u


def find_trim(params: AircraftParams, speed: float) -> TrimPoint:
    """Solve for (pitch, elevator, thrust) with zero body acceleration.

    The body-frame velocity is constrained to the forward-flight form
    (V cos(pitch), 0, V sin(pitch)); lateral balance holds by symmetry.
    """

    def residual(z):
        pitch, elev, thrust = z
        tp = TrimPoint(speed, pitch, elev, max(thrust, 0.0), 0.0)
        x = tp.state()
        xdot = dynamics(x, tp.input(params), params)
        return np.array([xdot[IV][0], xdot[IV][2], xdot[IOMEGA][1]])

    sol = least_squares(
        residual,
        x0=np.array([-0.3, 0.1, 0.5]),
        bounds=([-1.2, -0.7, 0.0], [0.3, 0.7, 5.0]),
        xtol=1e-14, ftol=1e-14, gtol=1e-14,
    )
    res = float(np.linalg.norm(sol.fun))
    if res > 1e-6:
        raise RuntimeError(f"trim search did not converge: residual {res:.2e}")
    pitch, elev, thrust = sol.x
    return TrimPoint(speed=speed, pitch=float(pitch), elevator=float(elev),
                     thrust=float(thrust), residual=res)
