"""Link geometry: distances, path gains, UPA steering vectors, gradients.

Every function broadcasts over leading axes, so the same code serves a
single link and a full (BS, UAV, slot) grid.  The BS boresight points
straight up: a UAV directly overhead has zenith angle zero, and the
direction cosines are Phi = (q_x - v_x) / D and Omega = (q_y - v_y) / D
with D the slant distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateGeometry

# Below the 1 m reference distance the free-space model is non-physical.
DEGENERATE_SLANT_SQ = 1.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array: nx-by-ny elements with spacings (dx, dy)."""

    nx: int
    ny: int
    dx: float
    dy: float
    wavelength: float

    @property
    def n_elements(self):
        return self.nx * self.ny

    @classmethod
    def from_scenario(cls, s):
        return cls(nx=s.array_nx, ny=s.array_ny,
                   dx=float(s.element_spacing[0]), dy=float(s.element_spacing[1]),
                   wavelength=s.wavelength)


@dataclass
class Trajectory:
    """Per-UAV, per-slot horizontal positions plus fixed altitudes."""

    positions: np.ndarray  # (K, N, 2) meters
    altitudes: np.ndarray  # (K,) meters

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.altitudes = np.asarray(self.altitudes, dtype=float)
        if self.positions.ndim != 3 or self.positions.shape[2] != 2:
            raise ValueError("positions must have shape (K, N, 2)")
        if self.altitudes.shape != (self.positions.shape[0],):
            raise ValueError("altitudes must have shape (K,)")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")

    @property
    def num_uavs(self):
        return self.positions.shape[0]

    @property
    def num_slots(self):
        return self.positions.shape[1]

    def copy(self):
        return Trajectory(self.positions.copy(), self.altitudes.copy())

    def speeds(self, slot_length):
        """Per-UAV speeds between consecutive slots, shape (K, N-1)."""
        steps = np.diff(self.positions, axis=1)
        return np.linalg.norm(steps, axis=2) / slot_length

    @classmethod
    def straight_line(cls, scenario):
        """Constant-velocity paths from each start to each end position."""
        N = scenario.num_slots
        t = np.linspace(0.0, 1.0, N)[None, :, None]
        pos = scenario.uav_start[:, None, :] * (1 - t) + scenario.uav_end[:, None, :] * t
        return cls(pos, np.array(scenario.uav_altitudes))


class DirectionCosines(NamedTuple):
    phi: np.ndarray      # sin(zenith) * cos(azimuth)
    omega: np.ndarray    # sin(zenith) * sin(azimuth)
    zenith: np.ndarray
    azimuth: np.ndarray


def slant_distance_sq(q, h, v):
    """Squared BS-to-UAV distance H^2 + ||q - v||^2; broadcasts."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float)
    return h ** 2 + np.sum((q - v) ** 2, axis=-1)


def _check_slant(d2):
    if np.any(d2 < DEGENERATE_SLANT_SQ):
        raise DegenerateGeometry(
            "slant distance below the 1 m reference distance")


def path_gain(q, h, v, beta0):
    """Free-space channel power gain beta0 / (H^2 + ||q - v||^2)."""
    d2 = slant_distance_sq(q, h, v)
    _check_slant(d2)
    return beta0 / d2


def direction_cosines(q, h, v):
    """Direction cosines and (zenith, azimuth) of the BS-to-UAV direction."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float)
    d2 = slant_distance_sq(q, h, v)
    _check_slant(d2)
    d = np.sqrt(d2)
    dx = q[..., 0] - v[..., 0]
    dy = q[..., 1] - v[..., 1]
    phi = dx / d
    omega = dy / d
    # arctan2 keeps full precision near the zenith, unlike arccos(h / d).
    zenith = np.arctan2(np.hypot(dx, dy), np.broadcast_to(h, d.shape))
    azimuth = np.arctan2(dy, dx)
    return DirectionCosines(phi, omega, zenith, azimuth)


def steering_vector(cosines, geom: ArrayGeometry):
    """UPA response a = a_x kron a_y for the given direction cosines.

    Entry (p, s) carries phase -2*pi*(p*dx*Phi + s*dy*Omega)/lambda, so the
    result has unit-modulus entries and squared norm nx * ny.
    """
    phi = np.asarray(cosines[0], dtype=float)
    omega = np.asarray(cosines[1], dtype=float)
    tx = np.arange(geom.nx)
    ty = np.arange(geom.ny)
    ax = np.exp(-2j * np.pi * geom.dx / geom.wavelength * phi[..., None] * tx)
    ay = np.exp(-2j * np.pi * geom.dy / geom.wavelength * omega[..., None] * ty)
    a = ax[..., :, None] * ay[..., None, :]
    return a.reshape(*phi.shape, geom.n_elements)


def steering_from_angles(zenith, azimuth, geom: ArrayGeometry):
    zenith = np.asarray(zenith, dtype=float)
    azimuth = np.asarray(azimuth, dtype=float)
    phi = np.sin(zenith) * np.cos(azimuth)
    omega = np.sin(zenith) * np.sin(azimuth)
    return steering_vector((phi, omega), geom)


def cosine_jacobian(q, h, v):
    """Partial derivatives of (Phi, Omega) w.r.t. the horizontal position.

    Returns (dphi_dx, dphi_dy, domega_dx, domega_dy) with
    dphi_dy == domega_dx; all entries scale as 1/D.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float)
    d2 = slant_distance_sq(q, h, v)
    _check_slant(d2)
    d3 = d2 ** 1.5
    dx = q[..., 0] - v[..., 0]
    dy = q[..., 1] - v[..., 1]
    dphi_dx = (dy ** 2 + h ** 2) / d3
    domega_dy = (dx ** 2 + h ** 2) / d3
    cross = -dx * dy / d3
    return dphi_dx, cross, cross, domega_dy


def steering_gradient(q, h, v, geom: ArrayGeometry):
    """Derivatives of the steering vector w.r.t. q_x and q_y.

    Uses the Kronecker structure: da/dPhi = -j*2*pi*dx/lambda * diag(t_x) a_x
    on the x factor (same form on the y factor), chained with the direction
    cosine Jacobian.  Returns (da_dx, da_dy), each shaped like the steering
    vector.
    """
    cos = direction_cosines(q, h, v)
    phi, omega = cos.phi, cos.omega
    tx = np.arange(geom.nx)
    ty = np.arange(geom.ny)
    ax = np.exp(-2j * np.pi * geom.dx / geom.wavelength * phi[..., None] * tx)
    ay = np.exp(-2j * np.pi * geom.dy / geom.wavelength * omega[..., None] * ty)
    dax = -2j * np.pi * geom.dx / geom.wavelength * tx * ax
    day = -2j * np.pi * geom.dy / geom.wavelength * ty * ay

    dphi_dx, dphi_dy, domega_dx, domega_dy = cosine_jacobian(q, h, v)

    def assemble(dphi, domega):
        part_x = dax * dphi[..., None]
        part_y = day * domega[..., None]
        full = (part_x[..., :, None] * ay[..., None, :]
                + ax[..., :, None] * part_y[..., None, :])
        return full.reshape(*phi.shape, geom.n_elements)

    return assemble(dphi_dx, domega_dx), assemble(dphi_dy, domega_dy)


def directional_gain(a, w):
    """Beam alignment gain |a^H w|^2 in [0, n_elements] for unit-norm w."""
    inner = np.sum(np.conj(a) * w, axis=-1)
    return np.abs(inner) ** 2


def gain_gradient(q, h, v, w, geom: ArrayGeometry):
    """Gradient of |a(q)^H w|^2 w.r.t. the horizontal position q.

    d g / d q_d = 2 Re{ (da/dq_d)^H w * (w^H a) }.  Returns an array with a
    trailing axis of length 2 holding (d/dx, d/dy).
    """
    cos = direction_cosines(q, h, v)
    a = steering_vector(cos, geom)
    da_dx, da_dy = steering_gradient(q, h, v, geom)
    c0 = np.sum(np.conj(a) * w, axis=-1)
    cx = np.sum(np.conj(da_dx) * w, axis=-1)
    cy = np.sum(np.conj(da_dy) * w, axis=-1)
    gx = 2.0 * np.real(cx * np.conj(c0))
    gy = 2.0 * np.real(cy * np.conj(c0))
    return np.stack([gx, gy], axis=-1)


def linearized_gain(q, anchor, h, v, w, geom: ArrayGeometry):
    """First-order model of the directional gain around an anchor position.

    g(anchor) + grad_g(anchor)^T (q - anchor); exact at q == anchor.
    """
    anchor = np.asarray(anchor, dtype=float)
    q = np.asarray(q, dtype=float)
    cos = direction_cosines(anchor, h, v)
    g0 = directional_gain(steering_vector(cos, geom), w)
    grad = gain_gradient(anchor, h, v, w, geom)
    return g0 + np.sum(grad * (q - anchor), axis=-1)
