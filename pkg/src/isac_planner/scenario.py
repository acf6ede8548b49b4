"""Mission scenario definition, validation, and (de)serialization.

A scenario fixes everything that is not a decision variable: the fleet and
BS layout, the array geometry, power and energy budgets, the sensing grid,
and the mission-level MI requirement.  All angles are stored in radians and
all powers in watts; scenario files may use degrees and dBm with explicit
unit keys.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError


def dbm_to_watts(x):
    """Convert a power level in dBm to watts: 10^((x - 30) / 10)."""
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float)) + 30.0


def _array(x, shape=None):
    a = np.asarray(x, dtype=float)
    if shape is not None and a.shape != shape:
        raise ParseError(f"expected array of shape {shape}, got {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Scenario:
    """Immutable mission description.

    Attributes
    ----------
    num_uavs, num_bs, num_slots : int
        Fleet size K, number of BSs M, and number of time slots N.
    mission_duration : float
        Total mission time T in seconds; the slot length is T / N.
    uav_altitudes : (K,) array
        Fixed flight altitude of each UAV in meters.
    bs_positions : (M, 2) array
    uav_start, uav_end : (K, 2) arrays
        Required initial and final horizontal positions.
    v_max, d_min : float
        Speed limit in m/s and minimum pairwise 3D separation in meters.
    array_nx, array_ny : int
        UPA size; every BS carries the same array.
    element_spacing : (2,) array
        Antenna spacings (d_x, d_y) in meters.
    wavelength, ref_gain : float
        Carrier wavelength in meters and channel gain at 1 m.
    noise_uav, noise_bs : float
        Receiver noise powers in watts (communication / sensing side).
    p_comm_max, p_sense_max : float
        Per-BS communication power budget and sensing power budget in
        watts.  The per-slot sensing energy budget is p_sense_max * tau,
        so the energy constraint reads delta[n] * sum(eta_s) <= p_sense_max.
    mi_threshold : float
        Minimum cumulative radar MI for the mission, in bits.
    zenith_count, zenith_range : sensing grid in zenith (radians).
    azimuth_count, azimuth_range : sensing grid in azimuth (radians, the
        upper edge is exclusive).
    delta_bounds : (2,) array
        Closed box for the per-slot sensing time fraction, inside (0, 1).
    """

    num_uavs: int
    num_bs: int
    num_slots: int
    mission_duration: float
    uav_altitudes: np.ndarray
    bs_positions: np.ndarray
    uav_start: np.ndarray
    uav_end: np.ndarray
    v_max: float
    d_min: float
    array_nx: int
    array_ny: int
    element_spacing: np.ndarray
    wavelength: float
    ref_gain: float
    noise_uav: float
    noise_bs: float
    p_comm_max: float
    p_sense_max: float
    mi_threshold: float
    zenith_count: int
    zenith_range: np.ndarray
    azimuth_count: int
    azimuth_range: np.ndarray
    delta_bounds: np.ndarray = field(default_factory=lambda: _array([0.05, 0.95]))
    beam_mode: str = "quantized"

    @property
    def slot_length(self):
        return self.mission_duration / self.num_slots

    @property
    def n_elements(self):
        return self.array_nx * self.array_ny

    @property
    def sense_energy_max(self):
        """Per-slot sensing energy budget in joules."""
        return self.p_sense_max * self.slot_length

    def with_updates(self, **kw) -> "Scenario":
        """Return a copy with the given fields replaced (arrays are frozen)."""
        for key in ("uav_altitudes", "bs_positions", "uav_start", "uav_end",
                    "element_spacing", "zenith_range", "azimuth_range",
                    "delta_bounds"):
            if key in kw:
                kw[key] = _array(kw[key])
        return replace(self, **kw)


@dataclass(frozen=True)
class PositionSetting:
    """A named start/end layout for the fleet."""

    label: str
    uav_start: np.ndarray
    uav_end: np.ndarray

    def applied_to(self, scenario: "Scenario") -> "Scenario":
        if self.uav_start.shape[0] != scenario.num_uavs:
            raise ValidationError(
                f"{self.label}: holds {self.uav_start.shape[0]} UAVs, "
                f"scenario has {scenario.num_uavs}")
        return scenario.with_updates(uav_start=self.uav_start,
                                     uav_end=self.uav_end)


def position_settings() -> dict:
    """The two bundled fleet layouts, keyed by label."""
    out = {}
    for name in ("setting1", "setting2"):
        s = load_bundled(name)
        out[name] = PositionSetting(label=name, uav_start=s.uav_start,
                                    uav_end=s.uav_end)
    return out


def validate_scenario(s: Scenario) -> list[str]:
    """Check every scenario invariant; return one message per violation.

    An empty list means the scenario is valid.
    """
    bad = []
    for name in ("num_uavs", "num_bs", "num_slots", "zenith_count", "azimuth_count"):
        if int(getattr(s, name)) < 1:
            bad.append(f"{name}: must be >= 1")
    if not s.mission_duration > 0:
        bad.append("mission_duration: must be > 0")
    for name in ("v_max", "d_min", "ref_gain", "noise_uav", "noise_bs",
                 "p_comm_max", "p_sense_max", "wavelength"):
        if not getattr(s, name) > 0:
            bad.append(f"{name}: must be > 0")
    if s.mi_threshold < 0:
        bad.append("mi_threshold: must be >= 0")
    if s.array_nx < 1 or s.array_ny < 1:
        bad.append("array_nx/array_ny: must be >= 1")
    if np.any(np.asarray(s.element_spacing) <= 0):
        bad.append("element_spacing: must be > 0")

    dlo, dhi = s.delta_bounds
    if not (0.0 < dlo < dhi < 1.0):
        bad.append("delta_bounds: need 0 < delta_min < delta_max < 1")

    K, M = s.num_uavs, s.num_bs
    if s.uav_altitudes.shape != (K,):
        bad.append("uav_altitudes: length must equal num_uavs")
    if s.bs_positions.shape != (M, 2):
        bad.append("bs_positions: shape must be (num_bs, 2)")
    if s.uav_start.shape != (K, 2) or s.uav_end.shape != (K, 2):
        bad.append("uav_start/uav_end: shape must be (num_uavs, 2)")
    if np.any(np.asarray(s.uav_altitudes) <= 0):
        bad.append("uav_altitudes: must be > 0")
    if s.beam_mode not in ("exact", "quantized"):
        bad.append("beam_mode: must be 'exact' or 'quantized'")

    zlo, zhi = s.zenith_range
    if not (0.0 <= zlo < zhi <= math.pi / 2):
        bad.append("zenith_range: need 0 <= lo < hi <= pi/2")
    alo, ahi = s.azimuth_range
    if not (alo < ahi <= alo + 2 * math.pi + 1e-12):
        bad.append("azimuth_range: need lo < hi <= lo + 2*pi")

    if bad:
        return bad  # shape errors make the checks below meaningless

    # Endpoint reachability: N - 1 moves of at most v_max * tau each.
    reach = (s.num_slots - 1) * s.v_max * s.slot_length
    for k in range(K):
        hop = float(np.linalg.norm(s.uav_end[k] - s.uav_start[k]))
        if hop > reach + 1e-9:
            bad.append(
                f"uav_start/uav_end[{k}]: endpoint distance {hop:.3f} m exceeds "
                f"reachable {reach:.3f} m")

    # Pairwise separation at both endpoints, altitude gap included.
    for tag, pos in (("uav_start", s.uav_start), ("uav_end", s.uav_end)):
        for i in range(K):
            for j in range(i + 1, K):
                sep2 = float(np.sum((pos[j] - pos[i]) ** 2)
                             + (s.uav_altitudes[j] - s.uav_altitudes[i]) ** 2)
                if sep2 < s.d_min ** 2 - 1e-9:
                    bad.append(
                        f"{tag}: UAVs {i} and {j} separated by "
                        f"{math.sqrt(sep2):.3f} m < d_min {s.d_min} m")
    return bad


def _angles_rad(obj, key):
    """Read an angle-range entry that carries an explicit unit key."""
    if "range_rad" in obj:
        return _array(obj["range_rad"], (2,))
    if "range_deg" in obj:
        return _array(np.deg2rad(obj["range_deg"]), (2,))
    raise ParseError(f"{key}: needs 'range_deg' or 'range_rad'")


def scenario_from_dict(raw: dict) -> Scenario:
    """Build and validate a Scenario from the documented JSON layout."""
    try:
        K = int(raw["num_uavs"])
        M = int(raw["num_bs"])
        if "noise_watts" in raw:
            noise_uav = float(raw["noise_watts"]["uav"])
            noise_bs = float(raw["noise_watts"]["bs"])
        elif "noise_dbm" in raw:
            noise_uav = float(dbm_to_watts(raw["noise_dbm"]["uav"]))
            noise_bs = float(dbm_to_watts(raw["noise_dbm"]["bs"]))
        else:
            raise ParseError("missing 'noise_watts' or 'noise_dbm'")
        zen = raw["zenith_grid"]
        azi = raw["azimuth_grid"]
        s = Scenario(
            num_uavs=K,
            num_bs=M,
            num_slots=int(raw["num_slots"]),
            mission_duration=float(raw["mission_duration"]),
            uav_altitudes=_array(raw["uav_altitudes"], (K,)),
            bs_positions=_array(raw["bs_positions"], (M, 2)),
            uav_start=_array(raw["uav_start"], (K, 2)),
            uav_end=_array(raw["uav_end"], (K, 2)),
            v_max=float(raw["v_max"]),
            d_min=float(raw["d_min"]),
            array_nx=int(raw["array_nx"]),
            array_ny=int(raw["array_ny"]),
            element_spacing=_array(raw["element_spacing"], (2,)),
            wavelength=float(raw["wavelength"]),
            ref_gain=float(raw["ref_gain"]),
            noise_uav=noise_uav,
            noise_bs=noise_bs,
            p_comm_max=float(raw["p_comm_max"]),
            p_sense_max=float(raw["p_sense_max"]),
            mi_threshold=float(raw["mi_threshold"]),
            zenith_count=int(zen["count"]),
            zenith_range=_angles_rad(zen, "zenith_grid"),
            azimuth_count=int(azi["count"]),
            azimuth_range=_angles_rad(azi, "azimuth_grid"),
            delta_bounds=_array(raw.get("delta_bounds", [0.05, 0.95]), (2,)),
            beam_mode=str(raw.get("beam_mode", "quantized")),
        )
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad scenario field: {exc}") from exc

    problems = validate_scenario(s)
    if problems:
        raise ValidationError("; ".join(problems))
    return s


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "num_uavs": s.num_uavs,
        "num_bs": s.num_bs,
        "num_slots": s.num_slots,
        "mission_duration": s.mission_duration,
        "uav_altitudes": s.uav_altitudes.tolist(),
        "bs_positions": s.bs_positions.tolist(),
        "uav_start": s.uav_start.tolist(),
        "uav_end": s.uav_end.tolist(),
        "v_max": s.v_max,
        "d_min": s.d_min,
        "array_nx": s.array_nx,
        "array_ny": s.array_ny,
        "element_spacing": s.element_spacing.tolist(),
        "wavelength": s.wavelength,
        "ref_gain": s.ref_gain,
        "noise_watts": {"uav": s.noise_uav, "bs": s.noise_bs},
        "p_comm_max": s.p_comm_max,
        "p_sense_max": s.p_sense_max,
        "mi_threshold": s.mi_threshold,
        "zenith_grid": {"count": s.zenith_count, "range_rad": s.zenith_range.tolist()},
        "azimuth_grid": {"count": s.azimuth_count, "range_rad": s.azimuth_range.tolist()},
        "delta_bounds": s.delta_bounds.tolist(),
        "beam_mode": s.beam_mode,
    }


def load_scenario(path) -> Scenario:
    """Load, convert units, and validate a scenario file."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"scenario file {path} must hold a JSON object")
    return scenario_from_dict(raw)


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2))


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario file shipped with the package ('setting1', 'setting2')."""
    pkg_file = resources.files("isac_planner.scenarios") / f"{name}.json"
    return Path(str(pkg_file))


def load_bundled(name: str) -> Scenario:
    return load_scenario(bundled_scenario_path(name))
