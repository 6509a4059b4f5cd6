"""Domain types shared by every stage of the toolkit.

Kinematic arrays are held as read-only numpy arrays so a constructed value can
be shared between threads without copying.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import NamedTuple, Optional

import numpy as np

OBS_LEN = 15
PRED_LEN = 25
TARGET_RATE_HZ = 5.0
MAX_SCORED_NEIGHBORS = 8
MIN_SCORED_FUTURE = 15
SPLITS = ("train", "val", "test")


class AgentClass(IntEnum):
    CAR = 0
    TRUCK = 1
    BUS = 2
    MOTORCYCLE = 3
    BICYCLE = 4
    PEDESTRIAN = 5
    TRICYCLE = 6
    VRU_OTHER = 7

    @property
    def label(self) -> str:
        return self.name.lower()


class DataError(ValueError):
    """Raised for malformed input data (exit code 1 at the command line)."""


class ScenarioError(DataError):
    def __init__(self, scenario_id: str, field_name: str, message: str):
        self.scenario_id = scenario_id
        self.field = field_name
        super().__init__(f"scenario {scenario_id!r}, field {field_name!r}: {message}")


def wrap_angle(theta):
    """Wrap an angle (scalar or array) into the half-open interval (-pi, pi]."""
    arr = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot wrap a non-finite angle")
    out = np.mod(arr + math.pi, 2.0 * math.pi) - math.pi
    out = np.where(out <= -math.pi, out + 2.0 * math.pi, out)
    if out.ndim == 0:
        return float(out)
    return out


def agent_sort_key(agent_id: str) -> tuple:
    """Natural ordering for agent ids such as ``"12"``, ``"12#1"`` or ``"P3"``."""
    parts = re.split(r"(\d+)", str(agent_id))
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts if p != "")


class TrackPoint(NamedTuple):
    frame: int
    x: float
    y: float
    vx: float
    vy: float
    psi: float
    ax: Optional[float] = None
    ay: Optional[float] = None
    lane_id: Optional[int] = None


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


_KINEMATIC = ("x", "y", "vx", "vy", "psi")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One agent's contiguous track.

    ``frame`` counts samples at ``rate_hz``; consecutive entries differ by
    exactly one. ``group`` carries the travel direction for datasets that split
    the scene by direction, and ``provenance`` records processing fallbacks.
    """

    agent_id: str
    agent_class: AgentClass
    frame: np.ndarray
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    psi: np.ndarray
    ax: Optional[np.ndarray] = None
    ay: Optional[np.ndarray] = None
    lane_id: Optional[np.ndarray] = None
    rate_hz: float = 25.0
    heading_derived: bool = False
    group: Optional[int] = None
    provenance: tuple = ()

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "agent_id", str(self.agent_id))
        set_(self, "agent_class", AgentClass(int(self.agent_class)))
        set_(self, "frame", _frozen(self.frame, np.int64))
        n = len(self.frame)
        if n < 1:
            raise DataError(f"trajectory {self.agent_id}: empty")
        if n > 1 and np.any(np.diff(self.frame) != 1):
            raise DataError(f"trajectory {self.agent_id}: frames must increase with unit stride")
        for name in _KINEMATIC + ("ax", "ay"):
            val = getattr(self, name)
            if val is None:
                continue
            arr = _frozen(val, np.float64)
            if arr.shape != (n,):
                raise DataError(f"trajectory {self.agent_id}: {name} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"trajectory {self.agent_id}: non-finite {name}")
            set_(self, name, arr)
        if np.any(self.psi <= -math.pi) or np.any(self.psi > math.pi):
            raise DataError(f"trajectory {self.agent_id}: psi not wrapped to (-pi, pi]")
        if self.lane_id is not None:
            lane = _frozen(self.lane_id, np.int64)
            if lane.shape != (n,):
                raise DataError(f"trajectory {self.agent_id}: lane_id length mismatch")
            set_(self, "lane_id", lane)
        if not self.rate_hz > 0:
            raise DataError(f"trajectory {self.agent_id}: rate_hz must be positive")
        set_(self, "provenance", tuple(self.provenance))

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def first_frame(self) -> int:
        return int(self.frame[0])

    @property
    def last_frame(self) -> int:
        return int(self.frame[-1])

    def covers(self, frame: int) -> bool:
        return self.first_frame <= frame <= self.last_frame

    def index_of(self, frame: int) -> int:
        if not self.covers(frame):
            raise KeyError(frame)
        return int(frame - self.first_frame)

    @property
    def points(self) -> list[TrackPoint]:
        out = []
        for i in range(len(self)):
            out.append(TrackPoint(
                int(self.frame[i]), float(self.x[i]), float(self.y[i]),
                float(self.vx[i]), float(self.vy[i]), float(self.psi[i]),
                None if self.ax is None else float(self.ax[i]),
                None if self.ay is None else float(self.ay[i]),
                None if self.lane_id is None else int(self.lane_id[i]),
            ))
        return out

    def replace(self, **changes) -> "Trajectory":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Recording:
    recording_id: str
    dataset: str
    rate_hz: float
    frame_count: int
    location_id: str
    trajectories: tuple
    geo_origin: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        if not self.rate_hz > 0:
            raise DataError(f"recording {self.recording_id}: rate_hz must be positive")
        for t in self.trajectories:
            if t.first_frame < 0 or t.last_frame >= self.frame_count:
                raise DataError(
                    f"recording {self.recording_id}: trajectory {t.agent_id} frames "
                    f"[{t.first_frame}, {t.last_frame}] outside [0, {self.frame_count})"
                )

    def replace(self, **changes) -> "Recording":
        return replace(self, **changes)

    def trajectory(self, agent_id: str) -> Trajectory:
        for t in self.trajectories:
            if t.agent_id == agent_id:
                return t
        raise KeyError(agent_id)

    @property
    def num_points(self) -> int:
        return sum(len(t) for t in self.trajectories)


_FLOAT_FIELDS_IN = ("inp_pos", "inp_vel", "inp_psi")
_FLOAT_FIELDS_TRG = ("trg_pos", "trg_vel", "trg_psi")
MASK_FIELDS = ("input_mask", "valid_mask", "sa_mask", "ma_mask")


@dataclass(frozen=True, eq=False)
class Scenario:
    """A target-agent anchored prediction sample.

    Row ``a`` of every array belongs to ``agent_ids[a]``. Slots whose mask is
    false hold 0.0. ``frame_origin`` is the (x, y, psi) pose the positions are
    expressed relative to, or None for the scene frame.
    """

    scenario_id: str
    rec_id: str
    ta_index: int
    agent_ids: tuple
    atype: np.ndarray
    inp_pos: np.ndarray
    inp_vel: np.ndarray
    inp_psi: np.ndarray
    trg_pos: np.ndarray
    trg_vel: np.ndarray
    trg_psi: np.ndarray
    input_mask: np.ndarray
    valid_mask: np.ndarray
    sa_mask: np.ndarray
    ma_mask: np.ndarray
    maneuver_label: Optional[int] = None
    map_ref: Optional[str] = None
    inp_acc: Optional[np.ndarray] = None
    trg_acc: Optional[np.ndarray] = None
    frame_origin: Optional[tuple] = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "agent_ids", tuple(str(a) for a in self.agent_ids))
        set_(self, "atype", _frozen(self.atype, np.int64))
        for name in _FLOAT_FIELDS_IN + _FLOAT_FIELDS_TRG + ("inp_acc", "trg_acc"):
            val = getattr(self, name)
            if val is not None:
                set_(self, name, _frozen(val, np.float64))
        for name in MASK_FIELDS:
            set_(self, name, _frozen(getattr(self, name), bool))
        set_(self, "ta_index", int(self.ta_index))
        if self.maneuver_label is not None:
            set_(self, "maneuver_label", int(self.maneuver_label))
        if self.frame_origin is not None:
            set_(self, "frame_origin", tuple(float(v) for v in self.frame_origin))

    @property
    def num_agents(self) -> int:
        return len(self.agent_ids)

    @property
    def obs_len(self) -> int:
        return self.inp_pos.shape[1]

    @property
    def pred_len(self) -> int:
        return self.trg_pos.shape[1]

    @property
    def ta_id(self) -> str:
        return self.agent_ids[self.ta_index]

    def scored_rows(self, task: str = "multi") -> list[int]:
        mask = self.ma_mask if task == "multi" else self.sa_mask
        return [int(a) for a in np.flatnonzero(mask.any(axis=1))]

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)


def validate_scenario(
    s: Scenario,
    max_neighbors: int = MAX_SCORED_NEIGHBORS,
    min_scored_future: int = MIN_SCORED_FUTURE,
) -> None:
    """Check every structural and mask invariant; raise ScenarioError on the first violation."""
    sid = s.scenario_id
    a = s.num_agents
    if a < 1:
        raise ScenarioError(sid, "agent_ids", "scenario has no agents")
    if len(set(s.agent_ids)) != a:
        raise ScenarioError(sid, "agent_ids", "duplicate agent ids")
    if s.atype.shape != (a,):
        raise ScenarioError(sid, "atype", f"shape {s.atype.shape}, expected ({a},)")
    if np.any((s.atype < 0) | (s.atype > 7)):
        raise ScenarioError(sid, "atype", "token outside 0..7")
    if not 0 <= s.ta_index < a:
        raise ScenarioError(sid, "ta_index", f"{s.ta_index} not in [0, {a})")
    t_in = s.inp_pos.shape[1] if s.inp_pos.ndim == 3 else -1
    t_out = s.trg_pos.shape[1] if s.trg_pos.ndim == 3 else -1
    expected = {
        "inp_pos": (a, t_in, 2), "inp_vel": (a, t_in, 2), "inp_psi": (a, t_in),
        "trg_pos": (a, t_out, 2), "trg_vel": (a, t_out, 2), "trg_psi": (a, t_out),
        "input_mask": (a, t_in), "valid_mask": (a, t_out),
        "sa_mask": (a, t_out), "ma_mask": (a, t_out),
        "inp_acc": (a, t_in, 2), "trg_acc": (a, t_out, 2),
    }
    if t_in < 1 or t_out < 1:
        raise ScenarioError(sid, "inp_pos" if t_in < 1 else "trg_pos", "expected a 3-d array")
    for name, shape in expected.items():
        arr = getattr(s, name)
        if arr is None and name in ("inp_acc", "trg_acc"):
            continue
        if arr.shape != shape:
            raise ScenarioError(sid, name, f"shape {arr.shape}, expected {shape}")
    for name in _FLOAT_FIELDS_IN + _FLOAT_FIELDS_TRG + ("inp_acc", "trg_acc"):
        arr = getattr(s, name)
        if arr is not None and not np.all(np.isfinite(arr)):
            raise ScenarioError(sid, name, "non-finite value")

    ta = s.ta_index
    if not s.input_mask[ta, -1]:
        raise ScenarioError(sid, "input_mask", "target agent not observed at the anchor step")
    if not s.valid_mask[ta].all():
        raise ScenarioError(sid, "valid_mask", "target agent future incomplete")
    off_ta = np.ones(a, dtype=bool)
    off_ta[ta] = False
    if s.sa_mask[off_ta].any():
        raise ScenarioError(sid, "sa_mask", "true outside the target-agent row")
    if not np.array_equal(s.sa_mask[ta], s.valid_mask[ta]):
        raise ScenarioError(sid, "sa_mask", "target-agent row differs from valid_mask")
    if np.any(s.ma_mask & ~s.valid_mask):
        raise ScenarioError(sid, "ma_mask", "not a subset of valid_mask")
    if not np.array_equal(s.ma_mask[ta], s.sa_mask[ta]):
        raise ScenarioError(sid, "ma_mask", "target-agent row differs from sa_mask")
    scored = s.ma_mask.any(axis=1)
    if np.any(s.valid_mask[scored].sum(axis=1) < min(min_scored_future, t_out)):
        raise ScenarioError(sid, "ma_mask", f"scored agent with fewer than {min_scored_future} valid future steps")
    if int(scored[off_ta].sum()) > max_neighbors:
        raise ScenarioError(sid, "ma_mask", f"more than {max_neighbors} scored neighbours")

    pairs = [
        ("inp_pos", s.input_mask), ("inp_vel", s.input_mask), ("inp_psi", s.input_mask),
        ("trg_pos", s.valid_mask), ("trg_vel", s.valid_mask), ("trg_psi", s.valid_mask),
        ("inp_acc", s.input_mask), ("trg_acc", s.valid_mask),
    ]
    for name, mask in pairs:
        arr = getattr(s, name)
        if arr is None:
            continue
        hidden = arr[~mask]
        if np.any(hidden != 0.0):
            raise ScenarioError(sid, name, "masked slot does not hold the 0.0 sentinel")
    for name, mask in (("inp_psi", s.input_mask), ("trg_psi", s.valid_mask)):
        vals = getattr(s, name)[mask]
        if np.any(vals <= -math.pi) or np.any(vals > math.pi):
            raise ScenarioError(sid, name, "heading not wrapped to (-pi, pi]")
    if s.maneuver_label is not None and not 0 <= s.maneuver_label <= 6:
        raise ScenarioError(sid, "maneuver_label", f"{s.maneuver_label} outside 0..6")

