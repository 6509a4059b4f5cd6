"""Scene normalization and assembly of target-agent scenarios from a 5 Hz recording."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    MAX_SCORED_NEIGHBORS, MIN_SCORED_FUTURE, OBS_LEN, PRED_LEN,
    DataError, Recording, Scenario, Trajectory, agent_sort_key, wrap_angle,
)


@dataclass(frozen=True)
class ScenarioConfig:
    obs_len: int = OBS_LEN
    pred_len: int = PRED_LEN
    neighbors: int = MAX_SCORED_NEIGHBORS
    min_scored_future: int = MIN_SCORED_FUTURE
    agent_frame: str = "off"
    include_accel: bool = False

    def __post_init__(self):
        if self.obs_len < 1 or self.pred_len < 1:
            raise ValueError("window lengths must be positive")
        if self.neighbors < 0:
            raise ValueError("neighbors must be non-negative")
        if self.agent_frame not in ("off", "ta"):
            raise ValueError(f"agent_frame must be 'off' or 'ta', got {self.agent_frame!r}")


def _rotate(x, y, c, s):
    return c * x - s * y, s * x + c * y


def _moved(t: Trajectory, dx: float, dy: float, flip: bool) -> Trajectory:
    """Translate a trajectory by (dx, dy), after a 180 degree rotation if ``flip``."""
    sign = -1.0 if flip else 1.0
    kw = dict(x=sign * t.x + dx, y=sign * t.y + dy)
    if flip:
        kw.update(vx=-t.vx, vy=-t.vy, psi=wrap_angle(t.psi + math.pi))
        if t.ax is not None:
            kw.update(ax=-t.ax, ay=-t.ay)
    return t.replace(**kw)


def normalize_coordinates(rec: Recording, map_center: Optional[tuple] = None) -> Recording:
    """Move a recording into its dataset's scene frame.

    Direction-split recordings (highway data with per-track travel direction):
    each direction group is turned so it travels along +x with +y to the left
    (a 180 degree rotation for the group heading towards -x), then shifted so
    the lower-left corner of its lane markings and x-extent is the origin.

    Everything else is translated so ``map_center`` (or, without a map, the
    mean of all track positions) becomes the origin.

    A recording that was already normalized is returned unchanged.
    """
    if "normalization" in rec.meta:
        return rec
    meta = dict(rec.meta)
    if rec.meta.get("frame_transform") == "direction_split":
        markings = rec.meta.get("markings")
        if not markings or any(t.group is None for t in rec.trajectories):
            raise DataError(f"recording {rec.recording_id}: direction-split transform needs driving direction metadata")
        x0, x1 = rec.meta.get("x_extent", (0.0, 0.0))
        groups_meta, road, out = {}, {}, []
        for g in sorted({t.group for t in rec.trajectories}):
            members = [t for t in rec.trajectories if t.group == g]
            marks = markings.get(g, markings.get(str(g), []))
            if not marks:
                raise DataError(f"recording {rec.recording_id}: no lane markings for direction {g}")
            flip = float(np.mean(np.concatenate([t.vx for t in members]))) < 0
            sign = -1.0 if flip else 1.0
            ys = sorted(sign * float(m) for m in marks)
            xs = sorted((sign * x0, sign * x1))
            corner = (xs[0], ys[0])
            for t in members:
                out.append(_moved(t, -corner[0], -corner[1], flip))
            groups_meta[str(g)] = {"rotated": flip, "corner": list(corner)}
            road[str(g)] = {"markings": [y - corner[1] for y in ys], "x_range": [0.0, xs[1] - xs[0]]}
        byid = {t.agent_id: t for t in out}
        trajs = [byid[t.agent_id] for t in rec.trajectories]
        meta["normalization"] = {"kind": "direction_split", "groups": groups_meta}
        meta["road"] = road
        return rec.replace(trajectories=trajs, meta=meta)

    if map_center is not None:
        cx, cy = (float(v) for v in map_center)
        source = "map"
    elif rec.trajectories:
        cx = float(np.mean(np.concatenate([t.x for t in rec.trajectories])))
        cy = float(np.mean(np.concatenate([t.y for t in rec.trajectories])))
        source = "tracks"
    else:
        cx = cy = 0.0
        source = "none"
    trajs = [_moved(t, -cx, -cy, False) for t in rec.trajectories]
    meta["normalization"] = {"kind": "translate", "center": [cx, cy], "source": source}
    return rec.replace(trajectories=trajs, meta=meta)


def _transform(s: Scenario, x0: float, y0: float, psi0: float, inverse: bool) -> dict:
    c, sn = math.cos(psi0), math.sin(psi0)

    def pos(arr, mask):
        out = np.zeros_like(arr)
        p = arr[mask]
        if inverse:
            px, py = _rotate(p[:, 0], p[:, 1], c, sn)
            out[mask] = np.column_stack([px + x0, py + y0])
        else:
            px, py = _rotate(p[:, 0] - x0, p[:, 1] - y0, c, -sn)
            out[mask] = np.column_stack([px, py])
        return out

    def vec(arr, mask):
        if arr is None:
            return None
        out = np.zeros_like(arr)
        p = arr[mask]
        px, py = _rotate(p[:, 0], p[:, 1], c, sn if inverse else -sn)
        out[mask] = np.column_stack([px, py])
        return out

    def ang(arr, mask):
        out = np.zeros_like(arr)
        if mask.any():
            out[mask] = wrap_angle(arr[mask] + (psi0 if inverse else -psi0))
        return out

    im, vm = s.input_mask, s.valid_mask
    return dict(
        inp_pos=pos(s.inp_pos, im), inp_vel=vec(s.inp_vel, im), inp_psi=ang(s.inp_psi, im),
        trg_pos=pos(s.trg_pos, vm), trg_vel=vec(s.trg_vel, vm), trg_psi=ang(s.trg_psi, vm),
        inp_acc=vec(s.inp_acc, im), trg_acc=vec(s.trg_acc, vm),
    )


def to_agent_frame(s: Scenario) -> Scenario:
    """Express a scenario relative to the target agent's pose at the anchor step.

    ``frame_origin`` records that pose in the scene frame, so repeated
    application is the identity and :func:`from_agent_frame` can undo it.
    """
    ta = s.ta_index
    x0, y0 = (float(v) for v in s.inp_pos[ta, -1])
    psi0 = float(s.inp_psi[ta, -1])
    arrays = _transform(s, x0, y0, psi0, inverse=False)
    if s.frame_origin is None:
        origin = (x0, y0, psi0)
    else:
        ox, oy, opsi = s.frame_origin
        dx, dy = _rotate(x0, y0, math.cos(opsi), math.sin(opsi))
        origin = (ox + dx, oy + dy, wrap_angle(opsi + psi0))
    return s.replace(frame_origin=origin, **arrays)


def from_agent_frame(s: Scenario) -> Scenario:
    """Return a scenario built by :func:`to_agent_frame` to the scene frame."""
    if s.frame_origin is None:
        return s
    x0, y0, psi0 = s.frame_origin
    return s.replace(frame_origin=None, **_transform(s, x0, y0, psi0, inverse=True))


def scenario_id(recording_id: str, anchor: int, ta_id: str) -> str:
    return f"{recording_id}-{anchor:06d}-{ta_id}"


def _window(t: Trajectory, frames: np.ndarray):
    """Indices into ``t`` and the mask of window slots it covers."""
    mask = (frames >= t.first_frame) & (frames <= t.last_frame)
    return frames[mask] - t.first_frame, mask


def build_scenario(
    rec: Recording,
    ta_id: str,
    anchor: int,
    config: ScenarioConfig = ScenarioConfig(),
    allowed: Optional[set] = None,
    label: Optional[int] = None,
    map_ref: Optional[str] = None,
) -> Optional[Scenario]:
    """Assemble the scenario of target agent ``ta_id`` anchored at frame ``anchor``.

    Returns None when the target agent is absent at the anchor or lacks a full
    future. Other agents are included when present at the anchor (and in
    ``allowed``, if given, and in the target agent's direction group, if any);
    they are ordered by distance to the target agent at the anchor, ties broken
    by agent id. The nearest ``config.neighbors`` agents with at least
    ``config.min_scored_future`` valid future steps are scored.
    """
    try:
        ta = rec.trajectory(ta_id)
    except KeyError:
        return None
    if not ta.covers(anchor) or not ta.covers(anchor + config.pred_len):
        return None
    p0 = np.array([ta.x[ta.index_of(anchor)], ta.y[ta.index_of(anchor)]])
    others = []
    for t in rec.trajectories:
        if t.agent_id == ta_id or not t.covers(anchor):
            continue
        if allowed is not None and t.agent_id not in allowed:
            continue
        if ta.group is not None and t.group != ta.group:
            continue
        i = t.index_of(anchor)
        d = float(np.hypot(t.x[i] - p0[0], t.y[i] - p0[1]))
        others.append((d, agent_sort_key(t.agent_id), t))
    others.sort(key=lambda e: (e[0], e[1]))
    agents = [ta] + [e[2] for e in others]

    n, t_in, t_out = len(agents), config.obs_len, config.pred_len
    f_in = np.arange(anchor - t_in + 1, anchor + 1)
    f_out = np.arange(anchor + 1, anchor + t_out + 1)
    arr = {k: np.zeros(shape) for k, shape in (
        ("inp_pos", (n, t_in, 2)), ("inp_vel", (n, t_in, 2)), ("inp_psi", (n, t_in)),
        ("trg_pos", (n, t_out, 2)), ("trg_vel", (n, t_out, 2)), ("trg_psi", (n, t_out)),
        ("inp_acc", (n, t_in, 2)), ("trg_acc", (n, t_out, 2)),
    )}
    input_mask = np.zeros((n, t_in), bool)
    valid_mask = np.zeros((n, t_out), bool)
    for a, t in enumerate(agents):
        for frames, prefix, mask in ((f_in, "inp", input_mask), (f_out, "trg", valid_mask)):
            idx, m = _window(t, frames)
            mask[a] = m
            arr[f"{prefix}_pos"][a, m] = np.column_stack([t.x[idx], t.y[idx]])
            arr[f"{prefix}_vel"][a, m] = np.column_stack([t.vx[idx], t.vy[idx]])
            arr[f"{prefix}_psi"][a, m] = t.psi[idx]
            if t.ax is not None:
                arr[f"{prefix}_acc"][a, m] = np.column_stack([t.ax[idx], t.ay[idx]])

    sa_mask = np.zeros_like(valid_mask)
    sa_mask[0] = valid_mask[0]
    ma_mask = sa_mask.copy()
    scored = 0
    for a in range(1, n):
        if scored >= config.neighbors:
            break
        if valid_mask[a].sum() >= config.min_scored_future:
            ma_mask[a] = valid_mask[a]
            scored += 1

    s = Scenario(
        scenario_id=scenario_id(rec.recording_id, anchor, ta_id), rec_id=rec.recording_id, ta_index=0,
        agent_ids=tuple(t.agent_id for t in agents),
        atype=np.array([int(t.agent_class) for t in agents], dtype=np.int64),
        inp_pos=arr["inp_pos"], inp_vel=arr["inp_vel"], inp_psi=arr["inp_psi"],
        trg_pos=arr["trg_pos"], trg_vel=arr["trg_vel"], trg_psi=arr["trg_psi"],
        input_mask=input_mask, valid_mask=valid_mask, sa_mask=sa_mask, ma_mask=ma_mask,
        maneuver_label=label, map_ref=map_ref,
        inp_acc=arr["inp_acc"] if config.include_accel else None,
        trg_acc=arr["trg_acc"] if config.include_accel else None,
    )
    return to_agent_frame(s) if config.agent_frame == "ta" else s
