"""Synthetic recordings in native dataset file formats, for tests and demos.

The highway generator writes highD-style CSVs: three-lane carriageways in both
directions, every vehicle of a direction at the same speed with a distinct
longitudinal slot, so no two vehicles ever come within a few meters of each
other, and a share of vehicles changing lane. The urban generator writes a
levelX-style recording with a small Lanelet2 map around a crossing.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .core import AgentClass, Trajectory
from .geodesy import utm_projection, utm_zone

HIGHWAY_RATE = 25
UPPER_MARKINGS = (8.5, 12.25, 16.0, 19.75)
LOWER_MARKINGS = (23.5, 27.25, 31.0, 34.75)
LANE_CHANGE_S = 3.0
SLOT_SPACING = 45.0


def _lane_centers(markings):
    m = np.asarray(markings)
    return (m[:-1] + m[1:]) / 2.0


def _lane_change_profile(t, t0, y0, y1, duration=LANE_CHANGE_S):
    """Cosine lateral transition from y0 to y1 starting at t0; returns (y, vy, ay)."""
    u = np.clip((t - t0) / duration, 0.0, 1.0)
    active = (t > t0) & (t < t0 + duration)
    dy = y1 - y0
    y = y0 + dy * (1 - np.cos(np.pi * u)) / 2
    vy = np.where(active, dy * np.pi / (2 * duration) * np.sin(np.pi * u), 0.0)
    ay = np.where(active, dy * np.pi**2 / (2 * duration**2) * np.cos(np.pi * u), 0.0)
    return y, vy, ay


def highway_recording_tables(rec_num: int, num_agents: int = 20, num_spanning: int = 7, duration_s: float = 100.0,
                             seed: int = 0, speed: float = 25.0, lane_change_every: int = 3):
    """(tracks, tracksMeta, recordingMeta) DataFrames of one synthetic highD recording.

    ``num_spanning`` vehicles live across one of the 10 s boundaries of the
    recording's 10 equal bins; the others stay inside a single bin.
    """
    rng = np.random.default_rng([seed, rec_num])
    fps = HIGHWAY_RATE
    bin_s = duration_s / 10
    all_marks = np.array(UPPER_MARKINGS + LOWER_MARKINGS)
    rows, meta = [], []
    slot = {1: 0, 2: 0}
    for k in range(num_agents):
        direction = 1 if k % 2 else 2
        if k < num_spanning:
            boundary = bin_s * (1 + k % 9)
            t_start, t_end = boundary - 0.7 * bin_s, boundary + 0.7 * bin_s
        else:
            b = (k * 7) % 10
            t_start, t_end = b * bin_s + 0.12 * bin_s, b * bin_s + 0.88 * bin_s
        f0, f1 = int(math.ceil(t_start * fps)), int(math.floor(t_end * fps))
        frames = np.arange(f0, f1 + 1)
        t = frames / fps
        s0 = slot[direction] * SLOT_SPACING
        slot[direction] += 1
        d = s0 + speed * t
        centers = _lane_centers(UPPER_MARKINGS if direction == 1 else LOWER_MARKINGS)
        lane = int(rng.integers(len(centers)))
        y0 = centers[lane]
        y, vy, ay = np.full(len(t), y0), np.zeros(len(t)), np.zeros(len(t))
        if k % lane_change_every == 0:
            # travel-left is -y (image frame) for direction 2 and +y for direction 1
            options = [i for i in (lane - 1, lane + 1) if 0 <= i < len(centers)]
            target = options[int(rng.integers(len(options)))]
            tc = t[0] + rng.uniform(1.0, max(1.5, (t[-1] - t[0]) - LANE_CHANGE_S - 1.0))
            y, vy, ay = _lane_change_profile(t, tc, y0, centers[target])
        truck = k % 5 == 4
        length, width = (12.0, 2.5) if truck else (4.5, 1.8)
        if direction == 2:
            x, vx = d, np.full(len(t), speed)
        else:
            x, vx = 3000.0 - d, np.full(len(t), -speed)
        lane_id = np.searchsorted(all_marks, y) + 1
        tid = k + 1
        for i in range(len(t)):
            rows.append((int(frames[i]) + 1, tid, x[i] - length / 2, y[i] - width / 2, length, width,
                         vx[i], vy[i], 0.0, ay[i], int(lane_id[i])))
        meta.append((tid, length, width, int(frames[0]) + 1, int(frames[-1]) + 1, len(frames),
                     "Truck" if truck else "Car", direction))
    tracks = pd.DataFrame(rows, columns=["frame", "id", "x", "y", "width", "height", "xVelocity", "yVelocity",
                                         "xAcceleration", "yAcceleration", "laneId"])
    tracks = tracks.sort_values(["id", "frame"], kind="stable").reset_index(drop=True)
    tracks_meta = pd.DataFrame(meta, columns=["id", "width", "height", "initialFrame", "finalFrame", "numFrames",
                                              "class", "drivingDirection"])
    rec_meta = pd.DataFrame([{
        "id": rec_num, "frameRate": fps, "locationId": 1 + rec_num % 2, "speedLimit": -1,
        "month": "01.2018", "weekDay": "Mon", "startTime": "08:00", "duration": duration_s,
        "totalDrivenDistance": 0.0, "totalDrivenTime": 0.0, "numVehicles": num_agents,
        "numCars": sum(1 for m in meta if m[6] == "Car"), "numTrucks": sum(1 for m in meta if m[6] == "Truck"),
        "upperLaneMarkings": ";".join(f"{v:.2f}" for v in UPPER_MARKINGS),
        "lowerLaneMarkings": ";".join(f"{v:.2f}" for v in LOWER_MARKINGS),
    }])
    return tracks, tracks_meta, rec_meta


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, float_format="%.4f", lineterminator="\n")


def write_highway_dataset(out_dir, num_recordings: int = 3, agents_per_recording: int = 20,
                          spanning=(7, 7, 6), seed: int = 0, duration_s: float = 100.0) -> Path:
    """Write ``num_recordings`` highD-style recordings into ``out_dir/highD/data``."""
    data = Path(out_dir) / "highD" / "data"
    data.mkdir(parents=True, exist_ok=True)
    for r in range(num_recordings):
        num = r + 1
        tracks, tmeta, rmeta = highway_recording_tables(
            num, agents_per_recording, spanning[r % len(spanning)], duration_s, seed)
        _write_csv(tracks, data / f"{num:02d}_tracks.csv")
        _write_csv(tmeta, data / f"{num:02d}_tracksMeta.csv")
        _write_csv(rmeta, data / f"{num:02d}_recordingMeta.csv")
    return data.parent


def scripted_lane_change(ttlc_s: Optional[float], side: str = "left", rate_hz: float = 5.0, length: int = 60,
                         anchor: int = 10, speed: float = 25.0, agent_id: str = "1") -> Trajectory:
    """Road-aligned 5 Hz track whose lane id changes ``ttlc_s`` seconds after step ``anchor``.

    ``side`` is relative to travel direction (+y is left). ``ttlc_s=None`` keeps the lane.
    """
    t = np.arange(length) / rate_hz
    y = np.zeros(length)
    lane = np.full(length, 2, dtype=np.int64)
    if ttlc_s is not None:
        cross = anchor + int(round(ttlc_s * rate_hz))
        sign = 1.0 if side == "left" else -1.0
        # drift linearly towards the marking at 1.75 m, crossing it at step `cross`
        rate = 0.5
        y = sign * np.clip((np.arange(length) - (cross - 3.5)) * rate, 0.0, 3.5)
        lane[cross:] = 3 if side == "left" else 1
    vy = np.gradient(y) * rate_hz
    return Trajectory(
        agent_id=agent_id, agent_class=AgentClass.CAR, frame=np.arange(length),
        x=speed * t, y=y, vx=np.full(length, speed), vy=vy, psi=np.arctan2(vy, speed),
        lane_id=lane, rate_hz=rate_hz, heading_derived=True, group=2,
    )


# ---------------------------------------------------------------------------
# urban levelX-style recording with a Lanelet2 map
# ---------------------------------------------------------------------------

URBAN_LAT0, URBAN_LON0 = 50.7827, 6.0600
URBAN_RATE = 25


def urban_geo_origin():
    """(zone, easting, northing) of the fixture's local origin."""
    zone = utm_zone(URBAN_LON0)
    e, n = utm_projection(zone).forward(URBAN_LAT0, URBAN_LON0)
    return zone, float(e), float(n)


def urban_map_xml(half_length: float = 40.0, lane_width: float = 3.5) -> str:
    """Lanelet2 document with an east-west and a north-south lanelet crossing at the origin."""
    zone, e0, n0 = urban_geo_origin()
    tm = utm_projection(zone)
    w = lane_width / 2
    L = half_length
    nodes = {
        1: (-L, -w), 2: (L, -w), 3: (-L, w), 4: (L, w),
        5: (-w, -L), 6: (-w, L), 7: (w, -L), 8: (w, L),
        9: (-L + 5, -w - 1), 10: (-L + 5, w + 1),
    }
    lines = ["<?xml version='1.0' encoding='UTF-8'?>", "<osm version='0.6' generator='bevtraj-synthetic'>"]
    for nid, (x, y) in nodes.items():
        lat, lon = tm.inverse(e0 + x, n0 + y)
        lines.append(f"  <node id='{nid}' visible='true' version='1' lat='{float(lat):.11f}' lon='{float(lon):.11f}' />")
    ways = {
        101: ((1, 2), {"type": "line_thin", "subtype": "solid"}),
        102: ((3, 4), {"type": "line_thin", "subtype": "dashed"}),
        103: ((5, 6), {"type": "curbstone", "subtype": "high"}),
        104: ((7, 8), {"type": "line_thin", "subtype": "solid"}),
        105: ((9, 10), {"type": "stop_line"}),
    }
    for wid, (refs, tags) in ways.items():
        lines.append(f"  <way id='{wid}' visible='true' version='1'>")
        lines += [f"    <nd ref='{r}' />" for r in refs]
        lines += [f"    <tag k='{k}' v='{v}' />" for k, v in tags.items()]
        lines.append("  </way>")
    for rid, (left, right) in {201: (102, 101), 202: (103, 104)}.items():
        lines.append(f"  <relation id='{rid}' visible='true' version='1'>")
        lines.append(f"    <member type='way' ref='{left}' role='left' />")
        lines.append(f"    <member type='way' ref='{right}' role='right' />")
        lines.append("    <tag k='type' v='lanelet' />")
        lines.append("    <tag k='subtype' v='road' />")
        lines.append("  </relation>")
    lines.append("</osm>")
    return "\n".join(lines) + "\n"


def write_urban_dataset(out_dir, num_agents: int = 40, duration_s: float = 150.0, seed: int = 0) -> Path:
    """Write one rounD-style recording plus its map into ``out_dir/rounD``."""
    root = Path(out_dir) / "rounD"
    data = root / "data"
    maps = root / "maps" / "lanelets" / "01_synthetic"
    data.mkdir(parents=True, exist_ok=True)
    maps.mkdir(parents=True, exist_ok=True)
    (maps / "location1.osm").write_text(urban_map_xml(), encoding="utf-8")
    zone, e0, n0 = urban_geo_origin()
    rng = np.random.default_rng([seed, 7])
    fps = URBAN_RATE
    rows, meta = [], []
    for k in range(num_agents):
        ped = k % 8 == 7
        speed = 1.4 if ped else 8.0
        t_start = (k * duration_s / num_agents) * 0.9
        life = min(duration_s - t_start - 0.1, 10.0 if not ped else 14.0)
        frames = np.arange(int(math.ceil(t_start * fps)), int(math.floor((t_start + life) * fps)) + 1)
        t = (frames - frames[0]) / fps
        if ped:
            x, y = -20.0 + speed * t, np.full(len(t), 12.0 + 0.5 * k)
            vx, vy = np.full(len(t), speed), np.zeros(len(t))
        elif k % 2 == 0:
            x, y = -40.0 + speed * t, np.full(len(t), -1.75 + 0.0 * k)
            vx, vy = np.full(len(t), speed), np.zeros(len(t))
        else:
            x, y = np.full(len(t), 1.75), -40.0 + speed * t
            vx, vy = np.zeros(len(t)), np.full(len(t), speed)
        jitter = rng.normal(0.0, 0.02, size=(len(t), 2))
        x, y = x + jitter[:, 0], y + jitter[:, 1]
        heading = np.degrees(np.arctan2(vy, vx)) % 360.0
        for i in range(len(t)):
            rows.append((0, k, int(frames[i]), x[i], y[i], heading[i], vx[i], vy[i], 0.0, 0.0))
        meta.append((0, k, int(frames[0]), int(frames[-1]), len(frames), "pedestrian" if ped else "car"))
    tracks = pd.DataFrame(rows, columns=["recordingId", "trackId", "frame", "xCenter", "yCenter", "heading",
                                         "xVelocity", "yVelocity", "xAcceleration", "yAcceleration"])
    tmeta = pd.DataFrame(meta, columns=["recordingId", "trackId", "initialFrame", "finalFrame", "numFrames", "class"])
    rmeta = pd.DataFrame([{
        "recordingId": 0, "locationId": 1, "frameRate": fps, "speedLimit": 13.89, "weekday": "monday",
        "startTime": 8, "duration": duration_s, "numTracks": num_agents,
        "latLocation": URBAN_LAT0, "lonLocation": URBAN_LON0, "xUtmOrigin": e0, "yUtmOrigin": n0,
        "orthoPxToMeter": 0.1,
    }])
    _write_csv(tracks, data / "00_tracks.csv")
    _write_csv(tmeta, data / "00_tracksMeta.csv")
    rmeta.to_csv(data / "00_recordingMeta.csv", index=False, float_format="%.6f", lineterminator="\n")
    return root
