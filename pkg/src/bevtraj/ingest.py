"""Dataset adapters: raw per-recording CSV files to :class:`~bevtraj.core.Recording`.

Each supported dataset is described by a :class:`DatasetDescriptor` table
(file-name patterns, native to canonical column names, class strings to agent
class tokens, unit conventions). Adding a dataset variant means adding a table,
not code. The per-adapter native schemas are listed in ``docs/adapters.md``.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .core import AgentClass, DataError, Recording, Trajectory, agent_sort_key, wrap_angle

log = logging.getLogger(__name__)

HEADING_SPEED_FLOOR = 0.1

# canonical fields that must be numeric when present
NUMERIC_FIELDS = (
    "frame", "x", "y", "vx", "vy", "psi", "ax", "ay", "bbox_w", "bbox_h",
    "timestamp_ms", "driving_direction", "frame_rate",
)


@dataclass(frozen=True)
class DatasetDescriptor:
    name: str
    family: str
    layout: str
    file_patterns: dict
    column_map: dict
    class_map: dict
    native_rate_hz: object
    has_lanelet: bool
    has_heading: bool
    predefined_splits: bool
    optional_columns: frozenset = frozenset()
    forbidden_columns: frozenset = frozenset()
    heading_unit: str = "rad"
    position_anchor: str = "center"
    y_axis: str = "up"
    frame_transform: str = "center"
    path_hints: tuple = ()
    provisional: bool = False

    def map_class(self, native) -> AgentClass:
        key = str(native).strip().lower()
        try:
            return self.class_map[key]
        except KeyError:
            raise DataError(f"{self.name}: unmapped agent class {native!r}") from None


C = AgentClass

_LEVELX_TRACKS = {
    "trackId": "track_id", "frame": "frame", "xCenter": "x", "yCenter": "y",
    "heading": "psi", "xVelocity": "vx", "yVelocity": "vy",
    "xAcceleration": "ax", "yAcceleration": "ay",
}
_LEVELX_TRACKS_META = {"trackId": "track_id", "class": "class"}
_LEVELX_RECORDING_META = {
    "recordingId": "recording_id", "frameRate": "frame_rate", "locationId": "location_id",
    "latLocation": "lat", "lonLocation": "lon", "xUtmOrigin": "utm_x", "yUtmOrigin": "utm_y",
}
_LEVELX_OPTIONAL = frozenset({"xAcceleration", "yAcceleration", "latLocation", "lonLocation", "xUtmOrigin", "yUtmOrigin"})
_LEVELX_FILES = {
    "tracks": r"^(?P<rec>\d+)_tracks\.csv$",
    "tracks_meta": r"^(?P<rec>\d+)_tracksMeta\.csv$",
    "recording_meta": r"^(?P<rec>\d+)_recordingMeta\.csv$",
}
_LEVELX_CLASSES = {
    "car": C.CAR, "van": C.CAR, "truck": C.TRUCK, "trailer": C.TRUCK,
    "bus": C.BUS, "motorcycle": C.MOTORCYCLE, "bicycle": C.BICYCLE,
    "pedestrian": C.PEDESTRIAN,
}


def _levelx(name, family, hints, class_extra=None, tracks_extra=None, optional_extra=(), forbidden=(), provisional=False):
    tracks = dict(_LEVELX_TRACKS)
    tracks.update(tracks_extra or {})
    classes = dict(_LEVELX_CLASSES)
    classes.update(class_extra or {})
    return DatasetDescriptor(
        name=name, family=family, layout="levelx", file_patterns=dict(_LEVELX_FILES),
        column_map={"tracks": tracks, "tracks_meta": dict(_LEVELX_TRACKS_META), "recording_meta": dict(_LEVELX_RECORDING_META)},
        class_map=classes, native_rate_hz="from_meta", has_lanelet=True, has_heading=True,
        predefined_splits=False, optional_columns=_LEVELX_OPTIONAL | frozenset(optional_extra),
        forbidden_columns=frozenset(forbidden), heading_unit="deg", path_hints=hints, provisional=provisional,
    )


HIGHD = DatasetDescriptor(
    name="highD", family="highway", layout="levelx",
    file_patterns=dict(_LEVELX_FILES),
    column_map={
        "tracks": {
            "id": "track_id", "frame": "frame", "x": "x", "y": "y", "width": "bbox_w", "height": "bbox_h",
            "xVelocity": "vx", "yVelocity": "vy", "xAcceleration": "ax", "yAcceleration": "ay", "laneId": "lane_id",
        },
        "tracks_meta": {"id": "track_id", "class": "class", "drivingDirection": "driving_direction"},
        "recording_meta": {
            "id": "recording_id", "frameRate": "frame_rate", "locationId": "location_id",
            "upperLaneMarkings": "upper_markings", "lowerLaneMarkings": "lower_markings",
        },
    },
    class_map={"car": C.CAR, "truck": C.TRUCK},
    native_rate_hz="from_meta", has_lanelet=False, has_heading=False, predefined_splits=False,
    optional_columns=frozenset({"xAcceleration", "yAcceleration"}),
    position_anchor="bbox_top_left", y_axis="down", frame_transform="direction_split",
    path_hints=("highd",),
)

_NO_LANES = ("laneletId", "laneId")
ROUND = _levelx("rounD", "urban", ("round",), forbidden=_NO_LANES)
IND = _levelx("inD", "urban", ("ind",), class_extra={"truck_bus": C.BUS}, forbidden=_NO_LANES)
UNID = _levelx("uniD", "urban", ("unid",), class_extra={"truck_bus": C.TRUCK}, forbidden=_NO_LANES)
EXID = _levelx("exiD", "highway", ("exid",), tracks_extra={"laneletId": "lane_id"})
# native iSAC schema is undocumented; assumed levelX-like until real headers are seen
ISAC = _levelx("iSAC", "highway", ("isac",), class_extra={"truck_bus": C.TRUCK},
               tracks_extra={"laneId": "lane_id"}, provisional=True)

SIND = DatasetDescriptor(
    name="SinD", family="urban", layout="sind",
    file_patterns={"tracks": r"^Veh_smoothed_tracks\.csv$", "ped_tracks": r"^Ped_smoothed_tracks\.csv$"},
    column_map={"tracks": {
        "track_id": "track_id", "frame_id": "frame", "timestamp_ms": "timestamp_ms", "agent_type": "class",
        "x": "x", "y": "y", "vx": "vx", "vy": "vy", "yaw_rad": "psi", "ax": "ax", "ay": "ay",
    }},
    class_map={
        "car": C.CAR, "truck": C.TRUCK, "bus": C.BUS, "motorcycle": C.MOTORCYCLE,
        "bicycle": C.BICYCLE, "tricycle": C.TRICYCLE, "pedestrian": C.PEDESTRIAN,
    },
    native_rate_hz=10.0, has_lanelet=True, has_heading=True, predefined_splits=False,
    optional_columns=frozenset({"yaw_rad", "ax", "ay"}), path_hints=("sind",),
)

INTERACTION = DatasetDescriptor(
    name="INTERACTION", family="interaction", layout="interaction",
    file_patterns={"tracks": r"^(?:vehicle|pedestrian)_tracks_(?P<rec>\d+)\.csv$|^(?P<loc>.+)_(?P<split>train|val|test)\.csv$"},
    column_map={"tracks": {
        "case_id": "case_id", "track_id": "track_id", "frame_id": "frame", "timestamp_ms": "timestamp_ms",
        "agent_type": "class", "x": "x", "y": "y", "vx": "vx", "vy": "vy", "psi_rad": "psi",
    }},
    class_map={"car": C.CAR, "pedestrian/bicycle": C.VRU_OTHER, "pedestrian": C.PEDESTRIAN, "bicycle": C.BICYCLE},
    native_rate_hz=10.0, has_lanelet=True, has_heading=True, predefined_splits=True,
    optional_columns=frozenset({"case_id", "psi_rad"}), path_hints=("interaction",),
)

DESCRIPTORS = {d.name: d for d in (HIGHD, ROUND, IND, UNID, EXID, SIND, ISAC, INTERACTION)}


def get_descriptor(name: str) -> DatasetDescriptor:
    for key, d in DESCRIPTORS.items():
        if key.lower() == name.lower():
            return d
    raise DataError(f"unknown dataset {name!r}; known: {', '.join(DESCRIPTORS)}")


# ---------------------------------------------------------------------------
# discovery
# ---------------------------------------------------------------------------

def _csv_header(path: Path) -> list[str]:
    with open(path, encoding="utf-8-sig") as fh:
        line = fh.readline()
    return [c.strip() for c in line.rstrip("\r\n").split(",")]


def _required(descriptor: DatasetDescriptor, role: str) -> set:
    cols = set(descriptor.column_map.get(role, {}))
    return cols - descriptor.optional_columns


def _hint_matches(descriptor: DatasetDescriptor, paths) -> bool:
    for p in paths:
        for part in Path(p).parts:
            for hint in descriptor.path_hints:
                if re.search(rf"(^|[^a-z]){hint}([^a-z]|$)", part.lower()):
                    return True
    return False


def _files_for(descriptor: DatasetDescriptor, input_dir: Path) -> dict:
    """Map role -> sorted matching files below ``input_dir``."""
    found = {}
    csvs = sorted(p for p in input_dir.rglob("*.csv") if p.is_file())
    for role, pattern in descriptor.file_patterns.items():
        rx = re.compile(pattern)
        found[role] = [p for p in csvs if rx.match(p.name)]
    return found


def _header_evidence(descriptor: DatasetDescriptor, files: dict) -> Optional[str]:
    """Return None when the headers fit the descriptor, else the reason they do not."""
    tracks = files.get("tracks") or []
    if not tracks:
        return "no tracks files"
    header = set(_csv_header(tracks[0]))
    missing = _required(descriptor, "tracks") - header
    if descriptor.layout == "interaction":
        missing -= {"agent_type"} if "agent_type" in header else set()
    if missing:
        return f"{tracks[0].name} lacks {sorted(missing)}"
    bad = descriptor.forbidden_columns & header
    if bad:
        return f"{tracks[0].name} has {sorted(bad)}"
    for role in ("tracks_meta", "recording_meta"):
        if role in descriptor.file_patterns:
            if not files.get(role):
                return f"no {role} files"
            miss = _required(descriptor, role) - set(_csv_header(files[role][0]))
            if miss:
                return f"{files[role][0].name} lacks {sorted(miss)}"
    return None


def detect_dataset(input_dir) -> DatasetDescriptor:
    """Identify the dataset stored below ``input_dir`` from file names and headers.

    When several descriptors fit the headers (the levelX urban datasets share
    one schema) a dataset name appearing in the directory path breaks the tie.
    """
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise DataError(f"{input_dir}: not a directory")
    matches, evidence = [], []
    for d in DESCRIPTORS.values():
        files = _files_for(d, input_dir)
        reason = _header_evidence(d, files)
        if reason is None:
            matches.append((d, files))
        elif files.get("tracks"):
            evidence.append(f"{d.name}: {reason}")
    if not matches:
        detail = "; ".join(evidence)
        raise DataError(f"{input_dir}: no recognizable recordings" + (f" ({detail})" if detail else ""))
    if len(matches) > 1:
        hinted = [(d, f) for d, f in matches if _hint_matches(d, [input_dir.resolve()] + f["tracks"])]
        if len(hinted) == 1:
            return hinted[0][0]
        names = ", ".join(d.name for d, _ in matches)
        raise DataError(
            f"{input_dir}: ambiguous dataset, files and headers match {names}; "
            "pass the dataset name explicitly or keep it in the directory name"
        )
    return matches[0][0]


def discover_recordings(descriptor: DatasetDescriptor, input_dir) -> list[dict]:
    """Group the dataset's files into per-recording role -> path dicts, sorted by recording id."""
    input_dir = Path(input_dir)
    files = _files_for(descriptor, input_dir)
    groups: dict = {}
    if descriptor.layout == "levelx":
        for role, paths in files.items():
            rx = re.compile(descriptor.file_patterns[role])
            for p in paths:
                rec = rx.match(p.name).group("rec")
                groups.setdefault((str(p.parent), rec), {})[role] = p
        out = []
        for key in sorted(groups, key=lambda k: (k[0], int(k[1]))):
            g = groups[key]
            missing = set(descriptor.file_patterns) - set(g)
            if missing:
                raise DataError(f"recording {key[1]} in {key[0]}: missing {sorted(missing)} file(s)")
            out.append(g)
        return out
    if descriptor.layout == "sind":
        for role, paths in files.items():
            for p in paths:
                groups.setdefault(str(p.parent), {})[role] = p
        return [groups[k] for k in sorted(groups)]
    return [{"tracks": p} for p in files["tracks"]]


# ---------------------------------------------------------------------------
# heading
# ---------------------------------------------------------------------------

def estimate_heading(vx: float, vy: float, prev: float = 0.0, speed_floor: float = HEADING_SPEED_FLOOR) -> float:
    """Heading of the velocity vector, wrapped to (-pi, pi].

    Below ``speed_floor`` the direction of the velocity is noise, so ``prev``
    (the previous sample's heading, 0 for the first sample) is returned.
    """
    if not (math.isfinite(vx) and math.isfinite(vy)):
        raise ValueError("velocity must be finite")
    if math.hypot(vx, vy) < speed_floor:
        return wrap_angle(prev)
    return wrap_angle(math.atan2(vy, vx))


def estimate_heading_series(vx, vy, speed_floor: float = HEADING_SPEED_FLOOR) -> np.ndarray:
    vx = np.asarray(vx, dtype=float)
    vy = np.asarray(vy, dtype=float)
    if not (np.all(np.isfinite(vx)) and np.all(np.isfinite(vy))):
        raise ValueError("velocity must be finite")
    raw = np.arctan2(vy, vx)
    moving = np.hypot(vx, vy) >= speed_floor
    idx = np.where(moving, np.arange(len(vx)), -1)
    idx = np.maximum.accumulate(idx) if len(idx) else idx
    out = np.where(idx >= 0, raw[np.clip(idx, 0, None)], 0.0)
    return wrap_angle(out) if len(out) else out


# ---------------------------------------------------------------------------
# table reading
# ---------------------------------------------------------------------------

def _read_table(path: Path, descriptor: DatasetDescriptor, role: str) -> pd.DataFrame:
    """Read one CSV, check mandatory columns, rename to canonical names."""
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8-sig")
    except pd.errors.ParserError as exc:
        raise DataError(f"{path}: {exc}") from None
    df.columns = [c.strip() for c in df.columns]
    colmap = descriptor.column_map[role]
    missing = _required(descriptor, role) - set(df.columns)
    if descriptor.layout == "sind" and role == "tracks" and path.name.startswith("Ped"):
        missing -= {"yaw_rad", "agent_type"}
    if missing:
        raise DataError(f"{path}: missing mandatory column(s) {sorted(missing)}")
    df = df[[c for c in df.columns if c in colmap]].rename(columns=colmap)
    df.attrs["source"] = str(path)
    return df


def _numeric(df: pd.DataFrame, column: str, allow_blank: bool = False) -> np.ndarray:
    raw = df[column].str.strip()
    vals = pd.to_numeric(raw, errors="coerce")
    bad = vals.isna() & ~((raw == "") & allow_blank)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        line = int(df.index[row]) + 2
        raise DataError(f"{df.attrs.get('source', '?')}:{line}: non-numeric value {df[column].iloc[row]!r} in column {column!r}")
    return vals.to_numpy(dtype=float)


def _lane_ids(df: pd.DataFrame) -> np.ndarray:
    # exiD-style cells may list several lanelets ("123;124"); the first is the occupied one
    first = df["lane_id"].str.split(";").str[0].str.strip()
    tmp = pd.DataFrame({"lane_id": first}, index=df.index)
    tmp.attrs = df.attrs
    return _numeric(tmp, "lane_id").astype(np.int64)


def normalize_units(table: pd.DataFrame, descriptor: DatasetDescriptor) -> pd.DataFrame:
    """Convert a canonical-named track table to meters, m/s, radians and a y-up frame.

    The result is tagged, so normalizing it again returns it unchanged.
    """
    if table.attrs.get("units") == "canonical":
        return table
    out = table.copy()
    if descriptor.position_anchor == "bbox_top_left":
        out["x"] = out["x"] + out["bbox_w"] / 2.0
        out["y"] = out["y"] + out["bbox_h"] / 2.0
    if descriptor.y_axis == "down":
        for col in ("y", "vy", "ay"):
            if col in out:
                out[col] = -out[col]
    if "psi" in out:
        psi = out["psi"].to_numpy(dtype=float)
        if descriptor.heading_unit == "deg":
            psi = np.deg2rad(psi)
        finite = np.isfinite(psi)
        psi[finite] = wrap_angle(psi[finite])
        if descriptor.y_axis == "down":
            psi[finite] = wrap_angle(-psi[finite])
        out["psi"] = psi
    out.attrs = dict(table.attrs)
    out.attrs["units"] = "canonical"
    return out


def _split_gaps(frames: np.ndarray) -> list[slice]:
    breaks = np.flatnonzero(np.diff(frames) > 1) + 1
    bounds = [0, *breaks.tolist(), len(frames)]
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def _build_trajectories(
    tracks: pd.DataFrame,
    descriptor: DatasetDescriptor,
    classes: dict,
    groups: dict,
    rate_hz: float,
    frame_base: int,
    speed_floor: float,
    id_prefix: str = "",
) -> tuple[list[Trajectory], int]:
    """Cut the canonical table into per-track trajectories; return them and the row count used."""
    source = tracks.attrs.get("source", "?")
    out: list[Trajectory] = []
    used = 0
    for tid, rows in tracks.groupby("track_id", sort=False).indices.items():
        sub = tracks.iloc[rows]
        frames = sub["frame"].to_numpy(dtype=np.int64)
        if len(frames) > 1:
            d = np.diff(frames)
            if np.any(d <= 0):
                bad = int(np.flatnonzero(d <= 0)[0]) + 1
                line = int(sub.index[bad]) + 2
                raise DataError(f"{source}:{line}: non-monotone frame {frames[bad]} for track {tid}")
        pieces = _split_gaps(frames)
        cls = classes[tid]
        for k, sl in enumerate(pieces):
            part = sub.iloc[sl]
            n = len(part)
            base_id = f"{id_prefix}{tid}"
            agent_id = base_id if len(pieces) == 1 else f"{base_id}#{k}"
            vx = part["vx"].to_numpy(dtype=float)
            vy = part["vy"].to_numpy(dtype=float)
            psi = part["psi"].to_numpy(dtype=float) if "psi" in part else np.full(n, np.nan)
            derived = not descriptor.has_heading or not np.all(np.isfinite(psi))
            if derived:
                psi = estimate_heading_series(vx, vy, speed_floor)
            ax = part["ax"].to_numpy(dtype=float) if "ax" in part else None
            ay = part["ay"].to_numpy(dtype=float) if "ay" in part else None
            if ax is not None and not (np.all(np.isfinite(ax)) and np.all(np.isfinite(ay))):
                ax = ay = None
            lane = part["lane_id"].to_numpy(dtype=np.int64) if "lane_id" in part else None
            out.append(Trajectory(
                agent_id=agent_id, agent_class=cls, frame=part["frame"].to_numpy(dtype=np.int64) - frame_base,
                x=part["x"].to_numpy(dtype=float), y=part["y"].to_numpy(dtype=float),
                vx=vx, vy=vy, psi=psi, ax=ax, ay=ay, lane_id=lane, rate_hz=rate_hz,
                heading_derived=derived, group=groups.get(tid),
                provenance=("heading_derived",) if derived else (),
            ))
            used += n
    return out, used


def _canonical_numeric(df: pd.DataFrame, skip=("track_id", "class", "lane_id", "case_id")) -> pd.DataFrame:
    out = pd.DataFrame(index=df.index)
    for col in df.columns:
        if col in skip:
            out[col] = df[col].str.strip()
        elif col in NUMERIC_FIELDS:
            out[col] = _numeric(df, col, allow_blank=col in ("psi", "ax", "ay"))
        else:
            out[col] = df[col]
    out.attrs = dict(df.attrs)
    if "lane_id" in df:
        out["lane_id"] = _lane_ids(df)
    return out


def _parse_markings(value) -> list[float]:
    text = str(value).strip()
    if not text:
        return []
    try:
        return [float(v) for v in text.split(";") if v.strip()]
    except ValueError:
        raise DataError(f"malformed lane markings {value!r}") from None


def _meta_value(meta: pd.DataFrame, column: str, default=None):
    if column not in meta or not len(meta):
        return default
    v = str(meta[column].iloc[0]).strip()
    return v if v != "" else default


def _read_levelx(descriptor, files, speed_floor) -> Recording:
    tracks = _canonical_numeric(_read_table(files["tracks"], descriptor, "tracks"))
    tmeta = _read_table(files["tracks_meta"], descriptor, "tracks_meta")
    rmeta = _read_table(files["recording_meta"], descriptor, "recording_meta")
    rows_read = len(tracks)

    rate = float(_meta_value(rmeta, "frame_rate", descriptor.native_rate_hz if descriptor.native_rate_hz != "from_meta" else "nan"))
    if not math.isfinite(rate) or rate <= 0:
        raise DataError(f"{files['recording_meta']}: missing or invalid frame rate")
    rec_num = _meta_value(rmeta, "recording_id", None)
    if rec_num is None:
        rec_num = re.match(descriptor.file_patterns["tracks"], Path(files["tracks"]).name).group("rec")
    recording_id = f"{descriptor.name}_{int(float(rec_num)):02d}"
    location = _meta_value(rmeta, "location_id", "0")
    location_id = f"{descriptor.name}_{location}"

    classes, groups = {}, {}
    for _, row in tmeta.iterrows():
        tid = row["track_id"].strip()
        classes[tid] = descriptor.map_class(row["class"])
        if "driving_direction" in row:
            groups[tid] = int(float(row["driving_direction"]))
    missing = set(tracks["track_id"]) - set(classes)
    if missing:
        raise DataError(f"{files['tracks_meta']}: no metadata for track(s) {sorted(missing, key=agent_sort_key)[:5]}")

    tracks = normalize_units(tracks, descriptor)
    frame_base = int(tracks["frame"].min()) if len(tracks) else 0
    trajs, used = _build_trajectories(tracks, descriptor, classes, groups, rate, frame_base, speed_floor)
    frame_count = int(tracks["frame"].max()) - frame_base + 1 if len(tracks) else 0

    meta = {
        "family": descriptor.family,
        "frame_transform": descriptor.frame_transform,
        "source_files": {k: str(v) for k, v in sorted(files.items())},
        "ingest_tally": {"rows_read": rows_read, "rows_kept": used, "discarded": {}},
    }
    if descriptor.frame_transform == "direction_split":
        sign = -1.0 if descriptor.y_axis == "down" else 1.0
        meta["markings"] = {
            1: sorted(sign * v for v in _parse_markings(_meta_value(rmeta, "upper_markings", ""))),
            2: sorted(sign * v for v in _parse_markings(_meta_value(rmeta, "lower_markings", ""))),
        }
        if len(tracks):
            meta["x_extent"] = (float(tracks["x"].min()), float(tracks["x"].max()))
    geo = None
    lat, lon = _meta_value(rmeta, "lat"), _meta_value(rmeta, "lon")
    if lat is not None and lon is not None:
        meta["lat_lon"] = (float(lat), float(lon))
        ux, uy = _meta_value(rmeta, "utm_x"), _meta_value(rmeta, "utm_y")
        if ux is not None and uy is not None:
            geo = (float(ux), float(uy))
    return Recording(recording_id=recording_id, dataset=descriptor.name, rate_hz=rate, frame_count=frame_count,
                     location_id=location_id, trajectories=sorted(trajs, key=lambda t: agent_sort_key(t.agent_id)),
                     geo_origin=geo, meta=meta)


def _rate_from_timestamps(tracks: pd.DataFrame, fallback: float) -> float:
    if "timestamp_ms" not in tracks or len(tracks) < 2:
        return fallback
    df = tracks[["frame", "timestamp_ms"]].drop_duplicates("frame").sort_values("frame")
    dframe = np.diff(df["frame"].to_numpy(dtype=float))
    dt = np.diff(df["timestamp_ms"].to_numpy(dtype=float))
    ok = dframe > 0
    if not ok.any():
        return fallback
    per_frame = float(np.median(dt[ok] / dframe[ok]))
    return round(1000.0 / per_frame, 6) if per_frame > 0 else fallback


def _read_sind(descriptor, files, speed_floor) -> Recording:
    parts = []
    for role in ("tracks", "ped_tracks"):
        if role in files:
            t = _read_table(files[role], descriptor, "tracks")
            if "class" not in t:
                t["class"] = "pedestrian"
            parts.append(_canonical_numeric(t))
    rows_read = sum(len(p) for p in parts)
    classes = {}
    trajs, used = [], 0
    rate = _rate_from_timestamps(parts[0], float(descriptor.native_rate_hz))
    frame_base = min(int(p["frame"].min()) for p in parts if len(p))
    for p in parts:
        for tid, cls in zip(p["track_id"], p["class"]):
            classes.setdefault(tid, descriptor.map_class(cls))
        p = normalize_units(p, descriptor)
        t, u = _build_trajectories(p, descriptor, classes, {}, rate, frame_base, speed_floor)
        trajs += t
        used += u
    frame_count = max(int(p["frame"].max()) for p in parts if len(p)) - frame_base + 1
    rec_dir = Path(files["tracks"]).parent
    return Recording(
        recording_id=f"SinD_{rec_dir.name}", dataset=descriptor.name, rate_hz=rate, frame_count=frame_count,
        location_id="SinD_0", trajectories=sorted(trajs, key=lambda t: agent_sort_key(t.agent_id)),
        meta={"family": descriptor.family, "frame_transform": descriptor.frame_transform,
              "source_files": {k: str(v) for k, v in sorted(files.items())},
              "ingest_tally": {"rows_read": rows_read, "rows_kept": used, "discarded": {}}},
    )


def _interaction_split(path: Path) -> str:
    m = re.search(r"_(train|val|test)\.csv$", path.name)
    if m:
        return m.group(1)
    for part in reversed(path.parts[:-1]):
        if part.lower() in ("train", "val", "test"):
            return part.lower()
    raise DataError(f"{path}: INTERACTION file carries no train/val/test marker in its path")


def _read_interaction(descriptor, files, speed_floor, horizon_gap: int = 100) -> Recording:
    path = Path(files["tracks"])
    raw = _read_table(path, descriptor, "tracks")
    tracks = _canonical_numeric(raw)
    rows_read = len(tracks)
    rate = _rate_from_timestamps(tracks, float(descriptor.native_rate_hz))
    m = re.match(r"^(?P<loc>.+)_(?:train|val|test)\.csv$", path.name)
    location = m.group("loc") if m else path.parent.name
    stem = path.stem
    if "case_id" not in tracks:
        tracks["case_id"] = "0"
    trajs, used = [], 0
    offset = 0
    # cases are independent snippets; lay them on one timeline with a gap so no
    # two cases ever share a step
    for case in sorted(tracks["case_id"].unique(), key=agent_sort_key):
        sub = tracks[tracks["case_id"] == case].copy()
        sub.attrs = tracks.attrs
        base = int(sub["frame"].min())
        sub["frame"] = sub["frame"] - base + offset
        classes = {tid: descriptor.map_class(c) for tid, c in zip(sub["track_id"], sub["class"])}
        sub = normalize_units(sub, descriptor)
        prefix = f"{case}:" if len(tracks["case_id"].unique()) > 1 else ""
        t, u = _build_trajectories(sub, descriptor, classes, {}, rate, 0, speed_floor, id_prefix=prefix)
        trajs += t
        used += u
        offset = int(sub["frame"].max()) + 1 + horizon_gap
    frame_count = max(offset - horizon_gap, 1)
    return Recording(
        recording_id=f"INTERACTION_{stem}", dataset=descriptor.name, rate_hz=rate, frame_count=frame_count,
        location_id=f"INTERACTION_{location}", trajectories=sorted(trajs, key=lambda t: agent_sort_key(t.agent_id)),
        meta={"family": descriptor.family, "frame_transform": descriptor.frame_transform,
              "split": _interaction_split(path), "source_files": {"tracks": str(path)},
              "ingest_tally": {"rows_read": rows_read, "rows_kept": used, "discarded": {}}},
    )


def read_recording(descriptor: DatasetDescriptor, recording_files: dict, speed_floor: float = HEADING_SPEED_FLOOR) -> Recording:
    """Parse one recording's files into a :class:`Recording` at source rate.

    Parameters
    ----------
    descriptor : DatasetDescriptor
        Adapter table for the dataset.
    recording_files : dict
        Role name to path, as produced by :func:`discover_recordings`.
    speed_floor : float
        Speed (m/s) below which a derived heading is held from the previous sample.

    Returns
    -------
    Recording
        Frames re-based to 0, units in meters / m/s / radians, y axis pointing up.
        Tracks with frame gaps are split into ``id#0``, ``id#1``, ...
    """
    files = {k: Path(v) for k, v in recording_files.items()}
    if descriptor.provisional:
        log.warning("%s adapter is provisional; validating against the headers found", descriptor.name)
    if descriptor.layout == "levelx":
        return _read_levelx(descriptor, files, speed_floor)
    if descriptor.layout == "sind":
        return _read_sind(descriptor, files, speed_floor)
    if descriptor.layout == "interaction":
        return _read_interaction(descriptor, files, speed_floor)
    raise DataError(f"{descriptor.name}: unknown layout {descriptor.layout!r}")
