"""End-to-end preprocessing: raw recordings to train/val/test split directories."""

from __future__ import annotations

import json
import logging
import re
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import SPLITS, DataError, Recording
from .geodesy import UtmOrigin, utm_zone
from .ingest import HEADING_SPEED_FLOOR, DatasetDescriptor, detect_dataset, discover_recordings, get_descriptor, read_recording
from .mapgraph import DEFAULT_SPACING, build_lane_graph, highd_lane_graph, parse_lanelet_osm, project_nodes, write_lane_graph
from .partition import (
    Candidate, assign_bins, audit_leakage, enforce_no_leakage, label_maneuver, predefined_assignment,
    stratified_anchor_select,
)
from .records import write_split
from .resample import FilterSpec, resample_recording
from .scenario import ScenarioConfig, build_scenario, normalize_coordinates

log = logging.getLogger(__name__)

AUDIT_NAME = "leakage_audit.json"
SUMMARY_NAME = "summary.json"


class StageError(DataError):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


@dataclass
class ProcessOptions:
    dataset: str = "auto"
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    filter: FilterSpec = field(default_factory=FilterSpec)
    target_rate: float = 5.0
    heading_speed_floor: float = HEADING_SPEED_FLOOR
    lk_fraction: Union[float, dict] = 0.5
    anchors_per_agent: int = 1
    map_spacing: float = DEFAULT_SPACING
    binary: bool = False

    def lk_fraction_for(self, dataset: str) -> float:
        if isinstance(self.lk_fraction, dict):
            return float(self.lk_fraction.get(dataset, self.lk_fraction.get("*", 0.5)))
        return float(self.lk_fraction)

    def echo(self) -> dict:
        return {
            **asdict(self.scenario), "seed": self.seed, "target_rate_hz": self.target_rate,
            "filter": asdict(self.filter), "heading_speed_floor": self.heading_speed_floor,
            "lk_fraction": self.lk_fraction, "anchors_per_agent": self.anchors_per_agent,
            "map_spacing": self.map_spacing,
        }


class _stage:
    """Context manager re-raising data errors tagged with the pipeline stage."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, DataError) and not isinstance(exc, StageError):
            raise StageError(self.name, str(exc)) from exc
        return False


def find_map_file(input_dir: Path, location: str) -> Optional[Path]:
    """Lanelet2 file for a native location id: ``<loc>.osm``, ``location<loc>.osm`` or any
    ``.osm`` inside a directory named ``<loc>`` / ``<NN>_*``; a single ``.osm`` serves every location."""
    maps = sorted(Path(input_dir).rglob("*.osm"))
    if not maps:
        return None
    loc = str(location)
    num = int(loc) if loc.isdigit() else None
    for p in maps:
        if p.stem == loc or p.stem == f"location{loc}":
            return p
        for part in p.parent.parts:
            if part == loc or (num is not None and re.match(rf"^0*{num}(_|$)", part)):
                return p
    return maps[0] if len(maps) == 1 else None


def _map_origin(rec: Recording):
    if rec.geo_origin is not None and "lat_lon" in rec.meta:
        _, lon = rec.meta["lat_lon"]
        return UtmOrigin(utm_zone(lon), rec.geo_origin[0], rec.geo_origin[1], rec.meta["lat_lon"][0] < 0)
    if "lat_lon" in rec.meta:
        return tuple(rec.meta["lat_lon"])
    return (0.0, 0.0)


def _native_location(rec: Recording) -> str:
    return rec.location_id.split("_", 1)[1] if "_" in rec.location_id else rec.location_id


def _lanelet_map(rec: Recording, input_dir: Path, spacing: float, cache: dict):
    """(graph, center) for the recording's location, or (None, None) without a map file."""
    key = rec.location_id
    if key not in cache:
        path = find_map_file(input_dir, _native_location(rec))
        if path is None:
            log.info("%s: no Lanelet2 map found for location %s", rec.recording_id, key)
            cache[key] = (None, None)
        else:
            raw = parse_lanelet_osm(path)
            pos = project_nodes(raw, _map_origin(rec))
            if pos:
                center = tuple(np.mean(np.array(list(pos.values())), axis=0))
            else:
                center = None
            graph = build_lane_graph(raw, spacing, positions=pos)
            if center is not None:
                graph = graph.translated(-center[0], -center[1])
            cache[key] = (graph, center)
    return cache[key]


def _candidates(rec: Recording, assign, owner: dict, split: str, cfg: ScenarioConfig, labeled: bool) -> list:
    out = []
    for t in rec.trajectories:
        if owner[(rec.recording_id, t.agent_id)] != split:
            continue
        for i in range(len(t) - cfg.pred_len):
            f = int(t.frame[i])
            if assign.window_split(f - cfg.obs_len + 1, f + cfg.pred_len) != split:
                continue
            label = label_maneuver(t, i, cfg.pred_len) if labeled else None
            out.append(Candidate(rec.recording_id, t.agent_id, f, label))
    return out


def load_recordings(input_dir, options: ProcessOptions) -> tuple[DatasetDescriptor, list]:
    """Ingest and resample every recording under ``input_dir``."""
    input_dir = Path(input_dir)
    with _stage("ingest"):
        descriptor = detect_dataset(input_dir) if options.dataset == "auto" else get_descriptor(options.dataset)
        groups = discover_recordings(descriptor, input_dir)
        if not groups:
            raise DataError(f"{input_dir}: no {descriptor.name} recordings found")
        recs = [read_recording(descriptor, g, options.heading_speed_floor) for g in groups]
    if descriptor.provisional:
        log.warning("%s adapter is provisional; check the column mapping against real files", descriptor.name)
    with _stage("resample"):
        recs = [resample_recording(r, options.filter, options.target_rate, speed_floor=options.heading_speed_floor)
                for r in recs]
    return descriptor, recs


def process(input_dir, output_dir, options: ProcessOptions = ProcessOptions()) -> dict:
    """Run ingest, resampling, normalization, partitioning, map compilation and
    scenario assembly; write one directory per split plus ``maps/``.

    Returns the summary that is also written to ``summary.json``.
    """
    input_dir, output_dir = Path(input_dir), Path(output_dir)
    descriptor, recs = load_recordings(input_dir, options)
    cfg = options.scenario
    labeled = descriptor.family == "highway"

    maps: dict = {}
    loc_cache: dict = {}
    normalized = []
    with _stage("mapgraph"):
        for rec in recs:
            center = None
            if descriptor.has_lanelet:
                graph, center = _lanelet_map(rec, input_dir, options.map_spacing, loc_cache)
                if graph is not None:
                    maps[rec.location_id] = graph
            with _stage("normalize"):
                rec = normalize_coordinates(rec, center)
            if descriptor.frame_transform == "direction_split":
                for g, road in sorted(rec.meta["road"].items()):
                    maps[f"{rec.recording_id}_d{g}"] = highd_lane_graph(road["markings"], road["x_range"], options.map_spacing)
            normalized.append(rec)

    with _stage("partition"):
        assignments = {}
        for rec in normalized:
            if descriptor.predefined_splits:
                assignments[rec.recording_id] = predefined_assignment(rec, rec.meta.get("split", ""))
            else:
                assignments[rec.recording_id] = assign_bins(rec, options.seed)
        owner = enforce_no_leakage(assignments, normalized)
        selected = {s: [] for s in SPLITS}
        for split in SPLITS:
            cands = []
            for rec in normalized:
                cands += _candidates(rec, assignments[rec.recording_id], owner, split, cfg, labeled)
            selected[split] = stratified_anchor_select(
                cands, options.lk_fraction_for(descriptor.name), options.seed, options.anchors_per_agent)

    recs_by_id = {r.recording_id: r for r in normalized}
    splits = {}
    tally = defaultdict(int)
    members = defaultdict(set)
    for (rid, aid), sp in owner.items():
        members[(rid, sp)].add(aid)
    with _stage("scenario"):
        for split in SPLITS:
            out = []
            for c in selected[split]:
                rec = recs_by_id[c.recording_id]
                allowed = members[(rec.recording_id, split)]
                ta = rec.trajectory(c.agent_id)
                if ta.group is not None and descriptor.frame_transform == "direction_split":
                    ref = f"{rec.recording_id}_d{ta.group}"
                else:
                    ref = rec.location_id if rec.location_id in maps else None
                s = build_scenario(rec, c.agent_id, c.anchor, cfg, allowed, c.label, ref)
                if s is None:
                    tally["rejected"] += 1
                    continue
                out.append(s)
            splits[split] = out

    with _stage("write"):
        output_dir.mkdir(parents=True, exist_ok=True)
        manifests = {}
        config = options.echo()
        config["dataset"] = descriptor.name
        for split in SPLITS:
            manifests[split] = write_split(splits[split], output_dir / split, split=split, seed=options.seed,
                                           config=config, binary=options.binary)
        map_dir = output_dir / "maps"
        for ref in sorted(maps):
            write_lane_graph(maps[ref], map_dir / f"{ref}.ndjson", ref)
        audit = audit_leakage(splits)
        audit["assignments"] = [assignments[r].to_dict() for r in sorted(assignments)]
        _write_json(output_dir / AUDIT_NAME, audit)
        summary = {
            "dataset": descriptor.name,
            "recordings": [r.recording_id for r in normalized],
            "splits": {s: {k: manifests[s][k] for k in ("count", "num_trajectories", "num_unique_agents",
                                                         "maneuver_histogram", "class_histogram")}
                       for s in SPLITS},
            "maps": sorted(maps),
            "rejected_anchors": tally["rejected"],
            "leakage_clean": audit["clean"],
        }
        _write_json(output_dir / SUMMARY_NAME, summary)
    if not audit["clean"]:
        raise StageError("audit", f"leakage audit found violations; see {output_dir / AUDIT_NAME}")
    return summary


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
