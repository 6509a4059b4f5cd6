"""Lanelet2 OSM parsing and typed lane-graph compilation.

A lane graph is a set of typed map points sampled along boundary and marking
polylines, connected by undirected typed edges: ``successive`` between
neighbouring samples of one polyline and ``pairing`` between the left and right
boundary of a lanelet.
"""

from __future__ import annotations

import json
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import DataError, Scenario
from .geodesy import Origin, project_geodetic

log = logging.getLogger(__name__)

DEFAULT_SPACING = 2.0

MAP_POINT_TYPES = {
    "unknown": 0,
    "line_thin_solid": 1,
    "line_thin_dashed": 2,
    "line_thick_solid": 3,
    "line_thick_dashed": 4,
    "curbstone": 5,
    "virtual": 6,
    "stop_line": 7,
    "guard_rail": 8,
    "road_border": 9,
    "pedestrian_marking": 10,
    "zebra_marking": 11,
    "fence": 12,
    "wall": 13,
}
EDGE_TYPES = {"successive": 0, "pairing": 1}

_PLAIN_TYPES = {k for k in MAP_POINT_TYPES if not k.startswith("line_") and k != "unknown"}


@dataclass
class RawMap:
    nodes: dict = field(default_factory=dict)
    ways: dict = field(default_factory=dict)
    relations: dict = field(default_factory=dict)

    @property
    def counts(self) -> tuple:
        return len(self.nodes), len(self.ways), len(self.relations)

    def lanelets(self) -> list:
        out = []
        for rid in sorted(self.relations):
            rel = self.relations[rid]
            if rel["tags"].get("type") != "lanelet":
                continue
            left = [ref for kind, ref, role in rel["members"] if kind == "way" and role == "left"]
            right = [ref for kind, ref, role in rel["members"] if kind == "way" and role == "right"]
            if left and right:
                out.append((rid, left[0], right[0]))
        return out


def _tags(elem) -> dict:
    return {t.get("k"): t.get("v") for t in elem.findall("tag")}


def parse_lanelet_osm(source) -> RawMap:
    """Read a Lanelet2 ``.osm`` document (path, or XML text) into a :class:`RawMap`.

    Referential integrity is checked: every node a way lists and every member
    of a relation must exist.
    """
    try:
        text = source.decode("utf-8") if isinstance(source, bytes) else source
        if isinstance(text, str) and text.lstrip().startswith("<"):
            root = ET.fromstring(text)
        else:
            root = ET.parse(source).getroot()
    except ET.ParseError as exc:
        raise DataError(f"malformed OSM XML: {exc}") from None
    if root.tag != "osm":
        raise DataError(f"not an OSM document (root element <{root.tag}>)")

    raw = RawMap()
    for n in root.iter("node"):
        nid = int(n.get("id"))
        tags = _tags(n)
        lat, lon = n.get("lat"), n.get("lon")
        if (lat is None or lon is None) and not ("local_x" in tags and "local_y" in tags):
            raise DataError(f"node {nid}: no lat/lon and no local_x/local_y")
        raw.nodes[nid] = {
            "lat": None if lat is None else float(lat),
            "lon": None if lon is None else float(lon),
            "tags": tags,
        }
    for w in root.iter("way"):
        wid = int(w.get("id"))
        refs = [int(nd.get("ref")) for nd in w.findall("nd")]
        for r in refs:
            if r not in raw.nodes:
                raise DataError(f"way {wid}: dangling reference to node {r}")
        raw.ways[wid] = {"refs": refs, "tags": _tags(w)}
    for rel in root.iter("relation"):
        rid = int(rel.get("id"))
        members = [(m.get("type"), int(m.get("ref")), m.get("role", "")) for m in rel.findall("member")]
        raw.relations[rid] = {"members": members, "tags": _tags(rel)}
    pools = {"node": raw.nodes, "way": raw.ways, "relation": raw.relations}
    for rid, rel in raw.relations.items():
        for kind, ref, _ in rel["members"]:
            if kind not in pools or ref not in pools[kind]:
                raise DataError(f"relation {rid}: dangling reference to {kind} {ref}")
    return raw


def project_nodes(raw: RawMap, origin: Optional[Origin] = None) -> dict:
    """Node id -> (x, y) meters. ``local_x``/``local_y`` tags win over lat/lon."""
    out = {}
    ids = sorted(raw.nodes)
    need = [i for i in ids if not ("local_x" in raw.nodes[i]["tags"] and "local_y" in raw.nodes[i]["tags"])]
    if need:
        if origin is None:
            raise DataError("map nodes carry only lat/lon; a projection origin is required")
        lat = np.array([raw.nodes[i]["lat"] for i in need])
        lon = np.array([raw.nodes[i]["lon"] for i in need])
        try:
            x, y = project_geodetic(lat, lon, origin)
        except ValueError as exc:
            raise DataError(f"map projection failed: {exc}") from None
        x, y = np.atleast_1d(x), np.atleast_1d(y)
        for k, i in enumerate(need):
            out[i] = (float(x[k]), float(y[k]))
    for i in ids:
        tags = raw.nodes[i]["tags"]
        if "local_x" in tags and "local_y" in tags:
            out[i] = (float(tags["local_x"]), float(tags["local_y"]))
    return out


def way_mtype(tags: dict) -> int:
    kind = tags.get("type", "")
    if kind in ("line_thin", "line_thick"):
        style = "dashed" if "dashed" in tags.get("subtype", "") else "solid"
        return MAP_POINT_TYPES[f"{kind}_{style}"]
    if kind in _PLAIN_TYPES:
        return MAP_POINT_TYPES[kind]
    return MAP_POINT_TYPES["unknown"]


def resample_polyline(xy: np.ndarray, spacing: float) -> np.ndarray:
    """Points along ``xy`` at equal arc-length steps no longer than ``spacing``; endpoints kept."""
    xy = np.asarray(xy, dtype=float)
    seg = np.hypot(*np.diff(xy, axis=0).T)
    keep = np.concatenate([[True], seg > 0])
    xy = xy[keep]
    if len(xy) < 2:
        return xy[:1]
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(xy, axis=0).T))])
    n_seg = max(1, math.ceil(s[-1] / spacing - 1e-9))
    targets = np.linspace(0.0, s[-1], n_seg + 1)
    return np.column_stack([np.interp(targets, s, xy[:, 0]), np.interp(targets, s, xy[:, 1])])


@dataclass
class LaneGraph:
    positions: np.ndarray
    mtype: np.ndarray
    edges: np.ndarray
    etype: np.ndarray
    spacing: float = DEFAULT_SPACING

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.mtype = np.asarray(self.mtype, dtype=np.int64).reshape(-1)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.etype = np.asarray(self.etype, dtype=np.int64).reshape(-1)
        p = len(self.positions)
        if len(self.mtype) != p or len(self.etype) != len(self.edges):
            raise DataError("lane graph arrays have inconsistent lengths")
        if len(self.edges):
            if self.edges.min() < 0 or self.edges.max() >= p:
                raise DataError("lane graph edge endpoint out of range")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise DataError("lane graph contains a self-loop")
        if not np.all(np.isfinite(self.positions)):
            raise DataError("lane graph contains non-finite positions")

    @property
    def num_points(self) -> int:
        return len(self.positions)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def translated(self, dx: float, dy: float) -> "LaneGraph":
        return LaneGraph(self.positions + np.array([dx, dy]), self.mtype.copy(), self.edges.copy(), self.etype.copy(), self.spacing)

    def polylines(self):
        """Yield (mtype, xy array) runs joined by successive edges, for drawing."""
        succ = self.edges[self.etype == EDGE_TYPES["successive"]]
        for i, j in succ:
            yield int(self.mtype[i]), self.positions[[i, j]]


def _empty_graph(spacing: float) -> LaneGraph:
    return LaneGraph(np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)), np.zeros(0), spacing)


def _add_polyline(points, mtypes, edges, xy, mtype) -> list[int]:
    start = len(points)
    idx = list(range(start, start + len(xy)))
    points.extend(map(tuple, xy))
    mtypes.extend([mtype] * len(xy))
    for a, b in zip(idx[:-1], idx[1:]):
        edges.add((a, b, EDGE_TYPES["successive"]))
    return idx


def _pair(left_idx, right_idx, positions, edges):
    pl = np.array([positions[i] for i in left_idx])
    pr = np.array([positions[i] for i in right_idx])
    ul = np.linspace(0.0, 1.0, len(left_idx)) if len(left_idx) > 1 else np.zeros(1)
    ur = np.linspace(0.0, 1.0, len(right_idx)) if len(right_idx) > 1 else np.zeros(1)
    same = np.hypot(*(pl[0] - pr[0])) + np.hypot(*(pl[-1] - pr[-1]))
    flipped = np.hypot(*(pl[0] - pr[-1])) + np.hypot(*(pl[-1] - pr[0]))
    if flipped < same:
        ur = 1.0 - ur
    many, few, u_many, u_few = (left_idx, right_idx, ul, ur) if len(left_idx) >= len(right_idx) else (right_idx, left_idx, ur, ul)
    for i, u in zip(many, u_many):
        j = few[int(np.argmin(np.abs(u_few - u)))]
        if i != j:
            edges.add((min(i, j), max(i, j), EDGE_TYPES["pairing"]))


def build_lane_graph(raw: RawMap, spacing: float = DEFAULT_SPACING, origin: Optional[Origin] = None,
                     positions: Optional[dict] = None) -> LaneGraph:
    """Compile a raw Lanelet2 map into a :class:`LaneGraph`.

    Ways are visited in ascending id order so the result does not depend on
    the element order of the file. Ways that are neither typed boundaries nor
    lanelet bounds (traffic signs, lights) are left out.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if not raw.ways:
        return _empty_graph(spacing)
    if positions is None:
        positions = project_nodes(raw, origin)
    lanelets = raw.lanelets()
    bounds = {w for _, l, r in lanelets for w in (l, r)}
    points: list = []
    mtypes: list = []
    edges: set = set()
    way_points: dict = {}
    for wid in sorted(raw.ways):
        way = raw.ways[wid]
        mtype = way_mtype(way["tags"])
        if mtype == MAP_POINT_TYPES["unknown"] and wid not in bounds:
            continue
        if len(way["refs"]) < 2:
            log.warning("way %d has fewer than 2 nodes; skipped", wid)
            continue
        xy = np.array([positions[r] for r in way["refs"]])
        way_points[wid] = _add_polyline(points, mtypes, edges, resample_polyline(xy, spacing), mtype)
    for _, left, right in lanelets:
        if left in way_points and right in way_points:
            _pair(way_points[left], way_points[right], points, edges)
    if not points:
        return _empty_graph(spacing)
    e = np.array(sorted(edges), dtype=np.int64).reshape(-1, 3)
    return LaneGraph(np.array(points), np.array(mtypes), e[:, :2], e[:, 2], spacing)


def highd_lane_graph(markings, x_range, spacing: float = DEFAULT_SPACING) -> LaneGraph:
    """Simplified lane graph from straight lane markings at the given lateral offsets.

    One polyline per marking from ``x_range[0]`` to ``x_range[1]``, sorted by
    offset; the outermost markings are typed solid, inner ones dashed.
    """
    if markings is None or len(markings) == 0:
        raise DataError("no lane markings given")
    if x_range is None or len(x_range) != 2 or not x_range[1] > x_range[0]:
        raise DataError(f"invalid road x-extent {x_range!r}")
    ys = sorted(float(m) for m in markings)
    points: list = []
    mtypes: list = []
    edges: set = set()
    for k, y in enumerate(ys):
        outer = k == 0 or k == len(ys) - 1
        mtype = MAP_POINT_TYPES["line_thin_solid" if outer else "line_thin_dashed"]
        line = resample_polyline(np.array([[x_range[0], y], [x_range[1], y]]), spacing)
        _add_polyline(points, mtypes, edges, line, mtype)
    e = np.array(sorted(edges), dtype=np.int64).reshape(-1, 3)
    return LaneGraph(np.array(points), np.array(mtypes), e[:, :2], e[:, 2], spacing)


def nearest_map_point(scenario: Scenario, graph: Optional[LaneGraph]) -> list:
    """Index of the map point nearest to each agent at the anchor step (None without a link)."""
    if graph is None or graph.num_points == 0:
        return [None] * scenario.num_agents
    out = []
    for a in range(scenario.num_agents):
        if not scenario.input_mask[a, -1]:
            out.append(None)
            continue
        d = np.hypot(*(graph.positions - scenario.inp_pos[a, -1]).T)
        out.append(int(np.argmin(d)))
    return out


def write_lane_graph(graph: LaneGraph, path, location_id: str, extra: Optional[dict] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "kind": "header",
        "location_id": location_id,
        "num_points": graph.num_points,
        "num_edges": graph.num_edges,
        "spacing": graph.spacing,
        "mtype_vocab": MAP_POINT_TYPES,
        "etype_vocab": EDGE_TYPES,
    }
    header.update(extra or {})
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i, ((x, y), m) in enumerate(zip(graph.positions, graph.mtype)):
            fh.write(json.dumps({"kind": "point", "index": i, "x": round(float(x), 6), "y": round(float(y), 6), "mtype": int(m)}) + "\n")
        for (i, j), t in zip(graph.edges, graph.etype):
            fh.write(json.dumps({"kind": "edge", "i": int(i), "j": int(j), "etype": int(t)}) + "\n")


def read_lane_graph(path) -> LaneGraph:
    pts, mts, edges, ets = [], [], [], []
    header = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            kind = rec.get("kind")
            if kind == "header":
                header = rec
            elif kind == "point":
                pts.append((rec["x"], rec["y"]))
                mts.append(rec["mtype"])
            elif kind == "edge":
                edges.append((rec["i"], rec["j"]))
                ets.append(rec["etype"])
    if header is None:
        raise DataError(f"{path}: lane graph has no header line")
    if len(pts) != header["num_points"] or len(edges) != header["num_edges"]:
        raise DataError(f"{path}: point/edge counts disagree with the header")
    return LaneGraph(np.array(pts).reshape(-1, 2), np.array(mts), np.array(edges).reshape(-1, 2), np.array(ets),
                     float(header.get("spacing", DEFAULT_SPACING)))
