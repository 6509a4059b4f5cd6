"""Static SVG rendering of a scenario over its lane graph."""

from __future__ import annotations

from typing import Optional
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .core import Scenario
from .mapgraph import EDGE_TYPES, MAP_POINT_TYPES, LaneGraph

ROLE_COLORS = {"ta": "#1f4fd6", "ma": "#1a9b3c", "ctx": "#d62728"}
MTYPE_COLORS = {
    MAP_POINT_TYPES["line_thin_solid"]: "#444444",
    MAP_POINT_TYPES["line_thin_dashed"]: "#888888",
    MAP_POINT_TYPES["line_thick_solid"]: "#222222",
    MAP_POINT_TYPES["line_thick_dashed"]: "#666666",
    MAP_POINT_TYPES["curbstone"]: "#8c6d31",
    MAP_POINT_TYPES["virtual"]: "#c7c7c7",
    MAP_POINT_TYPES["stop_line"]: "#e6550d",
    MAP_POINT_TYPES["road_border"]: "#000000",
}
DASHED_MTYPES = {MAP_POINT_TYPES["line_thin_dashed"], MAP_POINT_TYPES["line_thick_dashed"], MAP_POINT_TYPES["virtual"]}
DEFAULT_MAP_COLOR = "#aaaaaa"
MARGIN = 10.0


def agent_role(s: Scenario, a: int) -> str:
    if a == s.ta_index:
        return "ta"
    return "ma" if s.ma_mask[a].any() else "ctx"


def _points(xy: np.ndarray, flip_y: float) -> str:
    return " ".join(f"{x:.2f},{flip_y - y:.2f}" for x, y in xy)


def render_svg(s: Scenario, graph: Optional[LaneGraph] = None, width_px: int = 800) -> str:
    """SVG document showing map polylines, observed paths (solid) and futures (dotted).

    Agents are grouped in ``<g class="agent ...">`` elements colored by role:
    blue target agent, green other scored agents, red unscored context.
    """
    pts = [s.inp_pos[s.input_mask], s.trg_pos[s.valid_mask]]
    if graph is not None and graph.num_points:
        pts.append(graph.positions)
    allp = np.concatenate([p.reshape(-1, 2) for p in pts if len(p)])
    lo, hi = allp.min(axis=0) - MARGIN, allp.max(axis=0) + MARGIN
    w, h = hi - lo
    stroke = max(w, h) / 400.0
    height_px = max(1, int(round(width_px * h / w)))
    flip = hi[1]  # data y points up, SVG y points down
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" height="{height_px}" '
        f'viewBox="{lo[0]:.2f} 0 {w:.2f} {h:.2f}">',
        f"<title>{escape(s.scenario_id)}</title>",
    ]
    if graph is not None and graph.num_points:
        out.append('<g class="map">')
        succ = graph.edges[graph.etype == EDGE_TYPES["successive"]]
        for i, j in succ:
            m = int(graph.mtype[i])
            dash = f' stroke-dasharray="{3 * stroke:.2f}"' if m in DASHED_MTYPES else ""
            out.append(f'<polyline points="{_points(graph.positions[[i, j]], flip)}" fill="none" '
                       f'stroke="{MTYPE_COLORS.get(m, DEFAULT_MAP_COLOR)}" stroke-width="{stroke:.3f}"{dash}/>')
        out.append("</g>")
    order = [a for a in range(s.num_agents) if a != s.ta_index] + [s.ta_index]
    for a in order:
        role = agent_role(s, a)
        color = ROLE_COLORS[role]
        out.append(f'<g class="agent {role}" id={quoteattr("agent-" + s.agent_ids[a])}>')
        past = s.inp_pos[a][s.input_mask[a]]
        fut = s.trg_pos[a][s.valid_mask[a]]
        if len(past) > 1:
            out.append(f'<polyline points="{_points(past, flip)}" fill="none" stroke="{color}" '
                       f'stroke-width="{2 * stroke:.3f}"/>')
        if len(fut):
            path = np.vstack([past[-1:], fut]) if len(past) else fut
            out.append(f'<polyline points="{_points(path, flip)}" fill="none" stroke="{color}" '
                       f'stroke-width="{2 * stroke:.3f}" stroke-dasharray="{stroke:.2f} {2 * stroke:.2f}"/>')
        if len(past):
            x, y = past[-1]
            out.append(f'<circle cx="{x:.2f}" cy="{flip - y:.2f}" r="{4 * stroke:.3f}" fill="{color}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
