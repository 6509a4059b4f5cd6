"""Leakage-free train/val/test partitioning and highway maneuver labeling.

Every recording is cut into 10 contiguous bins of (almost) equal width; a
seeded permutation labels eight of them train, one val and one test. An agent
belongs to the split of the bin holding its first frame, and only appears in
scenarios of that split.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .core import PRED_LEN, SPLITS, DataError, Recording, Trajectory, agent_sort_key

log = logging.getLogger(__name__)

NUM_BINS = 10
SPLIT_COUNTS = {"train": 8, "val": 1, "test": 1}
LANE_KEEP = 3
# TTLC upper bounds in 5 Hz steps for the near / mid / far classes (1, 3, 5 s)
TTLC_STEPS = (5, 15, 25)


def _rng(seed, *keys) -> np.random.Generator:
    """Generator keyed on the seed and any number of string keys; stable across runs and platforms."""
    digest = hashlib.sha256(json.dumps([seed, *map(str, keys)]).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def bin_edges(frame_count: int, num_bins: int = NUM_BINS) -> list[tuple[int, int]]:
    """Tile ``[0, frame_count)`` into ``num_bins`` half-open intervals; earlier bins take the remainder."""
    if frame_count < num_bins:
        raise DataError(f"cannot cut {frame_count} frames into {num_bins} bins")
    base, rem = divmod(frame_count, num_bins)
    edges, start = [], 0
    for k in range(num_bins):
        width = base + (1 if k < rem else 0)
        edges.append((start, start + width))
        start += width
    return edges


@dataclass(frozen=True)
class BinAssignment:
    recording_id: str
    bins: tuple
    labels: tuple
    seed: object = None

    def bin_of(self, frame: int) -> int:
        for k, (a, b) in enumerate(self.bins):
            if a <= frame < b:
                return k
        raise KeyError(frame)

    def split_of(self, frame: int) -> str:
        return self.labels[self.bin_of(frame)]

    def window_split(self, start: int, stop: int) -> Optional[str]:
        """Split shared by every bin overlapping frames ``[start, stop]``, or None if they disagree.

        Frames outside the recording are clipped away.
        """
        lo, hi = max(start, self.bins[0][0]), min(stop, self.bins[-1][1] - 1)
        labels = {self.labels[k] for k, (a, b) in enumerate(self.bins) if a <= hi and lo < b}
        return labels.pop() if len(labels) == 1 else None

    def to_dict(self) -> dict:
        return {"recording_id": self.recording_id, "bins": [list(b) for b in self.bins], "labels": list(self.labels)}


def assign_bins(recording, seed=0) -> BinAssignment:
    """Label the 10 bins of a recording 8/1/1 train/val/test with an RNG keyed on (seed, recording id)."""
    rec_id, frame_count = recording.recording_id, recording.frame_count
    if frame_count < NUM_BINS:
        raise DataError(f"recording {rec_id}: {frame_count} frames, at least {NUM_BINS} needed for the bin split")
    edges = bin_edges(frame_count)
    order = _rng(seed, "bins", rec_id).permutation(NUM_BINS)
    labels = [""] * NUM_BINS
    pos = 0
    for split in SPLITS:
        for k in order[pos:pos + SPLIT_COUNTS[split]]:
            labels[int(k)] = split
        pos += SPLIT_COUNTS[split]
    return BinAssignment(rec_id, tuple(edges), tuple(labels), seed)


def predefined_assignment(recording: Recording, split: str) -> BinAssignment:
    """Single-bin assignment for datasets that ship their own train/val/test files."""
    if split not in SPLITS:
        raise DataError(f"recording {recording.recording_id}: unknown predefined split {split!r}")
    return BinAssignment(recording.recording_id, ((0, max(recording.frame_count, 1)),), (split,), None)


def base_agent_id(agent_id: str) -> str:
    """Physical agent behind a gap-split track id (``"12#1"`` -> ``"12"``)."""
    return str(agent_id).split("#", 1)[0]


def enforce_no_leakage(assignments: dict, recordings: Iterable[Recording]) -> dict:
    """Map ``(recording_id, agent_id) -> split`` by the bin of the agent's first appearance.

    Pieces of one agent split at frame gaps share the owner of the earliest piece.
    """
    owner: dict = {}
    for rec in recordings:
        assign = assignments[rec.recording_id]
        first: dict = {}
        for t in rec.trajectories:
            b = base_agent_id(t.agent_id)
            first[b] = min(first.get(b, t.first_frame), t.first_frame)
        for t in rec.trajectories:
            owner[(rec.recording_id, t.agent_id)] = assign.split_of(first[base_agent_id(t.agent_id)])
    return owner


def label_maneuver(traj: Trajectory, anchor: int, pred_len: int = PRED_LEN, road_aligned: Optional[bool] = None) -> int:
    """Maneuver class of ``traj`` from step index ``anchor`` over the next ``pred_len`` steps.

    0-2: lane change left within 1 / 3 / 5 s, 3: lane keep, 4-6: lane change
    right within 1 / 3 / 5 s. The crossing is the first step whose lane id
    differs from the previous step's. Its side is the sign of the lateral
    displacement over that step: +y in a road-aligned frame, else to the left
    of the heading at the anchor.
    """
    if traj.lane_id is None:
        raise DataError(f"trajectory {traj.agent_id}: lane ids required for maneuver labels")
    if anchor < 0 or anchor + pred_len >= len(traj):
        raise DataError(f"trajectory {traj.agent_id}: anchor {anchor} lacks {pred_len} future steps")
    lanes = traj.lane_id[anchor:anchor + pred_len + 1]
    changes = np.flatnonzero(lanes[1:] != lanes[:-1])
    if len(changes) == 0:
        return LANE_KEEP
    k = int(changes[0]) + 1
    c = anchor + k
    if road_aligned is None:
        road_aligned = traj.group is not None
    lateral = 0.0
    for start in (c - 1, anchor):
        dx, dy = traj.x[c] - traj.x[start], traj.y[c] - traj.y[start]
        if road_aligned:
            lateral = dy
        else:
            h = traj.psi[anchor]
            lateral = -np.sin(h) * dx + np.cos(h) * dy
        if lateral != 0.0:
            break
    if lateral == 0.0:
        log.warning("trajectory %s: no lateral motion at lane change step %d; labeled left", traj.agent_id, c)
    near = next(i for i, lim in enumerate(TTLC_STEPS) if k <= lim)
    return near if lateral >= 0 else 4 + near


class Candidate(NamedTuple):
    recording_id: str
    agent_id: str
    anchor: int
    label: Optional[int]


def _candidate_key(c: Candidate):
    return (c.recording_id, c.anchor, agent_sort_key(c.agent_id))


def stratified_anchor_select(candidates: Iterable[Candidate], lk_fraction: float = 0.5, seed=0,
                             anchors_per_agent: int = 1) -> list[Candidate]:
    """Pick anchors: at most ``anchors_per_agent`` per (agent, label), all lane changes,
    and enough lane keeps to bring their share near ``lk_fraction``.

    Unlabeled candidates (non-highway data) are only subject to the per-agent cap.
    The result is sorted by (recording, anchor, agent).
    """
    if not 0.0 < lk_fraction < 1.0:
        raise ValueError(f"lane-keep fraction must lie in (0, 1), got {lk_fraction}")
    if anchors_per_agent < 1:
        raise ValueError("anchors_per_agent must be at least 1")
    groups = defaultdict(list)
    for c in candidates:
        groups[(c.recording_id, c.agent_id, c.label)].append(c)
    capped = []
    for key in sorted(groups, key=lambda k: (k[0], agent_sort_key(k[1]), -1 if k[2] is None else k[2])):
        pool = sorted(groups[key], key=_candidate_key)
        if len(pool) > anchors_per_agent:
            idx = _rng(seed, "anchor", *key).choice(len(pool), anchors_per_agent, replace=False)
            pool = [pool[i] for i in sorted(idx)]
        capped.extend(pool)

    unlabeled = [c for c in capped if c.label is None]
    lc = [c for c in capped if c.label is not None and c.label != LANE_KEEP]
    lk = [c for c in capped if c.label == LANE_KEEP]
    if lk and not lc:
        log.warning("no lane-change candidates; keeping all %d lane-keep anchors", len(lk))
        kept_lk = lk
    else:
        target = int(round(len(lc) * lk_fraction / (1.0 - lk_fraction)))
        if target >= len(lk):
            kept_lk = lk
        else:
            idx = _rng(seed, "lane_keep").choice(len(lk), target, replace=False)
            kept_lk = [lk[i] for i in sorted(idx)]
    return sorted(unlabeled + lc + kept_lk, key=_candidate_key)


def audit_leakage(splits: dict) -> dict:
    """Re-scan emitted splits for agents that occur in more than one of them.

    ``splits`` maps split name to an iterable of scenarios. Agents are keyed by
    (recording, physical agent id). Returns a JSON-serializable report.
    """
    scored: dict = defaultdict(set)
    present: dict = defaultdict(set)
    summary = {}
    for name in sorted(splits):
        n_scen = 0
        n_scored = set()
        for s in splits[name]:
            n_scen += 1
            rows = set(s.scored_rows("multi")) | {s.ta_index}
            for a, aid in enumerate(s.agent_ids):
                key = (s.rec_id, base_agent_id(aid))
                present[key].add(name)
                if a in rows:
                    scored[key].add(name)
                    n_scored.add(key)
        summary[name] = {"scenarios": n_scen, "scored_agents": len(n_scored)}

    def violations(table):
        return [{"recording_id": r, "agent_id": a, "splits": sorted(v)}
                for (r, a), v in sorted(table.items(), key=lambda kv: (kv[0][0], agent_sort_key(kv[0][1])))
                if len(v) > 1]

    sv, pv = violations(scored), violations(present)
    return {"splits": summary, "scored_violations": sv, "presence_violations": pv,
            "clean": not sv and not pv}

