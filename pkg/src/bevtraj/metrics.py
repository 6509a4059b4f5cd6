"""Displacement, miss, collision and likelihood metrics for multimodal trajectory predictions.

All distance metrics are evaluated on one selected mode per agent; by default
the mode whose last valid position is closest to the ground truth.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import PRED_LEN, DataError
from .records import SplitSet, read_split

log = logging.getLogger(__name__)

MISS_THRESHOLD = 2.0
COLLISION_THRESHOLD = 1.0
SCALE_FLOOR = 1e-6
PROB_TOLERANCE = 1e-6
METRICS = ("ade", "fde", "apde", "mr", "cr", "bfde", "anll")
MODE_RULES = ("min_fde", "max_prob")
CR_RULES = ("pred_pred", "pred_gt")
BRIER_MODES = ("paper", "additive")
FAMILIES = ("gaussian", "laplace")


def _valid(valid, n: int) -> np.ndarray:
    return np.ones(n, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)


def _last_valid(valid: np.ndarray) -> int:
    idx = np.flatnonzero(valid)
    if len(idx) == 0:
        raise ValueError("no valid ground-truth step")
    return int(idx[-1])


def select_mode(modes, probs, gt, valid=None, rule: str = "min_fde") -> int:
    """Index of the evaluated mode; ties go to the lower index."""
    modes = np.asarray(modes, dtype=float)
    if rule == "max_prob":
        return int(np.argmax(np.asarray(probs, dtype=float)))
    if rule != "min_fde":
        raise ValueError(f"unknown mode rule {rule!r}")
    k = _last_valid(_valid(valid, modes.shape[1]))
    err = np.linalg.norm(modes[:, k] - np.asarray(gt, dtype=float)[k], axis=-1)
    return int(np.argmin(err))


def ade(pred, gt, valid=None) -> float:
    """Mean Euclidean error over the valid steps."""
    pred, gt = np.asarray(pred, dtype=float), np.asarray(gt, dtype=float)
    v = _valid(valid, len(gt))
    if not v.any():
        raise ValueError("ADE needs at least one valid step")
    return float(np.mean(np.linalg.norm(pred[v] - gt[v], axis=-1)))


def fde(pred, gt, valid=None) -> float:
    """Euclidean error at the last valid step."""
    pred, gt = np.asarray(pred, dtype=float), np.asarray(gt, dtype=float)
    k = _last_valid(_valid(valid, len(gt)))
    return float(np.linalg.norm(pred[k] - gt[k]))


def apde(pred, gt, valid=None) -> float:
    """Mean over valid predicted steps of the distance to the nearest valid ground-truth point.

    Unlike ADE this ignores timing: a prediction that follows the right path
    at the wrong speed scores well.
    """
    pred, gt = np.asarray(pred, dtype=float), np.asarray(gt, dtype=float)
    v = _valid(valid, len(gt))
    if not v.any():
        raise ValueError("APDE needs at least one valid step")
    d = np.linalg.norm(pred[v][:, None, :] - gt[v][None, :, :], axis=-1)
    return float(np.mean(d.min(axis=1)))


def miss_rate(fdes: Sequence[float], threshold: float = MISS_THRESHOLD) -> float:
    """Fraction of final errors strictly above ``threshold`` (an error of exactly 2 m is a hit)."""
    f = np.asarray(fdes, dtype=float)
    if f.size == 0:
        raise ValueError("miss rate of an empty set")
    return float(np.mean(f > threshold))


def collision_rate(pred, valid, rule: str = "pred_pred", gt=None, gt_valid=None, rows=None,
                   threshold: float = COLLISION_THRESHOLD) -> float:
    """Fraction of scored agents that come closer than ``threshold`` to another agent.

    ``pred`` [A, N, 2] holds the selected-mode prediction of each scored agent,
    ``valid`` [A, N] its valid steps. Under ``pred_pred`` agents are compared
    with each other's predictions; under ``pred_gt`` with the ground truth of
    every other agent in ``gt`` [B, N, 2] / ``gt_valid`` [B, N], where
    ``rows[a]`` is scored agent ``a``'s own row in ``gt``. Both members of a
    colliding pair count.
    """
    pred = np.asarray(pred, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    a_count = len(pred)
    if a_count == 0:
        raise ValueError("collision rate of an empty set")
    if rule == "pred_pred":
        other, other_valid = pred, valid
        own = np.arange(a_count)
    elif rule == "pred_gt":
        if gt is None:
            raise ValueError("pred_gt collision rule needs ground truth")
        other = np.asarray(gt, dtype=float)
        other_valid = np.ones(other.shape[:2], bool) if gt_valid is None else np.asarray(gt_valid, dtype=bool)
        own = np.arange(a_count) if rows is None else np.asarray(rows)
    else:
        raise ValueError(f"unknown collision rule {rule!r}")
    d = np.linalg.norm(pred[:, None] - other[None, :], axis=-1)
    both = valid[:, None] & other_valid[None, :]
    hit = (d < threshold) & both
    hit[np.arange(a_count), own] = False
    return float(np.mean(hit.any(axis=(1, 2))))


def brier_fde(modes, probs, gt, j: int, valid=None, mode: str = "paper") -> float:
    """Final error of mode ``j`` weighted by its probability.

    ``paper``: (1 - p_j)^2 * FDE_j. ``additive``: FDE_j + (1 - p_j)^2.
    """
    p = float(np.asarray(probs, dtype=float)[j])
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mode probability {p} outside [0, 1]")
    err = fde(np.asarray(modes, dtype=float)[j], gt, valid)
    if mode == "paper":
        return (1.0 - p) ** 2 * err
    if mode == "additive":
        return err + (1.0 - p) ** 2
    raise ValueError(f"unknown brier mode {mode!r}")


def _log_density(x, mean, scale, family: str) -> np.ndarray:
    """Per-axis-summed log density; x [N, 2], mean/scale [K, N, 2] -> [K, N]."""
    z = (x[None] - mean) / scale
    if family == "gaussian":
        lp = -0.5 * z**2 - np.log(scale) - 0.5 * math.log(2 * math.pi)
    elif family == "laplace":
        lp = -np.abs(z) - np.log(2 * scale)
    else:
        raise ValueError(f"unknown distribution family {family!r}")
    return lp.sum(axis=-1)


def anll(means, scales, probs, gt, valid=None, family: str = "gaussian") -> float:
    """Mean over valid steps of the negative log mixture density of the ground truth.

    Components are axis-independent Gaussians or Laplace distributions with
    the given per-step scales (floored at 1e-6), weighted by ``probs``.
    """
    means = np.asarray(means, dtype=float)
    scales = np.maximum(np.asarray(scales, dtype=float), SCALE_FLOOR)
    gt = np.asarray(gt, dtype=float)
    v = _valid(valid, len(gt))
    if not v.any():
        raise ValueError("ANLL needs at least one valid step")
    with np.errstate(divide="ignore"):
        logw = np.log(np.asarray(probs, dtype=float))
    terms = logw[:, None] + _log_density(gt[v], means[:, v], scales[:, v], family)
    top = terms.max(axis=0)
    if np.any(np.isneginf(top)):
        return math.inf
    lse = top + np.log(np.exp(terms - top).sum(axis=0))
    return float(-np.mean(lse))


# ---------------------------------------------------------------------------
# prediction files
# ---------------------------------------------------------------------------

@dataclass
class AgentPrediction:
    modes: np.ndarray
    probs: np.ndarray
    family: Optional[str] = None
    scales: Optional[np.ndarray] = None

    @property
    def num_modes(self) -> int:
        return len(self.probs)


class PredictionSet(dict):
    """Mapping ``(scenario_id, agent_id) -> AgentPrediction``."""

    @classmethod
    def from_records(cls, records, pred_len: int = PRED_LEN, source: str = "<records>") -> "PredictionSet":
        out = cls()
        for lineno, rec in records:
            where = f"{source}:{lineno}"
            try:
                sid, aid = str(rec["scenario_id"]), str(rec["agent_id"])
                modes = np.asarray(rec["modes"], dtype=float)
                probs = np.asarray(rec.get("probs", [1.0] * len(rec["modes"])), dtype=float)
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{where}: malformed prediction record ({exc})") from None
            name = f"{where} (scenario {sid}, agent {aid})"
            if modes.ndim != 3 or modes.shape[0] < 1 or modes.shape[2] != 2:
                raise DataError(f"{name}: modes must have shape [K, {pred_len}, 2], got {list(modes.shape)}")
            if modes.shape[1] != pred_len:
                raise DataError(f"{name}: horizon {modes.shape[1]} != {pred_len}")
            if probs.shape != (modes.shape[0],):
                raise DataError(f"{name}: {probs.size} probabilities for {modes.shape[0]} modes")
            if not (np.all(np.isfinite(modes)) and np.all(np.isfinite(probs))):
                raise DataError(f"{name}: non-finite values")
            if np.any(probs < 0) or probs.sum() <= 0:
                raise DataError(f"{name}: probabilities must be non-negative with a positive sum")
            if abs(probs.sum() - 1.0) > PROB_TOLERANCE:
                log.warning("%s: probabilities sum to %.6g; renormalized", name, probs.sum())
                probs = probs / probs.sum()
            family = scales = None
            dist = rec.get("dist")
            if dist is not None:
                family = dist.get("family")
                if family not in FAMILIES:
                    raise DataError(f"{name}: unknown distribution family {family!r}")
                scales = np.asarray(dist.get("scales"), dtype=float)
                if scales.shape != modes.shape:
                    raise DataError(f"{name}: scales shape {list(scales.shape)} != modes shape {list(modes.shape)}")
            if (sid, aid) in out:
                raise DataError(f"{name}: duplicate prediction")
            out[(sid, aid)] = AgentPrediction(modes, probs, family, scales)
        return out


def load_predictions(path, pred_len: int = PRED_LEN) -> PredictionSet:
    def records():
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    yield lineno, json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
    return PredictionSet.from_records(records(), pred_len, str(path))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    mode_rule: str = "min_fde"
    cr_rule: str = "pred_pred"
    brier: str = "paper"
    task: str = "multi"
    allow_missing: bool = False
    metrics: tuple = METRICS
    miss_threshold: float = MISS_THRESHOLD
    collision_threshold: float = COLLISION_THRESHOLD

    def __post_init__(self):
        for value, allowed, what in ((self.mode_rule, MODE_RULES, "mode rule"), (self.cr_rule, CR_RULES, "collision rule"),
                                     (self.brier, BRIER_MODES, "brier mode"), (self.task, ("single", "multi"), "task")):
            if value not in allowed:
                raise ValueError(f"unknown {what} {value!r}; choose from {', '.join(allowed)}")
        unknown = set(self.metrics) - set(METRICS)
        if unknown:
            raise ValueError(f"unknown metric(s) {sorted(unknown)}; choose from {', '.join(METRICS)}")
        object.__setattr__(self, "metrics", tuple(m for m in METRICS if m in self.metrics))


@dataclass
class MetricReport:
    metrics: dict
    counts: dict
    per_scenario: list
    config: dict
    missing: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _agent_values(p: AgentPrediction, gt, valid, cfg: EvalConfig) -> tuple[int, dict]:
    j = select_mode(p.modes, p.probs, gt, valid, cfg.mode_rule)
    sel = p.modes[j]
    f = fde(sel, gt, valid)
    out = {"ade": ade(sel, gt, valid), "fde": f, "apde": apde(sel, gt, valid),
           "mr": float(f > cfg.miss_threshold), "bfde": brier_fde(p.modes, p.probs, gt, j, valid, cfg.brier)}
    if p.family is not None:
        out["anll"] = anll(p.modes, p.scales, p.probs, gt, valid, p.family)
    return j, out


def evaluate(split, predictions, config: EvalConfig = EvalConfig()) -> MetricReport:
    """Score ``predictions`` against the ground truth of a split.

    ``split`` is a split directory or a loaded :class:`SplitSet`;
    ``predictions`` a prediction NDJSON file or a :class:`PredictionSet`.
    Per-scenario values average the scored agents; aggregates average the
    scenarios. Missing predictions fail the run unless ``allow_missing``.
    """
    if not isinstance(split, SplitSet):
        split = read_split(split)
    scenarios = sorted(split.scenarios, key=lambda s: s.scenario_id)
    pred_len = scenarios[0].pred_len if scenarios else PRED_LEN
    if not isinstance(predictions, PredictionSet):
        predictions = load_predictions(predictions, pred_len)

    known = {s.scenario_id: s for s in scenarios}
    for sid, aid in sorted(predictions):
        if sid not in known:
            raise DataError(f"prediction for unknown scenario {sid!r} (agent {aid})")
        if aid not in known[sid].agent_ids:
            raise DataError(f"prediction for unknown agent {aid!r} in scenario {sid!r}")

    wanted = config.metrics
    per_scenario, missing = [], []
    n_agents = n_anll = excluded = ignored = 0
    k_max = 0
    for s in scenarios:
        rows = s.scored_rows(config.task)
        mask = s.ma_mask if config.task == "multi" else s.sa_mask
        values, sel_pred, sel_valid, sel_rows = [], [], [], []
        for a in rows:
            p = predictions.get((s.scenario_id, s.agent_ids[a]))
            if p is None:
                missing.append({"scenario_id": s.scenario_id, "agent_id": s.agent_ids[a]})
                continue
            gt, valid = s.trg_pos[a], mask[a]
            if p.modes.shape[1] != s.pred_len:
                raise DataError(f"scenario {s.scenario_id}, agent {s.agent_ids[a]}: horizon {p.modes.shape[1]} != {s.pred_len}")
            j, vals = _agent_values(p, gt, valid, config)
            values.append(vals)
            sel_pred.append(p.modes[j])
            sel_valid.append(valid)
            sel_rows.append(a)
            k_max = max(k_max, p.num_modes)
        ignored += sum(1 for a in range(s.num_agents) if a not in rows and (s.scenario_id, s.agent_ids[a]) in predictions)
        if not values:
            excluded += 1
            continue
        n_agents += len(values)
        entry = {"scenario_id": s.scenario_id, "agents": len(values)}
        for m in ("ade", "fde", "apde", "mr", "bfde"):
            if m in wanted:
                entry[m] = float(np.mean([v[m] for v in values]))
        if "cr" in wanted:
            if config.cr_rule == "pred_pred" and len(values) < 2:
                entry["cr"] = 0.0
            else:
                entry["cr"] = collision_rate(np.array(sel_pred), np.array(sel_valid), config.cr_rule,
                                             s.trg_pos, s.valid_mask, sel_rows, config.collision_threshold)
        if "anll" in wanted:
            with_dist = [v["anll"] for v in values if "anll" in v]
            n_anll += len(with_dist)
            entry["anll"] = float(np.mean(with_dist)) if with_dist else None
        per_scenario.append(entry)

    if missing and not config.allow_missing:
        head = ", ".join(f"{m['scenario_id']}/{m['agent_id']}" for m in missing[:5])
        raise DataError(f"{len(missing)} scored agent(s) have no prediction (first: {head}); pass --allow-missing to skip them")

    aggregates = {}
    for m in wanted:
        vals = [e[m] for e in per_scenario if e.get(m) is not None]
        aggregates[m] = float(np.mean(vals)) if vals else None
    counts = {"scenarios": len(per_scenario), "agents": n_agents, "missing": len(missing),
              "excluded_scenarios": excluded, "anll_agents": n_anll, "ignored_predictions": ignored}
    cfg = {"k": k_max, "mode_rule": config.mode_rule, "cr_rule": config.cr_rule, "brier": config.brier,
           "task": config.task, "miss_threshold": config.miss_threshold,
           "collision_threshold": config.collision_threshold, "metrics": list(wanted),
           "allow_missing": config.allow_missing}
    return MetricReport(aggregates, counts, per_scenario, cfg, missing)


def write_predictions(path, items) -> None:
    """Write ``(scenario_id, agent_id, modes, probs[, dist])`` tuples as prediction NDJSON."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            sid, aid, modes, probs = item[:4]
            rec = {"scenario_id": sid, "agent_id": aid, "modes": np.asarray(modes).tolist(),
                   "probs": np.asarray(probs).tolist()}
            if len(item) > 4 and item[4] is not None:
                rec["dist"] = item[4]
            fh.write(json.dumps(rec) + "\n")
