import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from bevtraj.core import DataError
from bevtraj.metrics import (
    EvalConfig, PredictionSet, ade, anll, apde, brier_fde, collision_rate, evaluate, fde, load_predictions,
    miss_rate, select_mode,
)

coords = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def traj(n):
    return arrays(np.float64, (n, 2), elements=coords)


# --- select_mode ----------------------------------------------------------

def test_select_mode_single():
    gt = np.zeros((25, 2))
    assert select_mode(np.ones((1, 25, 2)), [1.0], gt) == 0


def test_select_mode_argmin_final_error():
    gt = np.zeros((3, 2))
    modes = np.zeros((2, 3, 2))
    modes[0, -1] = (3.0, 0.0)
    modes[1, -1] = (0.0, 1.0)
    assert select_mode(modes, [0.9, 0.1], gt) == 1
    assert select_mode(modes, [0.9, 0.1], gt, rule="max_prob") == 0


def test_select_mode_ties_lower_index():
    gt = np.zeros((3, 2))
    modes = np.zeros((3, 3, 2))
    modes[:, -1] = [(1, 0), (0, 1), (-1, 0)]
    assert select_mode(modes, [0.2, 0.4, 0.4], gt) == 0
    assert select_mode(modes, [0.2, 0.4, 0.4], gt, rule="max_prob") == 1


# --- ADE / FDE / APDE ------------------------------------------------------

def test_ade_constant_offset():
    gt = np.random.default_rng(0).normal(size=(25, 2))
    assert ade(gt + [3.0, 4.0], gt) == pytest.approx(5.0, abs=1e-12)


def test_ade_worked_example():
    assert ade([(0, 0), (1, 0)], [(0, 1), (1, 2)]) == 1.5


def test_ade_requires_valid_step():
    with pytest.raises(ValueError):
        ade(np.zeros((3, 2)), np.zeros((3, 2)), [False] * 3)


def test_fde_last_valid_step():
    gt = np.zeros((4, 2))
    pred = np.array([(0, 0), (0, 0), (0, 2.0), (9, 9)])
    assert fde(pred, gt) == pytest.approx(math.hypot(9, 9))
    assert fde(pred, gt, [True, True, True, False]) == 2.0
    with pytest.raises(ValueError):
        fde(pred, gt, [False] * 4)


def test_min_fde_over_modes():
    gt = np.zeros((2, 2))
    modes = np.zeros((3, 2, 2))
    modes[:, -1, 0] = [2.5, 0.7, 1.1]
    j = select_mode(modes, [1 / 3] * 3, gt)
    assert fde(modes[j], gt) == pytest.approx(0.7)


def test_apde_shift_example():
    pred = [(1, 0), (2, 0), (3, 0)]
    gt = [(0, 0), (1, 0), (2, 0)]
    assert apde(pred, gt) == pytest.approx(1 / 3, abs=1e-15)
    assert ade(pred, gt) == 1.0


def test_apde_single_step_equals_ade_and_fde():
    p, g = [(1.0, 2.0)], [(4.0, 6.0)]
    assert apde(p, g) == ade(p, g) == fde(p, g) == 5.0


@settings(max_examples=100, deadline=None)
@given(traj(6), traj(6), arrays(bool, 6))
def test_apde_matches_brute_force(pred, gt, valid):
    valid[0] = True
    assert apde(pred, gt, valid) == pytest.approx(oracles.apde(pred, gt, valid), rel=1e-12, abs=1e-12)


def test_apde_zero_when_prediction_is_gt():
    gt = np.random.default_rng(1).normal(size=(25, 2))
    assert apde(gt, gt) == 0.0 <= ade(gt, gt)


# --- MR / CR ------------------------------------------------------------------

def test_miss_rate_examples():
    assert miss_rate([0.0, 0.0]) == 0.0
    assert miss_rate([2.0]) == 0.0
    assert miss_rate([1.0, 3.0, 2.5, 0.5]) == 0.5
    with pytest.raises(ValueError):
        miss_rate([])


def test_collision_pair():
    a = np.zeros((5, 2))
    b = np.full((5, 2), 10.0)
    b[2] = (0.8, 0.0)
    assert collision_rate(np.array([a, b]), np.ones((2, 5), bool)) == 1.0


def test_collision_boundary_is_strict():
    a = np.zeros((5, 2))
    b = a + [1.0, 0.0]
    assert collision_rate(np.array([a, b]), np.ones((2, 5), bool)) == 0.0


def test_collision_three_agents_one_pair():
    a = np.zeros((5, 2))
    b = a + [0.5, 0.0]
    c = a + [50.0, 0.0]
    p = np.array([a, b, c])
    v = np.ones((3, 5), bool)
    assert collision_rate(p, v) == pytest.approx(2 / 3)
    assert collision_rate(p, v) == pytest.approx(oracles.collisions_pred_pred(p, v))


def test_collision_ignores_steps_not_valid_for_both():
    a = np.zeros((3, 2))
    b = np.array([(0.1, 0), (30, 0), (30, 0)])
    v = np.array([[True] * 3, [False, True, True]])
    assert collision_rate(np.array([a, b]), v) == 0.0


def test_collision_single_agent_is_zero():
    assert collision_rate(np.zeros((1, 4, 2)), np.ones((1, 4), bool)) == 0.0


def test_collision_pred_gt_excludes_own_row():
    pred = np.zeros((1, 4, 2))
    gt = np.stack([np.zeros((4, 2)), np.full((4, 2), 20.0)])
    assert collision_rate(pred, np.ones((1, 4), bool), "pred_gt", gt, np.ones((2, 4), bool), [0]) == 0.0
    gt[1, 3] = (0.0, 0.5)
    assert collision_rate(pred, np.ones((1, 4), bool), "pred_gt", gt, np.ones((2, 4), bool), [0]) == 1.0


# --- Brier-FDE -----------------------------------------------------------------

def _final_offset(err):
    gt = np.zeros((25, 2))
    modes = np.zeros((2, 25, 2))
    modes[0, -1] = (err, 0.0)
    return modes, gt


def test_brier_examples():
    modes, gt = _final_offset(2.0)
    assert brier_fde(modes, [1.0, 0.0], gt, 0) == 0.0
    assert brier_fde(modes, [0.5, 0.5], gt, 0) == 0.5
    assert brier_fde(modes, [0.5, 0.5], gt, 0, mode="additive") == 2.25
    assert brier_fde(modes, [0.0, 1.0], gt, 0) == 2.0


def test_brier_rejects_bad_probability():
    modes, gt = _final_offset(1.0)
    with pytest.raises(ValueError):
        brier_fde(modes, [1.5, -0.5], gt, 0)


# --- ANLL --------------------------------------------------------------------

def test_anll_unit_gaussian_at_mean():
    gt = np.random.default_rng(2).normal(size=(25, 2))
    v = anll(gt[None], np.ones((1, 25, 2)), [1.0], gt)
    assert abs(v - math.log(2 * math.pi)) < 1e-12


def test_anll_identical_modes_equal_single():
    gt = np.random.default_rng(3).normal(size=(25, 2))
    mean = gt + 0.3
    one = anll(mean[None], np.full((1, 25, 2), 0.7), [1.0], gt)
    two = anll(np.stack([mean, mean]), np.full((2, 25, 2), 0.7), [0.5, 0.5], gt)
    assert two == pytest.approx(one, abs=1e-12)


def test_anll_far_from_every_mode_is_finite():
    gt = np.zeros((25, 2))
    means = np.full((3, 25, 2), 100.0)
    v = anll(means, np.ones((3, 25, 2)), [0.2, 0.3, 0.5], gt)
    assert math.isfinite(v) and v > 1e3
    lap = anll(means, np.ones((3, 25, 2)), [0.2, 0.3, 0.5], gt, family="laplace")
    assert math.isfinite(lap) and lap > 100


def test_anll_scale_floor():
    gt = np.zeros((2, 2))
    v = anll(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)), [1.0], gt)
    assert v == pytest.approx(oracles.anll(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)), [1.0], gt, [True] * 2, "gaussian"))


def test_anll_unknown_family():
    with pytest.raises(ValueError):
        anll(np.zeros((1, 2, 2)), np.ones((1, 2, 2)), [1.0], np.zeros((2, 2)), family="cauchy")


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.sampled_from(["gaussian", "laplace"]), st.integers(0, 2**31))
def test_anll_matches_high_precision(k, family, seed):
    rng = np.random.default_rng(seed)
    n = 6
    means = rng.normal(scale=3, size=(k, n, 2))
    scales = rng.uniform(0.05, 3, size=(k, n, 2))
    probs = rng.dirichlet(np.ones(k))
    gt = rng.normal(scale=3, size=(n, 2))
    valid = rng.random(n) < 0.8
    valid[0] = True
    ref = oracles.anll(means, scales, probs, gt, valid, family)
    assert anll(means, scales, probs, gt, valid, family) == pytest.approx(ref, rel=1e-9, abs=1e-12)


# --- properties ----------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(-math.pi, math.pi), coords, coords)
def test_metrics_invariant_under_rigid_motion(seed, theta, tx, ty):
    rng = np.random.default_rng(seed)
    modes = rng.normal(scale=5, size=(3, 25, 2))
    gt = rng.normal(scale=5, size=(25, 2))
    scales = rng.uniform(0.2, 2, size=(3, 25, 2))
    probs = rng.dirichlet(np.ones(3))
    c, s = math.cos(theta), math.sin(theta)
    r = np.array([[c, -s], [s, c]])

    def move(x):
        return x @ r.T + [tx, ty]

    j = select_mode(modes, probs, gt)
    j2 = select_mode(move(modes), probs, move(gt))
    assert ade(modes[j], gt) == pytest.approx(ade(move(modes)[j2], move(gt)), abs=1e-9)
    assert fde(modes[j], gt) == pytest.approx(fde(move(modes)[j2], move(gt)), abs=1e-9)
    assert apde(modes[j], gt) == pytest.approx(apde(move(modes)[j2], move(gt)), abs=1e-9)
    # isotropic scales keep the density rotation invariant
    iso = np.repeat(scales[..., :1], 2, axis=-1)
    assert anll(modes, iso, probs, gt) == pytest.approx(anll(move(modes), iso, probs, move(gt)), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_min_fde_non_increasing_when_modes_appended(seed):
    rng = np.random.default_rng(seed)
    gt = rng.normal(size=(25, 2))
    modes = rng.normal(scale=4, size=(6, 25, 2))
    prev = math.inf
    for k in range(1, 7):
        j = select_mode(modes[:k], np.full(k, 1 / k), gt)
        cur = fde(modes[j], gt)
        assert cur <= prev
        prev = cur


def test_k1_min_equals_plain():
    rng = np.random.default_rng(5)
    gt = rng.normal(size=(25, 2))
    pred = rng.normal(size=(1, 25, 2))
    j = select_mode(pred, [1.0], gt)
    assert j == 0
    assert ade(pred[j], gt) == oracles.ade(pred[0], gt, [True] * 25)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 8, elements=st.floats(0, 10)), st.floats(0.01, 1))
def test_miss_rate_monotone(f, shrink):
    assert 0 <= miss_rate(f) <= 1
    assert miss_rate(f * shrink) <= miss_rate(f)


# --- prediction files and evaluate ----------------------------------------------

def test_prediction_probs_renormalized(caplog):
    rec = {"scenario_id": "s", "agent_id": "1", "modes": np.zeros((2, 25, 2)).tolist(), "probs": [1.0, 1.0]}
    ps = PredictionSet.from_records([(1, rec)])
    assert np.allclose(ps[("s", "1")].probs, [0.5, 0.5])
    assert "renormalized" in caplog.text


@pytest.mark.parametrize("mutate, msg", [
    (lambda r: r.update(modes=np.zeros((1, 24, 2)).tolist()), "horizon 24"),
    (lambda r: r.update(modes=np.zeros((1, 25, 3)).tolist()), "shape"),
    (lambda r: r.update(probs=[0.5, 0.5]), "probabilities"),
    (lambda r: r.update(probs=[-1.0]), "non-negative"),
    (lambda r: r.update(dist={"family": "student", "scales": []}), "family"),
])
def test_prediction_record_errors(mutate, msg):
    rec = {"scenario_id": "s", "agent_id": "1", "modes": np.zeros((1, 25, 2)).tolist(), "probs": [1.0]}
    mutate(rec)
    with pytest.raises(DataError, match=msg):
        PredictionSet.from_records([(7, rec)], source="preds.ndjson")


def test_malformed_line_cites_line_number(tmp_path):
    p = tmp_path / "p.ndjson"
    good = json.dumps({"scenario_id": "s", "agent_id": "1", "modes": np.zeros((1, 25, 2)).tolist(), "probs": [1.0]})
    p.write_text(good + "\n{not json\n")
    with pytest.raises(DataError, match=r"p\.ndjson:2"):
        load_predictions(p)


def test_eval_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(mode_rule="best")
    with pytest.raises(ValueError):
        EvalConfig(metrics=("ade", "xyz"))


def _gt_predictions(split_dir, task="multi", noise=0.0, k=1, seed=0):
    from bevtraj.records import read_split

    rng = np.random.default_rng(seed)
    items = {}
    for s in read_split(split_dir).scenarios:
        for a in s.scored_rows(task):
            modes = np.repeat(s.trg_pos[a][None], k, axis=0) + rng.normal(scale=noise, size=(k, s.pred_len, 2))
            items[(s.scenario_id, s.agent_ids[a])] = modes
    return items


def test_evaluate_gt_is_zero(highway_out):
    from bevtraj.metrics import AgentPrediction

    out, _ = highway_out
    preds = PredictionSet({key: AgentPrediction(m, np.array([1.0])) for key, m in _gt_predictions(out / "train").items()})
    rep = evaluate(out / "train", preds)
    for m in ("ade", "fde", "apde", "mr", "cr", "bfde"):
        assert rep.metrics[m] == 0.0, m
    assert rep.metrics["anll"] is None
    assert rep.counts["missing"] == 0


def test_evaluate_matches_brute_force(highway_out, tmp_path):
    """Hand-built noisy multimodal predictions scored by the naive oracle."""
    from bevtraj.metrics import write_predictions
    from bevtraj.records import read_split

    out, _ = highway_out
    split = read_split(out / "train")
    rng = np.random.default_rng(11)
    rows = []
    for s in split.scenarios:
        for a in s.scored_rows("multi"):
            k = int(rng.integers(1, 4))
            modes = s.trg_pos[a][None] + rng.normal(scale=2.0, size=(k, 25, 2))
            probs = rng.dirichlet(np.ones(k))
            scales = rng.uniform(0.3, 2, size=(k, 25, 2))
            rows.append((s.scenario_id, s.agent_ids[a], modes, probs, {"family": "laplace", "scales": scales.tolist()}))
    rng.shuffle(rows)
    path = tmp_path / "preds.ndjson"
    write_predictions(path, rows)
    rep = evaluate(out / "train", path)

    by_key = {(r[0], r[1]): r for r in rows}
    per = {}
    for s in split.scenarios:
        vals = []
        sel = []
        for a in s.scored_rows("multi"):
            _, _, modes, probs, dist = by_key[(s.scenario_id, s.agent_ids[a])]
            gt, v = s.trg_pos[a], s.ma_mask[a]
            j = oracles.select_min_fde(modes, gt, v)
            e = oracles.fde(modes[j], gt, v)
            vals.append({
                "ade": oracles.ade(modes[j], gt, v), "fde": e, "apde": oracles.apde(modes[j], gt, v),
                "mr": float(e > 2.0), "bfde": oracles.brier_paper(probs[j], e),
                "anll": oracles.anll(modes, np.array(dist["scales"]), probs, gt, v, "laplace"),
            })
            sel.append((modes[j], v))
        entry = {m: sum(x[m] for x in vals) / len(vals) for m in vals[0]}
        entry["cr"] = 0.0 if len(sel) < 2 else oracles.collisions_pred_pred([p for p, _ in sel], [v for _, v in sel])
        per[s.scenario_id] = entry
    for m in ("ade", "fde", "apde", "mr", "bfde", "anll", "cr"):
        expect = sum(e[m] for e in per.values()) / len(per)
        assert rep.metrics[m] == pytest.approx(expect, rel=1e-9, abs=1e-12), m
    for e in rep.per_scenario:
        assert e["ade"] == pytest.approx(per[e["scenario_id"]]["ade"], rel=1e-9)
    # aggregates are the mean of the dumped per-scenario values
    for m in rep.metrics:
        assert rep.metrics[m] == pytest.approx(np.mean([e[m] for e in rep.per_scenario]), abs=1e-9)


def test_evaluate_order_independent(highway_out, tmp_path):
    from bevtraj.metrics import write_predictions

    out, _ = highway_out
    items = [(sid, aid, m, [1.0]) for (sid, aid), m in _gt_predictions(out / "val", noise=1.0).items()]
    write_predictions(tmp_path / "a.ndjson", items)
    write_predictions(tmp_path / "b.ndjson", items[::-1])
    ra = evaluate(out / "val", tmp_path / "a.ndjson").to_json()
    rb = evaluate(out / "val", tmp_path / "b.ndjson").to_json()
    assert ra == rb


def test_evaluate_missing_and_unknown(highway_out, tmp_path):
    from bevtraj.metrics import write_predictions

    out, _ = highway_out
    items = [(sid, aid, m, [1.0]) for (sid, aid), m in _gt_predictions(out / "train").items()]
    write_predictions(tmp_path / "partial.ndjson", items[1:])
    with pytest.raises(DataError, match="no prediction"):
        evaluate(out / "train", tmp_path / "partial.ndjson")
    rep = evaluate(out / "train", tmp_path / "partial.ndjson", EvalConfig(allow_missing=True))
    assert rep.counts["missing"] == 1
    write_predictions(tmp_path / "bad.ndjson", items + [("nope", "1", np.zeros((1, 25, 2)), [1.0])])
    with pytest.raises(DataError, match="unknown scenario"):
        evaluate(out / "train", tmp_path / "bad.ndjson")


def test_evaluate_single_agent_task(highway_out):
    from bevtraj.metrics import AgentPrediction
    from bevtraj.records import read_split

    out, _ = highway_out
    preds = PredictionSet({key: AgentPrediction(m, np.array([1.0]))
                           for key, m in _gt_predictions(out / "train", task="single", noise=0.5).items()})
    rep = evaluate(out / "train", preds, EvalConfig(task="single"))
    assert rep.counts["agents"] == len(read_split(out / "train").scenarios)
    assert rep.metrics["cr"] == 0.0
