import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factories import random_scenario
from bevtraj.core import AgentClass, DataError, Recording, Trajectory, validate_scenario
from bevtraj.scenario import (
    ScenarioConfig,
    build_scenario,
    from_agent_frame,
    normalize_coordinates,
    scenario_id,
    to_agent_frame,
)


def _line(agent_id, first, n, x0, y0, vx=1.0, vy=0.0, cls=AgentClass.CAR, group=None):
    k = np.arange(n)
    return Trajectory(agent_id, cls, first + k, x0 + vx * k / 5, y0 + vy * k / 5, np.full(n, vx), np.full(n, vy),
                      np.full(n, math.atan2(vy, vx)), rate_hz=5.0, group=group)


def _rec(trajs, frames=200, meta=None):
    return Recording("rec", "rounD", 5.0, frames, "loc", tuple(trajs), meta=meta or {})


def test_window_arithmetic():
    c = ScenarioConfig()
    assert c.obs_len == 15 and c.pred_len == 25
    assert c.obs_len * 0.2 == pytest.approx(3.0) and c.pred_len * 0.2 == pytest.approx(5.0)
    with pytest.raises(ValueError):
        ScenarioConfig(agent_frame="ego")


def test_lone_target_agent():
    s = build_scenario(_rec([_line("1", 0, 60, 0, 0)]), "1", 20)
    assert s.num_agents == 1 and s.scenario_id == scenario_id("rec", 20, "1") == "rec-000020-1"
    assert np.array_equal(s.ma_mask, s.sa_mask) and s.sa_mask.all()
    assert s.input_mask.all()
    assert s.trg_pos[0, 0, 0] == pytest.approx(21 / 5)
    validate_scenario(s)


def test_partial_input_and_rejections():
    rec = _rec([_line("1", 10, 40, 0, 0)])
    s = build_scenario(rec, "1", 14)
    assert s.input_mask[0].sum() == 5 and s.input_mask[0, -1]
    assert np.all(s.inp_pos[0, :10] == 0.0)
    assert build_scenario(rec, "1", 30) is None  # future runs past the track
    assert build_scenario(rec, "1", 5) is None  # absent at the anchor
    assert build_scenario(rec, "9", 20) is None


def test_twelve_neighbours_eight_scored():
    trajs = [_line("1", 0, 60, 0, 0)]
    dists = [5.0, 1.0, 12.0, 3.0, 7.0, 9.0, 2.0, 11.0, 4.0, 8.0, 6.0, 10.0]
    for i, d in enumerate(dists):
        trajs.append(_line(str(i + 2), 0, 60, 0, d))
    s = build_scenario(_rec(trajs), "1", 20)
    assert s.num_agents == 13
    scored = [s.agent_ids[a] for a in s.scored_rows("multi") if a != s.ta_index]
    nearest = [str(i + 2) for i in np.argsort(dists)[:8]]
    assert sorted(scored) == sorted(nearest)
    validate_scenario(s)


def test_short_future_neighbour_is_context():
    trajs = [_line("1", 0, 60, 0, 0), _line("2", 0, 35, 0, 1), _line("3", 0, 36, 0, 2)]
    s = build_scenario(_rec(trajs), "1", 20)
    rows = {aid: a for a, aid in enumerate(s.agent_ids)}
    assert s.valid_mask[rows["2"]].sum() == 14 and not s.ma_mask[rows["2"]].any()
    assert s.valid_mask[rows["3"]].sum() == 15 and s.ma_mask[rows["3"]].sum() == 15


def test_tie_break_by_agent_id():
    trajs = [_line("1", 0, 60, 0, 0), _line("10", 0, 60, 0, 3), _line("9", 0, 60, 0, -3), _line("2", 0, 60, 3, 0)]
    s = build_scenario(_rec(trajs), "1", 20, ScenarioConfig(neighbors=2))
    assert s.agent_ids == ("1", "2", "9", "10")
    assert [s.agent_ids[a] for a in s.scored_rows()] == ["1", "2", "9"]


@settings(max_examples=20, deadline=None)
@given(st.permutations(list(range(8))))
def test_content_independent_of_input_order(perm):
    rng = np.random.default_rng(0)
    base = [_line(str(i), int(rng.integers(0, 10)), 50, float(rng.integers(-5, 5)), float(rng.integers(-5, 5)))
            for i in range(8)]
    a = build_scenario(_rec(base), "0", 20)
    b = build_scenario(_rec([base[i] for i in perm]), "0", 20)
    assert a.agent_ids == b.agent_ids
    assert np.array_equal(a.trg_pos, b.trg_pos) and np.array_equal(a.ma_mask, b.ma_mask)


def test_allowed_set_and_group_filter():
    trajs = [_line("1", 0, 60, 0, 0, group=1), _line("2", 0, 60, 0, 1, group=1), _line("3", 0, 60, 0, 2, group=2)]
    s = build_scenario(_rec(trajs), "1", 20)
    assert s.agent_ids == ("1", "2")
    s = build_scenario(_rec(trajs), "1", 20, allowed={"1"})
    assert s.agent_ids == ("1",)


def test_acceleration_behind_flag():
    t = _line("1", 0, 60, 0, 0).replace(ax=np.full(60, 0.5), ay=np.zeros(60))
    assert build_scenario(_rec([t]), "1", 20).inp_acc is None
    s = build_scenario(_rec([t]), "1", 20, ScenarioConfig(include_accel=True))
    assert np.all(s.trg_acc[0, :, 0] == 0.5)


def test_translation_only_normalization():
    trajs = [_line("1", 0, 10, 10, 20), _line("2", 0, 10, -4, 2, vy=1.0)]
    rec = _rec(trajs, meta={"frame_transform": "center"})
    out = normalize_coordinates(rec, map_center=(3.0, 4.0))
    for a, b in zip(rec.trajectories, out.trajectories):
        assert np.allclose(b.x, a.x - 3.0) and np.allclose(b.y, a.y - 4.0)
        assert np.array_equal(a.vx, b.vx) and np.array_equal(a.psi, b.psi)
    assert normalize_coordinates(out) is out
    mean = normalize_coordinates(rec)
    allx = np.concatenate([t.x for t in mean.trajectories])
    assert abs(allx.mean()) < 1e-12


def _highway(vx_right=30.0):
    right = _line("1", 0, 20, 100, -20, vx=vx_right, group=2)
    left = Trajectory("2", AgentClass.TRUCK, np.arange(20), 300 - 4 * np.arange(20), np.full(20, -5.0),
                      np.full(20, -20.0), np.zeros(20), np.full(20, math.pi), rate_hz=5.0, group=1)
    meta = {"frame_transform": "direction_split", "markings": {1: [-12.0, -8.0, -4.0], 2: [-28.0, -24.0, -16.0]},
            "x_extent": (0.0, 400.0)}
    return _rec([right, left], meta=meta)


def test_direction_split_normalization():
    out = normalize_coordinates(_highway())
    right, left = out.trajectories
    # travelling +x already: shift to the lower-left corner (x min 0, lowest marking -28)
    assert right.x[0] == pytest.approx(100.0) and right.y[0] == pytest.approx(8.0)
    # opposing group: rotated by 180 degrees, heading pi -> 0, v=(-20,0) -> (20,0)
    assert left.vx[0] == pytest.approx(20.0) and left.psi[0] == pytest.approx(0.0)
    assert left.x[0] == pytest.approx(-300 + 400) and left.y[0] == pytest.approx(5.0 - 4.0)
    assert out.meta["road"]["1"]["markings"] == [0.0, 4.0, 8.0]
    assert out.meta["road"]["2"]["x_range"] == [0.0, 400.0]


def test_opposing_agent_with_zero_heading():
    rec = _highway()
    t = Trajectory("3", AgentClass.CAR, np.arange(20), np.full(20, 200.0), np.full(20, -6.0), np.full(20, 5.0),
                   np.zeros(20), np.zeros(20), rate_hz=5.0, group=1)
    rec = rec.replace(trajectories=rec.trajectories + (t,))
    moved = normalize_coordinates(rec).trajectory("3")
    assert moved.psi[0] == pytest.approx(math.pi)
    assert moved.vx[0] == pytest.approx(-5.0) and moved.vy[0] == 0.0


def test_direction_split_needs_metadata():
    rec = _highway()
    with pytest.raises(DataError):
        normalize_coordinates(rec.replace(meta={"frame_transform": "direction_split"}))
    bare = rec.replace(trajectories=tuple(t.replace(group=None) for t in rec.trajectories))
    with pytest.raises(DataError, match="direction"):
        normalize_coordinates(bare)


def test_agent_frame_pose():
    t = _line("1", 0, 60, 10.0, 5.0, vx=0.0, vy=2.0)
    s = build_scenario(_rec([t, _line("2", 0, 60, 13.0, 5.0, vx=0.0, vy=2.0)]), "1", 20)
    x0, y0 = s.inp_pos[0, -1]
    a = to_agent_frame(s)
    assert np.allclose(a.inp_pos[0, -1], 0.0, atol=1e-12) and abs(a.inp_psi[0, -1]) < 1e-12
    assert a.frame_origin == pytest.approx((x0, y0, math.pi / 2))
    # the neighbour 3 m to the east sits 3 m to the right of a north-facing agent
    assert np.allclose(a.inp_pos[1, -1], [0.0, -3.0], atol=1e-9)
    assert np.allclose(a.inp_vel[0, -1], [2.0, 0.0], atol=1e-12)
    validate_scenario(a)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
def test_agent_frame_rigid_and_invertible(seed, n):
    s = random_scenario(np.random.default_rng(seed), n)
    a = to_agent_frame(s)
    back = from_agent_frame(a)
    for name in ("inp_pos", "inp_vel", "trg_pos", "trg_vel"):
        assert np.allclose(getattr(back, name), getattr(s, name), atol=1e-9)
    dpsi = np.angle(np.exp(1j * (back.trg_psi - s.trg_psi)))
    assert np.allclose(dpsi[s.valid_mask], 0.0, atol=1e-9)
    for m in ("input_mask", "valid_mask", "sa_mask", "ma_mask"):
        assert np.array_equal(getattr(a, m), getattr(s, m))
    # pairwise distances at each target step are preserved
    for k in range(s.pred_len):
        rows = np.flatnonzero(s.valid_mask[:, k])
        for i in rows:
            for j in rows:
                d0 = np.linalg.norm(s.trg_pos[i, k] - s.trg_pos[j, k])
                d1 = np.linalg.norm(a.trg_pos[i, k] - a.trg_pos[j, k])
                assert abs(d0 - d1) < 1e-9
    # applying twice keeps the arrays and composes the origin
    twice = to_agent_frame(a)
    assert np.allclose(twice.trg_pos, a.trg_pos, atol=1e-9)
    assert np.allclose(from_agent_frame(twice).trg_pos, s.trg_pos, atol=1e-9)
