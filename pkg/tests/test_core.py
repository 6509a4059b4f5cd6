import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from factories import random_scenario
from bevtraj.core import (
    AgentClass,
    DataError,
    Recording,
    ScenarioError,
    Trajectory,
    agent_sort_key,
    validate_scenario,
    wrap_angle,
)
from bevtraj.ingest import DESCRIPTORS


@pytest.mark.parametrize("theta, expect", [(0.0, 0.0), (3 * math.pi, math.pi), (-math.pi, math.pi), (math.pi, math.pi)])
def test_wrap_angle_examples(theta, expect):
    assert wrap_angle(theta) == pytest.approx(expect, abs=1e-12)


def test_wrap_angle_rejects_non_finite():
    with pytest.raises(ValueError):
        wrap_angle(float("inf"))
    with pytest.raises(ValueError):
        wrap_angle(np.array([0.0, np.nan]))


@given(st.floats(-1e4, 1e4))
def test_wrap_angle_range_and_congruence(theta):
    w = wrap_angle(theta)
    assert -math.pi < w <= math.pi
    k = (theta - w) / (2 * math.pi)
    assert abs(k - round(k)) < 1e-9


def test_agent_class_vocabulary():
    assert [c.label for c in AgentClass] == [
        "car", "truck", "bus", "motorcycle", "bicycle", "pedestrian", "tricycle", "vru_other"]
    assert [int(c) for c in AgentClass] == list(range(8))


@pytest.mark.parametrize("name", sorted(DESCRIPTORS))
def test_class_map_is_total(name):
    d = DESCRIPTORS[name]
    assert d.class_map
    for native, token in d.class_map.items():
        assert isinstance(AgentClass(token), AgentClass), native


def test_agent_sort_key_natural_order():
    ids = ["10", "2", "2#1", "2#0", "P3", "1"]
    assert sorted(ids, key=agent_sort_key) == ["1", "2", "2#0", "2#1", "10", "P3"]


def _traj(frames, **kw):
    n = len(frames)
    args = dict(x=np.zeros(n), y=np.zeros(n), vx=np.zeros(n), vy=np.zeros(n), psi=np.zeros(n))
    args.update(kw)
    return Trajectory("1", AgentClass.CAR, frames, **args)


def test_trajectory_invariants():
    t = _traj([3, 4, 5])
    assert len(t) == 3 and t.first_frame == 3 and t.index_of(5) == 2
    assert t.points[0].frame == 3 and t.points[0].lane_id is None
    with pytest.raises(ValueError):
        t.x[0] = 1.0  # read-only
    with pytest.raises(DataError, match="unit stride"):
        _traj([0, 2])
    with pytest.raises(DataError, match="empty"):
        _traj([])
    with pytest.raises(DataError, match="non-finite"):
        _traj([0, 1], x=[0.0, np.inf])
    with pytest.raises(DataError, match="wrapped"):
        _traj([0], psi=[-math.pi])


def test_recording_frame_bounds():
    with pytest.raises(DataError, match="outside"):
        Recording("r", "highD", 25.0, 5, "1", (_traj([3, 4, 5]),))
    with pytest.raises(DataError):
        Recording("r", "highD", 0.0, 10, "1", ())


def test_valid_scenario_passes():
    rng = np.random.default_rng(0)
    for a in (1, 3, 12):
        validate_scenario(random_scenario(rng, a))


def _break(s, name, fn):
    arr = np.array(getattr(s, name))
    fn(arr, s.ta_index)
    return s.replace(**{name: arr})


@pytest.mark.parametrize("name, fn", [
    ("sa_mask", lambda m, ta: m.__setitem__(((ta + 1) % m.shape[0], 0), True)),
    ("valid_mask", lambda m, ta: m.__setitem__((ta, 3), False)),
    ("input_mask", lambda m, ta: m.__setitem__((ta, -1), False)),
    ("inp_pos", lambda x, ta: x.__setitem__((ta, 0, 0), np.nan)),
    ("trg_psi", lambda x, ta: x.__setitem__((ta, 0), 4.0)),
])
def test_invariant_violations_name_the_field(name, fn):
    s = random_scenario(np.random.default_rng(1), 3, sid="bad")
    broken = _break(s, name, fn)
    with pytest.raises(ScenarioError) as err:
        validate_scenario(broken)
    assert err.value.scenario_id == "bad"
    assert err.value.field in (name, "sa_mask", "ma_mask")


def test_ma_mask_outside_valid_rejected():
    s = random_scenario(np.random.default_rng(2), 4)
    ma = np.array(s.ma_mask)
    valid = np.array(s.valid_mask)
    other = (s.ta_index + 1) % 4
    valid[other] = False
    ma[other, 0] = True
    trg = np.array(s.trg_pos)
    trg[other] = 0.0
    vel = np.array(s.trg_vel)
    vel[other] = 0.0
    psi = np.array(s.trg_psi)
    psi[other] = 0.0
    with pytest.raises(ScenarioError, match="ma_mask"):
        validate_scenario(s.replace(ma_mask=ma, valid_mask=valid, trg_pos=trg, trg_vel=vel, trg_psi=psi))


def test_sentinel_required_in_masked_slots():
    s = random_scenario(np.random.default_rng(3), 3)
    inp = np.array(s.inp_pos)
    mask = np.array(s.input_mask)
    row = (s.ta_index + 1) % 3
    mask[row, 0] = False
    inp[row, 0] = (1.0, 1.0)
    with pytest.raises(ScenarioError, match="sentinel"):
        validate_scenario(s.replace(inp_pos=inp, input_mask=mask))


def test_too_many_scored_neighbours():
    s = random_scenario(np.random.default_rng(4), 12)
    valid = np.array(s.valid_mask)
    valid[:] = True
    with pytest.raises(ScenarioError):
        validate_scenario(s.replace(ma_mask=valid, valid_mask=valid), max_neighbors=8)


@given(st.integers(0, 2**31 - 1), st.integers(1, 14))
def test_mask_algebra_on_generated_scenarios(seed, a):
    s = random_scenario(np.random.default_rng(seed), a)
    validate_scenario(s)
    assert not np.any(s.sa_mask & ~s.valid_mask)
    assert not np.any(s.ma_mask & ~s.valid_mask)
    assert np.array_equal(s.ma_mask[s.ta_index], s.sa_mask[s.ta_index])
