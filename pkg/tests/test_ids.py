import io
import json
import random

import pytest

from chunknav.corpus import (BUNDLED_SEED, BUNDLED_SIZE, bundled_path, corpus_text,
                             generate_corpus, load_bundled)
from chunknav.grammar import Action, ActionUnits, actions_from_short, flatten, parse_chunk
from chunknav.hpac import HpacConfig
from chunknav.ids import (IdsTriplet, InvalidTrajectory, MissingInstruction, Trajectory,
                          build_dataset, build_ids_triplets, build_vln_samples, compute_stats,
                          read_trajectories, render_prompt, subsample_history, validate_trajectory,
                          write_records)
from chunknav.sim.world import Pose, execute


def make_traj(short: str, eid="t0", start=Pose(1.0, 1.0, 0.0), instruction="go left"):
    actions = actions_from_short(short)
    poses = [start]
    for a in actions:
        poses.append(execute(poses[-1], [a]))
    return Trajectory(eid, instruction, actions, poses)


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(60, 17)


def test_single_chunk_triplet():
    traj = make_traj("FFFFLL")
    triplets = build_ids_triplets(traj, HpacConfig(1.0, 3))
    assert [(t.start_index, t.end_index) for t in triplets] == [(0, 6)]
    t = triplets[0]
    assert t.current_view == {"pose": [1.0, 1.0, 0.0]}
    assert t.goal_view["pose"] == traj.poses[6].to_list()
    assert t.label == "move forward 75 cm, move forward 25 cm, turn left 30 degree"


def test_frame_refs_are_carried():
    traj = make_traj("FFS")
    traj.frame_refs = [f"img{i}.png" for i in range(4)]
    t = build_ids_triplets(traj, HpacConfig(1.0, 3))
    assert t[0].current_view["frame_ref"] == "img0.png" and t[-1].goal_view["frame_ref"] == "img3.png"


def test_vln_windowing():
    # p=0 keeps every action its own sub-chunk; n=1 makes every action a chunk
    traj = make_traj("FLFRF")
    samples = build_vln_samples(traj, HpacConfig(0.0, 1), k_max=3)
    assert len(samples) == 5
    assert samples[0].target == ["move forward 25 cm", "turn left 15 degree", "move forward 25 cm"]
    assert samples[4].target == ["move forward 25 cm"]
    assert samples[4].history_indices == [0, 1, 2, 3, 4]
    assert samples[0].prompt.count("<image>") == 1


def test_subsample_history():
    assert subsample_history(list(range(8))) == list(range(8))
    assert subsample_history(list(range(15))) == [0, 2, 4, 6, 8, 10, 12, 14]
    nine = subsample_history(list(range(10, 19)))
    assert nine[0] == 10 and nine[-1] == 18 and len(nine) == 8
    assert subsample_history([3, 9], cap=1) == [9]


def test_prompts():
    ids = render_prompt("IDS")
    assert "an image of current view" in ids and "the goal view" in ids
    assert "predict the navigation action" in ids and ids.count("<image>") == 2
    vln = render_prompt("VLN", "go left")
    assert "Your assigned task is: go left" in vln
    assert "<image>,...,<image>" in vln
    assert render_prompt("VLN", "go", n_history=4).count("<image>") == 4
    assert "predict the future observation" in render_prompt("FDS", "go")
    with pytest.raises(MissingInstruction):
        render_prompt("VLN")
    with pytest.raises(ValueError):
        render_prompt("XYZ", "go")


def test_validate_trajectory():
    traj = make_traj("FFLFRRF")
    assert validate_trajectory(traj) == []
    bad = list(traj.poses)
    bad[3] = Pose(bad[3].x + 0.01, bad[3].y, bad[3].heading)
    traj.poses = bad
    # corrupting pose 3 breaks the steps into and out of it
    assert [i.index for i in validate_trajectory(traj)] == [2, 3]
    with pytest.raises(InvalidTrajectory):
        build_ids_triplets(traj)


def test_validate_flags_only_the_corrupted_end_pose():
    traj = make_traj("FFLF")
    traj.poses[-1] = Pose(traj.poses[-1].x, traj.poses[-1].y, traj.poses[-1].heading + 1)
    assert [i.index for i in validate_trajectory(traj)] == [3]


def test_trajectory_record_errors():
    good = make_traj("FFS").to_record()
    assert Trajectory.from_record(good).actions[-1] is Action.STOP
    for broken in ({**good, "poses": good["poses"][:-1]}, {**good, "actions": ["fly"]},
                   {k: v for k, v in good.items() if k != "instruction"}):
        with pytest.raises(InvalidTrajectory):
            Trajectory.from_record(broken)
    with pytest.raises(InvalidTrajectory):
        read_trajectories(["{not json"])


def test_corpus_consistency(corpus):
    triplets, samples = build_dataset(corpus)
    by_ep = {}
    for t in triplets:
        by_ep.setdefault(t.episode_id, []).append(t)
    for traj in corpus:
        ts = by_ep[traj.episode_id]
        assert ts[0].start_index == 0 and ts[-1].end_index == len(traj.actions)
        assert all(a.end_index == b.start_index for a, b in zip(ts, ts[1:]))
        for t in ts:
            label = parse_chunk(t.label).actions()
            assert label == traj.actions[t.start_index:t.end_index]
            end = execute(Pose.from_seq(t.current_view["pose"]), label)
            target = Pose.from_seq(t.goal_view["pose"])
            assert abs(end.x - target.x) <= 1e-6 and abs(end.y - target.y) <= 1e-6
    ratio = len(triplets) / len(samples)
    assert 0.7 <= ratio <= 1.0


def test_vln_targets_are_action_suffixes(corpus):
    _, samples = build_dataset(corpus, k_max=3)
    trajs = {t.episode_id: t for t in corpus}
    for s in samples:
        acts = flatten(parse_chunk(x) for x in s.target)
        traj = trajs[s.episode_id]
        assert acts == traj.actions[s.step_index:s.step_index + len(acts)]
        assert 1 <= len(s.target) <= 3
        h = s.history_indices
        assert h[-1] == s.step_index and len(h) <= 8 and h == sorted(set(h))


def test_outputs_sorted_and_deterministic(corpus):
    t1, s1 = build_dataset(list(reversed(corpus)))
    t2, s2 = build_dataset(corpus)
    a, b = io.StringIO(), io.StringIO()
    write_records(t1, a)
    write_records(t2, b)
    assert a.getvalue() == b.getvalue()
    keys = [(t.episode_id, t.start_index) for t in t1]
    assert keys == sorted(keys)
    assert IdsTriplet(**json.loads(a.getvalue().splitlines()[0])) == t1[0]


def test_stats_small():
    t = IdsTriplet("e", 0, 4, {}, {}, "x", "p")
    stats = compute_stats([t])
    assert stats.chunk_size_histogram == {4: 1}
    assert stats.progress_counts[0] == 1 and stats.progress_profile[0] == 4.0


def test_stats_histogram_total(corpus):
    triplets, _ = build_dataset(corpus)
    stats = compute_stats(triplets)
    assert sum(stats.chunk_size_histogram.values()) == len(triplets) == stats.n_chunks
    assert sum(stats.progress_counts) == len(triplets)
    assert "atomic actions per chunk" in stats.summary()


def test_oracle_trajectories_replay(corpus):
    assert all(validate_trajectory(t) == [] for t in corpus)


def test_bundled_corpus_regenerates_exactly():
    regenerated = corpus_text(generate_corpus(BUNDLED_SIZE, BUNDLED_SEED))
    assert bundled_path().read_text(encoding="utf-8") == regenerated
    assert len(load_bundled()) == BUNDLED_SIZE


def test_units_flow_through():
    units = ActionUnits(forward_cm=50, turn_deg=30)
    start = Pose(0, 0, 0)
    actions = actions_from_short("FFL")
    poses = [start]
    for a in actions:
        poses.append(execute(poses[-1], [a], None, units))
    traj = Trajectory("u", "go", actions, poses)
    (t,) = build_ids_triplets(traj, HpacConfig(1.0, 3), units)
    assert t.label == "move forward 100 cm, turn left 30 degree"
    assert validate_trajectory(traj) != []  # default units disagree with the poses
