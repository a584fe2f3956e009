import random

import pytest

from chunknav.grammar import Action, ActionChunk, ActionUnits
from chunknav.hpac import HpacConfig, chunk_trajectory, make_rng
from chunknav.sim.recover import NotReachable, recover_chunk
from chunknav.sim.world import Pose, execute, heading_delta, parse_world

from conftest import MOVES


def lands(start, end, chunk, units=ActionUnits()):
    pose = execute(start, chunk.actions(), None, units)
    return (abs(pose.x - end.x) <= 1e-6 and abs(pose.y - end.y) <= 1e-6
            and abs(heading_delta(pose.heading, end.heading)) <= 1e-6)


def test_examples():
    assert recover_chunk(Pose(0, 0, 0), Pose(0.75, 0, 0)) == ActionChunk.of(("F", 3))
    assert recover_chunk(Pose(0, 0, 0), Pose(0, 0, 30)) == ActionChunk.of(("L", 2))
    assert recover_chunk(Pose(0, 0, 0), Pose(0, 0, 330)) == ActionChunk.of(("R", 2))


def test_canonical_turn_forward_turn():
    start = Pose(1.0, 1.0, 0.0)
    end = execute(start, [Action.TURN_LEFT] * 6 + [Action.FORWARD] * 4 + [Action.TURN_RIGHT] * 2)
    assert recover_chunk(start, end) == ActionChunk.of(("L", 3), ("L", 3), ("F", 3), ("F", 1), ("R", 2))


def test_two_runs():
    start = Pose(0.0, 0.0, 10.0)
    end = execute(start, [Action.FORWARD] * 2 + [Action.TURN_LEFT] * 3 + [Action.FORWARD])
    chunk = recover_chunk(start, end)
    assert lands(start, end, chunk)


def test_coinciding_poses_give_stop():
    assert recover_chunk(Pose(1, 2, 45), Pose(1, 2, 45)) == ActionChunk.of(("S", 1))


def test_off_lattice_targets():
    start = Pose(0, 0, 0)
    with pytest.raises(NotReachable):
        recover_chunk(start, Pose(0, 0, 7))
    with pytest.raises(NotReachable):
        recover_chunk(start, Pose(0.3, 0, 0))
    with pytest.raises(NotReachable):
        recover_chunk(start, Pose(0.25, 0.01, 0))


def test_other_units():
    units = ActionUnits(forward_cm=10, turn_deg=45)
    start = Pose(0, 0, 0)
    end = execute(start, [Action.TURN_LEFT, Action.FORWARD, Action.FORWARD], None, units)
    assert recover_chunk(start, end, units) == ActionChunk.of(("L", 1), ("F", 2))


def test_world_rejects_blocked_solutions():
    world = parse_world("cell_size=0.5\n#####\n#S.G#\n#####\n")
    end = Pose(world.start.x + 2.0, world.start.y, 0.0)
    with pytest.raises(NotReachable):
        recover_chunk(world.start, end, world=world)


def test_random_round_trip():
    rng = random.Random(5)
    for i in range(1500):
        acts = [rng.choice(MOVES) for _ in range(rng.randint(1, 9))]
        chunk = chunk_trajectory(acts, HpacConfig(0.7, 3), make_rng(i)).chunks[0]
        start = Pose(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 360))
        end = execute(start, chunk.actions())
        assert lands(start, end, recover_chunk(start, end))
