import random

import pytest

from chunknav.grammar import Action
from chunknav.sim.episode import make_worlds

MOVES = [Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT]


def random_actions(rng: random.Random, n: int, with_stop: bool | None = None) -> list[Action]:
    acts = [rng.choice(MOVES) for _ in range(n)]
    if with_stop is None:
        with_stop = rng.random() < 0.5
    if with_stop:
        acts[-1] = Action.STOP
    return acts


@pytest.fixture(scope="session")
def worlds30():
    return make_worlds(30, 3)


# -- acceptance reporting -----------------------------------------------------

_ACCEPTANCE_LINES: dict[int, str] = {}
_ACCEPTANCE_OUTCOMES: dict[str, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, title, ok, detail)`` records and prints one pass/fail line."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        _ACCEPTANCE_LINES[number] = line
        print(line)
        assert ok, line

    return record


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _ACCEPTANCE_OUTCOMES[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(_ACCEPTANCE_LINES[number])
    for nodeid, outcome in sorted(_ACCEPTANCE_OUTCOMES.items()):
        name = nodeid.rsplit("::", 1)[-1]
        number = int(name.split("_")[2])
        if number not in _ACCEPTANCE_LINES:
            terminalreporter.write_line(f"criterion {number:>2} FAIL  {name} raised before reporting ({outcome})")
