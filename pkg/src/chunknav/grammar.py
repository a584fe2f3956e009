"""Action grammar shared by chunking, supervision records and the wire protocol.

Atomic actions are grouped into homogeneous sub-chunks (at most three
repetitions) and sub-chunks into chunks.  Chunks render to canonical text such
as ``"turn left 45 degree, move forward 50 cm"``.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

MAX_SUBCHUNK_COUNT = 3


class GrammarError(ValueError):
    pass


class MalformedPhrase(GrammarError):
    pass


class NonDivisibleMagnitude(GrammarError):
    pass


class CountOutOfRange(GrammarError):
    pass


class Action(enum.Enum):
    FORWARD = "forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    STOP = "stop"

    @classmethod
    def parse(cls, name: str) -> "Action":
        try:
            return cls(name)
        except ValueError:
            raise MalformedPhrase(f"unknown action {name!r}") from None

    @property
    def short(self) -> str:
        return _SHORT[self]


_SHORT = {Action.FORWARD: "F", Action.TURN_LEFT: "L", Action.TURN_RIGHT: "R", Action.STOP: "S"}
_FROM_SHORT = {v: k for k, v in _SHORT.items()}

# Fixed token-id order for type-token distributions.
ACTION_VOCAB: tuple[Action, ...] = (Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT, Action.STOP)
ACTION_INDEX = {a: i for i, a in enumerate(ACTION_VOCAB)}


def actions_from_short(text: str) -> list[Action]:
    """``"FFLS"`` -> ``[FORWARD, FORWARD, TURN_LEFT, STOP]`` (test helper)."""
    return [_FROM_SHORT[c] for c in text]


@dataclass(frozen=True)
class ActionUnits:
    forward_cm: int = 25
    turn_deg: int = 15

    def __post_init__(self):
        if self.forward_cm <= 0 or self.turn_deg <= 0:
            raise ValueError("forward_cm and turn_deg must be positive")
        if 360 % self.turn_deg:
            raise ValueError(f"turn_deg={self.turn_deg} does not divide 360")

    @property
    def forward_m(self) -> float:
        return self.forward_cm / 100.0


@dataclass(frozen=True)
class SubChunk:
    action: Action
    count: int

    def __post_init__(self):
        if not 1 <= self.count <= MAX_SUBCHUNK_COUNT:
            raise CountOutOfRange(f"sub-chunk count {self.count} outside [1, {MAX_SUBCHUNK_COUNT}]")
        if self.action is Action.STOP and self.count != 1:
            raise CountOutOfRange("stop cannot be repeated inside a sub-chunk")

    def __repr__(self):
        return f"({self.action.short},{self.count})"


@dataclass(frozen=True)
class ActionChunk:
    sub_chunks: tuple[SubChunk, ...]

    def __post_init__(self):
        object.__setattr__(self, "sub_chunks", tuple(self.sub_chunks))
        if not self.sub_chunks:
            raise GrammarError("a chunk needs at least one sub-chunk")

    @classmethod
    def of(cls, *pairs: tuple[Action | str, int]) -> "ActionChunk":
        subs = []
        for action, count in pairs:
            if isinstance(action, str):
                action = _FROM_SHORT[action]
            subs.append(SubChunk(action, count))
        return cls(tuple(subs))

    def actions(self) -> list[Action]:
        out: list[Action] = []
        for sc in self.sub_chunks:
            out.extend([sc.action] * sc.count)
        return out

    def __len__(self) -> int:
        return sum(sc.count for sc in self.sub_chunks)

    def __repr__(self):
        return "[" + ",".join(repr(sc) for sc in self.sub_chunks) + "]"


class Token(NamedTuple):
    kind: str  # "type" or "num"
    value: str


@dataclass(frozen=True)
class ChunkTokenSeq:
    tokens: tuple[Token, ...]
    text: str


_TYPE_WORDS = {
    Action.FORWARD: "move forward",
    Action.TURN_LEFT: "turn left",
    Action.TURN_RIGHT: "turn right",
    Action.STOP: "stop",
}
_WORD_TYPES = {v: k for k, v in _TYPE_WORDS.items()}

_PHRASE_RE = re.compile(r"^(move forward|turn left|turn right)\s+(\d+)\s*(cm|degrees?)$")
_SEPARATOR_RE = re.compile(r",|\n|\bthen\b")


def _magnitude(action: Action, count: int, units: ActionUnits) -> tuple[int, str]:
    if action is Action.FORWARD:
        return count * units.forward_cm, "cm"
    return count * units.turn_deg, "degree"


def render_subchunk(sc: SubChunk, units: ActionUnits) -> tuple[list[Token], str]:
    word = _TYPE_WORDS[sc.action]
    if sc.action is Action.STOP:
        return [Token("type", word)], word
    mag, unit = _magnitude(sc.action, sc.count, units)
    return [Token("type", word), Token("num", str(mag))], f"{word} {mag} {unit}"


def render_chunk(chunk: ActionChunk, units: ActionUnits = ActionUnits()) -> ChunkTokenSeq:
    tokens: list[Token] = []
    phrases: list[str] = []
    for sc in chunk.sub_chunks:
        toks, phrase = render_subchunk(sc, units)
        tokens.extend(toks)
        phrases.append(phrase)
    return ChunkTokenSeq(tuple(tokens), ", ".join(phrases))


def chunk_text(chunk: ActionChunk, units: ActionUnits = ActionUnits()) -> str:
    return render_chunk(chunk, units).text


def _parse_phrase(phrase: str, units: ActionUnits) -> SubChunk:
    phrase = " ".join(phrase.lower().split())
    if phrase == "stop":
        return SubChunk(Action.STOP, 1)
    m = _PHRASE_RE.match(phrase)
    if m is None:
        raise MalformedPhrase(f"cannot parse action phrase {phrase!r}")
    action = _WORD_TYPES[m.group(1)]
    magnitude = int(m.group(2))
    unit = m.group(3)
    if (action is Action.FORWARD) != (unit == "cm"):
        raise MalformedPhrase(f"unit {unit!r} does not fit {m.group(1)!r}")
    step = units.forward_cm if action is Action.FORWARD else units.turn_deg
    if magnitude % step:
        raise NonDivisibleMagnitude(f"{magnitude} is not a multiple of {step}")
    count = magnitude // step
    if not 1 <= count <= MAX_SUBCHUNK_COUNT:
        raise CountOutOfRange(f"{phrase!r} implies {count} repetitions")
    return SubChunk(action, count)


def parse_chunk(text: str, units: ActionUnits = ActionUnits()) -> ActionChunk:
    """Parse comma/``then``/newline separated action phrases into a chunk."""
    phrases = [p.strip() for p in _SEPARATOR_RE.split(text)]
    phrases = [p for p in phrases if p]
    if not phrases:
        raise MalformedPhrase("empty chunk text")
    return ActionChunk(tuple(_parse_phrase(p, units) for p in phrases))


def parse_tokens(text: str, units: ActionUnits = ActionUnits()) -> ChunkTokenSeq:
    return render_chunk(parse_chunk(text, units), units)


def flatten(chunks: Iterable[ActionChunk]) -> list[Action]:
    out: list[Action] = []
    for chunk in chunks:
        out.extend(chunk.actions())
    return out


def regroup_runs(actions: Sequence[Action]) -> list[SubChunk]:
    """Split into maximal homogeneous sub-chunks of at most three actions."""
    out: list[SubChunk] = []
    i = 0
    while i < len(actions):
        j = i + 1
        limit = 1 if actions[i] is Action.STOP else MAX_SUBCHUNK_COUNT
        while j < len(actions) and actions[j] is actions[i] and j - i < limit:
            j += 1
        out.append(SubChunk(actions[i], j - i))
        i = j
    return out
