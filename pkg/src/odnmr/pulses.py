"""Timed pulse events, the line-oriented sequence DSL, and its parser.

Grammar (one event per line, '#' starts a comment, keywords are
case-insensitive)::

    optical   := "optical" role detspec power duration
    role      := "burn" | "probe" | "erase"
    detspec   := number frequnit ["->" number frequnit]     (chirp)
    rf        := "rf" number "MHz" number "W" number timeunit ["phase=" number]
    wait      := "wait" number timeunit
    readout   := "readout" number frequnit number timeunit
    frequnit  := "MHz" | "kHz" | "GHz"
    timeunit  := "us" | "ms" | "s"

Accepted unit suffixes are exactly MHz, kHz, GHz, us, ms, s, W, deg.
Internally all frequencies are MHz, times microseconds, phases degrees
in [0, 360).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

__all__ = [
    "SequenceError",
    "OpticalPulse",
    "RfPulse",
    "Wait",
    "ReadoutWindow",
    "PulseEvent",
    "PulseSequence",
    "SweepSpec",
    "parse_sequence",
    "format_sequence",
]

ROLES = ("burn", "probe", "erase")

_FREQ_SCALE = {"mhz": 1.0, "khz": 1e-3, "ghz": 1e3}
_TIME_SCALE = {"us": 1.0, "ms": 1e3, "s": 1e6}
_KNOWN_UNITS = {"mhz", "khz", "ghz", "us", "ms", "s", "w", "deg"}


class SequenceError(ValueError):
    """Syntax or semantic error in a pulse sequence, with source location."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"line {line}, col {column}: {message}" if line else message)
        self.line = line
        self.column = column


def _norm_phase(phase_deg: float) -> float:
    return float(phase_deg) % 360.0


@dataclass(frozen=True)
class OpticalPulse:
    """Laser pulse; equal start/stop detuning means fixed frequency."""

    detuning_start: float  # MHz
    detuning_stop: float  # MHz
    power: float  # pump-rate units
    duration: float  # us
    role: str  # burn | probe | erase

    def __post_init__(self):
        if self.role not in ROLES:
            raise SequenceError(f"unknown optical role {self.role!r}")
        if not self.duration > 0:
            raise SequenceError("duration must be > 0")
        if self.power < 0:
            raise SequenceError("power must be >= 0")


@dataclass(frozen=True)
class RfPulse:
    frequency: float  # MHz
    power: float  # W
    phase: float  # degrees, normalized to [0, 360)
    duration: float  # us

    def __post_init__(self):
        if not self.duration > 0:
            raise SequenceError("duration must be > 0")
        if self.power < 0:
            raise SequenceError("power must be >= 0")
        object.__setattr__(self, "phase", _norm_phase(self.phase))


@dataclass(frozen=True)
class Wait:
    duration: float  # us

    def __post_init__(self):
        if not self.duration > 0:
            raise SequenceError("duration must be > 0")


@dataclass(frozen=True)
class ReadoutWindow:
    detuning: float  # MHz
    duration: float  # us

    def __post_init__(self):
        if not self.duration > 0:
            raise SequenceError("duration must be > 0")


PulseEvent = OpticalPulse | RfPulse | Wait | ReadoutWindow


@dataclass(frozen=True)
class PulseSequence:
    events: tuple[PulseEvent, ...]
    label: str = ""

    def __post_init__(self):
        if not self.events:
            raise SequenceError("sequence has no events")
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def total_duration(self) -> float:
        """Sum of event durations, us."""
        return float(sum(e.duration for e in self.events))


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter and its grid."""

    parameter: str  # rf_frequency | rf_duration | delay | rf_power | optical_detuning | pulse_count
    values: tuple[float, ...]
    repetitions_per_point: int = 5

    _PARAMS = ("rf_frequency", "rf_duration", "delay", "rf_power",
               "optical_detuning", "pulse_count")

    def __post_init__(self):
        if self.parameter not in self._PARAMS:
            raise SequenceError(f"unknown sweep parameter {self.parameter!r}")
        vals = tuple(float(v) for v in self.values)
        if not vals or not all(v == v and abs(v) != float("inf") for v in vals):
            raise SequenceError("sweep values must be non-empty and finite")
        if self.repetitions_per_point < 1:
            raise SequenceError("repetitions_per_point must be >= 1")
        object.__setattr__(self, "values", vals)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"(?P<arrow>->)"
    r"|(?P<kv>[A-Za-z_]+=)"
    r"|(?P<number>[+-]?\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|[+-]?\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<word>[A-Za-z_]+)"
    r"|(?P<junk>\S)"
)


@dataclass
class _Token:
    kind: str  # arrow | kv | number | word
    text: str
    column: int


class _LineParser:
    def __init__(self, tokens: list[_Token], line_no: int, line_len: int):
        self.tokens = tokens
        self.pos = 0
        self.line_no = line_no
        self.line_len = line_len

    def error(self, message: str, token: _Token | None = None) -> SequenceError:
        col = token.column if token is not None else self.line_len + 1
        return SequenceError(message, self.line_no, col)

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok is None:
            raise self.error(f"expected {what}, got end of line")
        if tok.kind != kind:
            raise self.error(f"expected {what}, got {tok.text!r}", tok)
        self.pos += 1
        return tok

    def number(self, what: str) -> float:
        return float(self.take("number", what).text)

    def unit(self, table: dict[str, float], what: str) -> float:
        tok = self.take("word", what)
        u = tok.text.lower()
        if u in table:
            return table[u]
        if u in _KNOWN_UNITS:
            raise self.error(f"unit {tok.text!r} not valid here (expected {what})", tok)
        raise self.error(f"unknown unit {tok.text!r}", tok)

    def quantity(self, table: dict[str, float], what: str) -> float:
        value = self.number(what)
        return value * self.unit(table, what)

    def end(self):
        tok = self.peek()
        if tok is not None:
            raise self.error(f"unexpected trailing token {tok.text!r}", tok)


def _tokenize(line: str, line_no: int) -> list[_Token]:
    out = []
    for m in _TOKEN_RE.finditer(line):
        kind = m.lastgroup
        if kind == "junk":
            raise SequenceError(f"unexpected character {m.group()!r}", line_no, m.start() + 1)
        out.append(_Token(kind, m.group(), m.start() + 1))
    return out


def _parse_line(p: _LineParser) -> PulseEvent:
    kw_tok = p.take("word", "event keyword")
    kw = kw_tok.text.lower()
    try:
        if kw == "optical":
            role_tok = p.take("word", "optical role")
            role = role_tok.text.lower()
            if role not in ROLES:
                raise p.error(f"unknown optical role {role_tok.text!r}", role_tok)
            start = p.quantity(_FREQ_SCALE, "detuning")
            stop = start
            if p.peek() is not None and p.peek().kind == "arrow":
                p.pos += 1
                stop = p.quantity(_FREQ_SCALE, "detuning")
            power = p.quantity({"w": 1.0}, "power (W)")
            duration = p.quantity(_TIME_SCALE, "duration")
            p.end()
            return OpticalPulse(start, stop, power, duration, role)
        if kw == "rf":
            freq = p.quantity({"mhz": 1.0}, "frequency (MHz)")
            power = p.quantity({"w": 1.0}, "power (W)")
            duration = p.quantity(_TIME_SCALE, "duration")
            phase = 0.0
            tok = p.peek()
            if tok is not None and tok.kind == "kv":
                if tok.text.lower() != "phase=":
                    raise p.error(f"unknown option {tok.text!r}", tok)
                p.pos += 1
                phase = p.number("phase (deg)")
                tok2 = p.peek()
                if tok2 is not None and tok2.kind == "word":
                    if tok2.text.lower() != "deg":
                        raise p.error(f"unknown unit {tok2.text!r}", tok2)
                    p.pos += 1
            p.end()
            return RfPulse(freq, power, phase, duration)
        if kw == "wait":
            duration = p.quantity(_TIME_SCALE, "duration")
            p.end()
            return Wait(duration)
        if kw == "readout":
            det = p.quantity(_FREQ_SCALE, "detuning")
            duration = p.quantity(_TIME_SCALE, "duration")
            p.end()
            return ReadoutWindow(det, duration)
    except SequenceError:
        raise
    except ValueError as exc:  # semantic errors from event constructors
        raise p.error(str(exc), kw_tok) from exc
    raise p.error(f"unknown event keyword {kw_tok.text!r}", kw_tok)


def parse_sequence(text: str, label: str = "") -> PulseSequence:
    """Parse DSL text into a PulseSequence.

    Raises SequenceError with 1-based line/column on syntax or semantic
    errors; an input with no events is an error.
    """
    events: list[PulseEvent] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        tokens = _tokenize(line, line_no)
        p = _LineParser(tokens, line_no, len(line))
        events.append(_parse_line(p))
    if not events:
        raise SequenceError("empty sequence", 1, 1)
    return PulseSequence(tuple(events), label=label)


def _fmt(x: float) -> str:
    return repr(float(x))


def format_sequence(seq: PulseSequence) -> str:
    """Render to DSL text; parse(format(seq)) equals seq event-wise."""
    lines = []
    for e in seq.events:
        if isinstance(e, OpticalPulse):
            det = f"{_fmt(e.detuning_start)}MHz"
            if e.detuning_stop != e.detuning_start:
                det += f" -> {_fmt(e.detuning_stop)}MHz"
            lines.append(f"optical {e.role} {det} {_fmt(e.power)}W {_fmt(e.duration)}us")
        elif isinstance(e, RfPulse):
            lines.append(
                f"rf {_fmt(e.frequency)}MHz {_fmt(e.power)}W {_fmt(e.duration)}us"
                f" phase={_fmt(e.phase)}"
            )
        elif isinstance(e, Wait):
            lines.append(f"wait {_fmt(e.duration)}us")
        else:
            lines.append(f"readout {_fmt(e.detuning)}MHz {_fmt(e.duration)}us")
    return "\n".join(lines) + "\n"
