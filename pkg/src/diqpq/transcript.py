"""Line-oriented text format for run transcripts.

Layout (version 1)::

    DIQPQ-TRANSCRIPT 1
    param <name> <value>          one line per ProtocolParams field
    method <test|game>
    source <a00> <a01> <a10> <a11>
    policy <description>
    verdict Proceed | verdict Abort <reason>
    observed|threshold|xi|eta_hat <float>
    attempts <int>
    records <count>
    <index> <x> <y> <a> <b> <clicked_a> <clicked_b>     a/b are 0, 1 or '-'
    [rawkey <length>]
    [bob <bits>]
    [alice <0|1|? per position>]
    [finalkey <length> <block size>]
    [bits <bits>]
    [alice <0|1|?>]
    [query <index> <known position> <shift> <retrieved> <items readable>]
    end

Floats are written with ``repr`` so reading and writing back is bit-exact.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .detectors import NOCLICK, TrialRecords
from .protocol import FinalKey, ProtocolParams, QueryResult, RawKey, Transcript, Verdict

MAGIC = "DIQPQ-TRANSCRIPT"
VERSION = 1

_PARAM_TYPES = {f.name: f.type for f in dataclasses.fields(ProtocolParams)}


class TranscriptFormatError(ValueError):
    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _known_str(arr: np.ndarray) -> str:
    return "".join("?" if v < 0 else str(int(v)) for v in arr)


def _bits_str(arr: np.ndarray) -> str:
    return "".join(str(int(v)) for v in arr)


def _side(v: int) -> str:
    return "-" if v == NOCLICK else str(v)


def dumps(t: Transcript) -> str:
    out = [f"{MAGIC} {VERSION}"]
    for f in dataclasses.fields(ProtocolParams):
        out.append(f"param {f.name} {_fmt(getattr(t.params, f.name))}")
    out.append(f"method {t.method}")
    out.append(f"source {t.source}")
    out.append(f"policy {t.policy}")
    out.append("verdict Proceed" if t.verdict.proceed else f"verdict Abort {t.verdict.reason}")
    for name in ("observed", "threshold", "xi", "eta_hat"):
        out.append(f"{name} {float(getattr(t, name))!r}")
    out.append(f"attempts {t.attempts}")
    r = t.records
    out.append(f"records {len(r)}")
    ca, cb = r.clicked_a.astype(int), r.clicked_b.astype(int)
    for i, x, y, a, b, c1, c2 in zip(
        r.index.tolist(), r.x.tolist(), r.y.tolist(), r.a.tolist(), r.b.tolist(), ca.tolist(), cb.tolist()
    ):
        out.append(f"{i} {x} {y} {_side(a)} {_side(b)} {c1} {c2}")
    if t.raw_key is not None:
        out.append(f"rawkey {len(t.raw_key)}")
        out.append(f"bob {_bits_str(t.raw_key.bob_bits)}")
        out.append(f"alice {_known_str(t.raw_key.alice_known)}")
    if t.final_key is not None:
        out.append(f"finalkey {len(t.final_key)} {t.final_key.block_size}")
        out.append(f"bits {_bits_str(t.final_key.bits)}")
        out.append(f"alice {_known_str(t.final_key.alice_bits)}")
    if t.query is not None:
        q = t.query
        out.append(f"query {q.alice_index} {q.known_position} {q.shift} {q.retrieved} {q.items_readable}")
    out.append("end")
    return "\n".join(out) + "\n"


class _Lines:
    def __init__(self, text: str) -> None:
        self.lines = text.split("\n")
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        self.pos = 0

    @property
    def lineno(self) -> int:
        return self.pos + 1

    def peek(self) -> str | None:
        return self.lines[self.pos] if self.pos < len(self.lines) else None

    def take(self, keyword: str | None = None) -> str:
        line = self.peek()
        if line is None:
            raise TranscriptFormatError("unexpected end of transcript", self.lineno)
        if keyword is not None:
            head, _, rest = line.partition(" ")
            if head != keyword:
                raise TranscriptFormatError(f"expected '{keyword}', found {line[:40]!r}", self.lineno)
            line = rest
        self.pos += 1
        return line


def _parse_known(s: str) -> np.ndarray:
    return np.array([-1 if c == "?" else int(c) for c in s], dtype=np.int8)


def loads(text: str) -> Transcript:
    L = _Lines(text)
    try:
        return _parse(L)
    except TranscriptFormatError:
        raise
    except (ValueError, TypeError) as exc:
        # L.pos is the 1-based number of the line just consumed
        raise TranscriptFormatError(str(exc), max(L.pos, 1)) from exc


def _parse(L: _Lines) -> Transcript:
    header = L.take()
    if header != f"{MAGIC} {VERSION}":
        raise TranscriptFormatError(f"unsupported header {header!r}", 1)
    kw = {}
    while (line := L.peek()) is not None and line.startswith("param "):
        lineno = L.lineno
        _, name, value = L.take().split(" ", 2)
        typ = _PARAM_TYPES.get(name)
        if typ is None:
            raise TranscriptFormatError(f"unknown parameter {name!r}", lineno)
        kw[name] = {"float": float, "int": int}.get(typ, str)(value)
    params = ProtocolParams(**kw)
    method = L.take("method")
    source = L.take("source")
    policy = L.take("policy")
    parts = L.take("verdict").split(" ", 1)
    verdict = Verdict(True) if parts[0] == "Proceed" else Verdict(False, parts[1] if len(parts) > 1 else None)
    nums = {name: float(L.take(name)) for name in ("observed", "threshold", "xi", "eta_hat")}
    attempts = int(L.take("attempts"))
    n = int(L.take("records"))
    cols = np.empty((n, 5), dtype=np.int64)
    for k in range(n):
        lineno = L.lineno
        f = L.take().split(" ")
        if len(f) != 7:
            raise TranscriptFormatError("record needs 7 fields", lineno)
        a = NOCLICK if f[3] == "-" else int(f[3])
        b = NOCLICK if f[4] == "-" else int(f[4])
        if (a != NOCLICK) != (f[5] == "1") or (b != NOCLICK) != (f[6] == "1"):
            raise TranscriptFormatError("click flags disagree with outcomes", lineno)
        cols[k] = (int(f[0]), int(f[1]), int(f[2]), a, b)
    records = TrialRecords(*cols.T)
    raw = final = query = None
    if (line := L.peek()) is not None and line.startswith("rawkey "):
        L.take("rawkey")
        raw = RawKey(np.array([int(c) for c in L.take("bob")], dtype=np.uint8), _parse_known(L.take("alice")))
    if (line := L.peek()) is not None and line.startswith("finalkey "):
        _, block = L.take("finalkey").split(" ")
        bits = np.array([int(c) for c in L.take("bits")], dtype=np.uint8)
        final = FinalKey(bits, _parse_known(L.take("alice")), int(block))
    if (line := L.peek()) is not None and line.startswith("query "):
        query = QueryResult(*(int(v) for v in L.take("query").split(" ")))
    if L.take() != "end":
        raise TranscriptFormatError("expected 'end'", L.lineno - 1)
    return Transcript(
        params=params, method=method, source=source, policy=policy, records=records, verdict=verdict,
        attempts=attempts, raw_key=raw, final_key=final, query=query, **nums,
    )


def write(t: Transcript, path: str | Path) -> None:
    Path(path).write_text(dumps(t), encoding="ascii", newline="\n")


def read(path: str | Path) -> Transcript:
    return loads(Path(path).read_text(encoding="ascii"))
