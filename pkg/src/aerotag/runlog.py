"""Run log: the ordered event record of one simulation.

One JSON object per line, keys `t_s` and `kind` first, then the payload for
that kind. Event times are nondecreasing and every `store` event follows the
`publish` that produced it; `read_runlog` enforces the structural parts and
`replay` checks the semantic ones.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import CorruptLog

EVENT_KINDS = (
    "state_transition", "packet_tx", "bridge_rx", "relay_drop",
    "publish", "expire", "store",
)


def event(t_s: float, kind: str, **payload) -> dict:
    if kind not in EVENT_KINDS:
        raise ValueError(f"unknown event kind {kind!r}")
    return {"t_s": round(t_s, 6), "kind": kind, **payload}


def event_line(ev: dict) -> str:
    return json.dumps(ev, separators=(",", ":"))


def write_runlog(events, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(event_line(ev) + "\n")


def read_runlog(path: str | Path) -> list[dict]:
    events = []
    last_t = float("-inf")
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                ev = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptLog(f"line {lineno}: not valid JSON: {exc}") from None
            if not isinstance(ev, dict) or "t_s" not in ev or "kind" not in ev:
                raise CorruptLog(f"line {lineno}: missing t_s/kind")
            if ev["kind"] not in EVENT_KINDS:
                raise CorruptLog(f"line {lineno}: unknown kind {ev['kind']!r}")
            if ev["t_s"] < last_t:
                raise CorruptLog(f"line {lineno}: t_s decreases")
            last_t = ev["t_s"]
            events.append(ev)
    return events
