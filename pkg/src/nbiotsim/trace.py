"""Tagged trace events and the Logviewer-style filter."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable


class Tag(str, Enum):
    # UE-side Logviewer filter tags
    RRC_DEBUG_ASN = "RRC_DEBUG_ASN"
    NAS_DBG_NAS_MSG = "NAS_DBG_NAS_MSG"
    DCI = "DCI"
    HARQ = "HARQ"
    RACH = "RACH"
    # network-side kinds
    S1AP = "S1AP"
    S1U = "S1U"  # never emitted: the core has no user plane
    WARN = "WARN"


LOGVIEWER_TAGS = frozenset({Tag.RRC_DEBUG_ASN, Tag.NAS_DBG_NAS_MSG, Tag.DCI, Tag.HARQ, Tag.RACH})

# per-tick processing order; also the secondary trace sort key
COMPONENTS = ("phy", "mac", "rrc", "mme", "ue")
COMPONENT_ORDER = {name: i for i, name in enumerate(COMPONENTS)}


@dataclass(frozen=True)
class TraceEvent:
    abs_sf: int
    tag: Tag
    component: str
    entity: int
    detail: str
    seq: int = field(default=0, compare=False)

    @property
    def key(self) -> tuple:
        return (self.abs_sf, COMPONENT_ORDER[self.component], self.entity, self.seq)

    def fields(self) -> dict[str, str]:
        """Parse the ``key=value`` words of the detail string."""
        out = {}
        for word in self.detail.split():
            if "=" in word:
                k, v = word.split("=", 1)
                out[k] = v
        return out

    @property
    def verb(self) -> str:
        return self.detail.split(" ", 1)[0] if self.detail else ""

    def format(self) -> str:
        return f"[{self.abs_sf}] {self.tag.value} {self.component}/{self.entity} {self.detail}"


class Tracer:
    """Collects events for one process; a run merges tracers and sorts by key."""

    def __init__(self):
        self.events: list[TraceEvent] = []
        self._seq = 0

    def emit(self, abs_sf: int, tag: Tag, component: str, entity: int, detail: str) -> TraceEvent:
        self._seq += 1
        ev = TraceEvent(abs_sf, Tag(tag), component, entity, detail, self._seq)
        self.events.append(ev)
        return ev


def sort_events(events: Iterable[TraceEvent]) -> list[TraceEvent]:
    return sorted(events, key=lambda e: e.key)


def parse_tags(names: Iterable[str]) -> set[Tag]:
    tags = set()
    for name in names:
        name = name.strip()
        if not name:
            continue
        try:
            tags.add(Tag(name.upper()))
        except ValueError:
            valid = ", ".join(t.value for t in Tag)
            raise ValueError(f"unknown trace tag {name!r}; valid tags: {valid}") from None
    return tags


def filter_trace(events: Iterable[TraceEvent], tags) -> list[TraceEvent]:
    """Keep events whose tag is in ``tags``, preserving order.

    ``tags`` may hold :class:`Tag` members or tag names; an unknown name
    raises ``ValueError`` listing the valid ones.
    """
    wanted = parse_tags(t.value if isinstance(t, Tag) else t for t in tags)
    return [e for e in events if e.tag in wanted]


def format_trace(events: Iterable[TraceEvent]) -> str:
    return "".join(e.format() + "\n" for e in events)
