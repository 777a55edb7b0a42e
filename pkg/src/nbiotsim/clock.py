"""Subframe time base: (hyperframe, SFN, subframe) and absolute subframe counts."""

from __future__ import annotations

from dataclasses import dataclass

SF_PER_FRAME = 10
FRAMES_PER_HYPERFRAME = 1024
HYPERFRAMES = 1024
SF_PER_HYPERFRAME = SF_PER_FRAME * FRAMES_PER_HYPERFRAME
HYPER_CYCLE = SF_PER_HYPERFRAME * HYPERFRAMES


@dataclass(frozen=True, order=True)
class SubframeClock:
    hfn: int = 0
    sfn: int = 0
    sf: int = 0

    def __post_init__(self):
        if not 0 <= self.hfn < HYPERFRAMES:
            raise ValueError(f"hfn out of range: {self.hfn}")
        if not 0 <= self.sfn < FRAMES_PER_HYPERFRAME:
            raise ValueError(f"sfn out of range: {self.sfn}")
        if not 0 <= self.sf < SF_PER_FRAME:
            raise ValueError(f"sf out of range: {self.sf}")

    def __str__(self):
        return f"{self.hfn}.{self.sfn}.{self.sf}"


def advance(clock: SubframeClock) -> SubframeClock:
    sf = clock.sf + 1
    sfn, hfn = clock.sfn, clock.hfn
    if sf == SF_PER_FRAME:
        sf = 0
        sfn += 1
        if sfn == FRAMES_PER_HYPERFRAME:
            sfn = 0
            hfn = (hfn + 1) % HYPERFRAMES
    return SubframeClock(hfn, sfn, sf)


def to_abs(clock: SubframeClock) -> int:
    return (clock.hfn * FRAMES_PER_HYPERFRAME + clock.sfn) * SF_PER_FRAME + clock.sf


def from_abs(abs_sf: int) -> SubframeClock:
    if abs_sf < 0:
        raise ValueError("absolute subframe must be non-negative")
    n = abs_sf % HYPER_CYCLE
    frames, sf = divmod(n, SF_PER_FRAME)
    hfn, sfn = divmod(frames, FRAMES_PER_HYPERFRAME)
    return SubframeClock(hfn, sfn, sf)


def sfn_sf(abs_sf: int) -> tuple[int, int]:
    """Return the (sfn, sf) pair carried in nFAPI headers for ``abs_sf``."""
    c = from_abs(abs_sf)
    return c.sfn, c.sf


def unwrap(sfn: int, sf: int, near: int) -> int:
    """Map an (sfn, sf) pair back to the absolute subframe closest to ``near``.

    Headers only carry SFN and subframe, so the receiver resolves the
    hyperframe ambiguity against its own notion of time.
    """
    within = sfn * SF_PER_FRAME + sf
    base = near - (near % SF_PER_HYPERFRAME)
    best = None
    for cand in (base - SF_PER_HYPERFRAME + within, base + within, base + SF_PER_HYPERFRAME + within):
        if cand < 0:
            continue
        if best is None or abs(cand - near) < abs(best - near):
            best = cand
    return best
