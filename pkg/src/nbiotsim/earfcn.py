"""EARFCN <-> carrier frequency mapping for the E-UTRA bands NB-IoT runs in.

Frequencies are handled in integer Hz throughout.  Two mappings exist:

``standard``
    F_DL = F_DL_low + 0.1 MHz * (N_DL - N_offs_DL)

``compat`` (default)
    the standard formula plus explicit compatibility entries.  The sample
    deployment locks its BC95 modules with ``AT+NEARFCN=0,9448`` and runs the
    cell at 780 MHz; the linear band-28 formula would give 781.8 MHz for that
    channel, so (28, 9448) is pinned to 780 MHz.
"""

from __future__ import annotations

from dataclasses import dataclass

MHZ = 1_000_000
CHANNEL_RASTER_HZ = 100_000


class EarfcnError(ValueError):
    pass


@dataclass(frozen=True)
class Band:
    number: int
    fdl_low_hz: int
    noffs_dl: int
    ndl_last: int
    ful_low_hz: int

    @property
    def duplex_offset_hz(self) -> int:
        return self.ful_low_hz - self.fdl_low_hz


def _mhz(x: float) -> int:
    return round(x * MHZ)


# band, F_DL_low, N_offs-DL, last DL EARFCN, F_UL_low (NB-IoT capable FDD bands)
BANDS = {b.number: b for b in (
    Band(1, _mhz(2110), 0, 599, _mhz(1920)),
    Band(2, _mhz(1930), 600, 1199, _mhz(1850)),
    Band(3, _mhz(1805), 1200, 1949, _mhz(1710)),
    Band(5, _mhz(869), 2400, 2649, _mhz(824)),
    Band(8, _mhz(925), 3450, 3799, _mhz(880)),
    Band(12, _mhz(729), 5010, 5179, _mhz(699)),
    Band(13, _mhz(746), 5180, 5279, _mhz(777)),
    Band(17, _mhz(734), 5730, 5849, _mhz(704)),
    Band(18, _mhz(860), 5850, 5999, _mhz(815)),
    Band(19, _mhz(875), 6000, 6149, _mhz(830)),
    Band(20, _mhz(791), 6150, 6449, _mhz(832)),
    Band(25, _mhz(1930), 8040, 8689, _mhz(1850)),
    Band(26, _mhz(859), 8690, 9039, _mhz(814)),
    Band(28, _mhz(758), 9210, 9659, _mhz(703)),
    Band(66, _mhz(2110), 66436, 67335, _mhz(1710)),
)}

# (band, earfcn) -> downlink Hz, applied only under the "compat" mapping
COMPAT_ENTRIES = {
    (28, 9448): 780 * MHZ,
}


def get_band(band: int) -> Band:
    try:
        return BANDS[band]
    except KeyError:
        raise EarfcnError(f"unknown band {band}") from None


def default_duplex_offset(band: int) -> int:
    return get_band(band).duplex_offset_hz


def earfcn_to_dl(band: int, earfcn: int, mapping: str = "compat") -> int:
    b = get_band(band)
    if not b.noffs_dl <= earfcn <= b.ndl_last:
        raise EarfcnError(f"EARFCN {earfcn} outside band {band} range {b.noffs_dl}-{b.ndl_last}")
    if mapping == "compat" and (band, earfcn) in COMPAT_ENTRIES:
        return COMPAT_ENTRIES[(band, earfcn)]
    if mapping not in ("compat", "standard"):
        raise EarfcnError(f"unknown mapping {mapping!r}")
    return b.fdl_low_hz + CHANNEL_RASTER_HZ * (earfcn - b.noffs_dl)


def earfcn_to_carrier(band: int, earfcn: int, ul_offset_hz: int | None = None,
                      mapping: str = "compat") -> dict:
    """Return ``{"dl_hz": ..., "ul_hz": ...}`` for a downlink EARFCN.

    ``ul_offset_hz`` is the configured uplink offset; the band's duplex
    spacing is used when it is not given.
    """
    dl = earfcn_to_dl(band, earfcn, mapping)
    if ul_offset_hz is None:
        ul_offset_hz = default_duplex_offset(band)
    return {"dl_hz": dl, "ul_hz": dl + ul_offset_hz}


def carrier_to_earfcn(band: int, dl_hz: int, mapping: str = "compat") -> int:
    b = get_band(band)
    if mapping == "compat":
        for (cband, cearfcn), freq in COMPAT_ENTRIES.items():
            if cband == band and freq == dl_hz:
                return cearfcn
    delta = dl_hz - b.fdl_low_hz
    if delta < 0 or delta % CHANNEL_RASTER_HZ:
        raise EarfcnError(f"{dl_hz} Hz is not on the band {band} channel raster")
    n = b.noffs_dl + delta // CHANNEL_RASTER_HZ
    if n > b.ndl_last:
        raise EarfcnError(f"{dl_hz} Hz lies above band {band}")
    return n
