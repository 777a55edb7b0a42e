from hypothesis import given
from hypothesis import strategies as st

import pytest

from nbiotsim import earfcn
from nbiotsim.earfcn import EarfcnError, carrier_to_earfcn, earfcn_to_carrier, earfcn_to_dl


def test_band28_9448_is_780mhz_under_compat_mapping():
    assert earfcn_to_dl(28, 9448) == 780_000_000


def test_band28_9448_standard_formula():
    # 758 MHz + 0.1 MHz * (9448 - 9210)
    assert earfcn_to_dl(28, 9448, "standard") == 781_800_000


def test_uplink_uses_configured_offset():
    assert earfcn_to_carrier(28, 9448, -55_000_000) == {"dl_hz": 780_000_000, "ul_hz": 725_000_000}


def test_uplink_defaults_to_band_duplex_spacing():
    assert earfcn_to_carrier(28, 9448, mapping="standard")["ul_hz"] == 781_800_000 - 55_000_000


def test_unknown_band():
    with pytest.raises(EarfcnError):
        earfcn_to_dl(999, 9448)


def test_earfcn_outside_band():
    with pytest.raises(EarfcnError):
        earfcn_to_dl(28, 9000)


def test_unknown_mapping():
    with pytest.raises(EarfcnError):
        earfcn_to_dl(28, 9300, "bogus")


band_earfcn = st.sampled_from(sorted(earfcn.BANDS)).flatmap(
    lambda b: st.tuples(st.just(b), st.integers(earfcn.BANDS[b].noffs_dl, earfcn.BANDS[b].ndl_last)))


@given(band_earfcn)
def test_standard_mapping_matches_linear_oracle(be):
    band, n = be
    b = earfcn.BANDS[band]
    assert earfcn_to_dl(band, n, "standard") == b.fdl_low_hz + 100_000 * (n - b.noffs_dl)


@given(band_earfcn)
def test_carrier_to_earfcn_inverts_standard_mapping(be):
    band, n = be
    assert carrier_to_earfcn(band, earfcn_to_dl(band, n, "standard"), "standard") == n


def test_compat_mapping_is_not_injective_and_inverts_to_the_pinned_channel():
    # 9430 reaches 780 MHz by the linear formula; 9448 is pinned there
    assert earfcn_to_dl(28, 9430, "compat") == earfcn_to_dl(28, 9448, "compat") == 780_000_000
    assert carrier_to_earfcn(28, 780_000_000, "compat") == 9448
    assert carrier_to_earfcn(28, 780_000_000, "standard") == 9430


@given(band_earfcn)
def test_mappings_differ_only_on_compat_entries(be):
    band, n = be
    same = earfcn_to_dl(band, n, "compat") == earfcn_to_dl(band, n, "standard")
    assert same == ((band, n) not in earfcn.COMPAT_ENTRIES)
