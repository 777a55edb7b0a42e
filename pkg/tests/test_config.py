from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nbiotsim.config import (ConfigError, ConfigSyntaxError, CssOffset, Msg3RangeStart, extract_enb_config,
                             parse_config, serialize)


def test_integer_setting():
    assert parse_config("eutra_band = 28;") == {"eutra_band": 28}


def test_empty_text_is_empty_tree():
    assert parse_config("") == {}


def test_string_setting():
    assert parse_config('npdcch_Offset_RA = "oneFourth";') == {"npdcch_Offset_RA": "oneFourth"}


def test_missing_value_is_syntax_error_at_that_spot():
    with pytest.raises(ConfigSyntaxError) as exc:
        parse_config("x = ;")
    assert (exc.value.line, exc.value.column) == (1, 5)


def test_long_suffix_colon_and_missing_terminator():
    tree = parse_config('a = 780000000L\nb : -5;\nc = "zero"\n')
    assert tree == {"a": 780000000, "b": -5, "c": "zero"}


def test_comments_and_elision():
    text = "# hash\n// slashes\n/* block */ g = ({ ...\n  k = 1;\n  ...\n});"
    assert parse_config(text) == {"g": [{"k": 1}]}


def test_duplicate_key_rejected():
    with pytest.raises(ConfigSyntaxError):
        parse_config("a = 1; a = 2;")


def test_listing_values(enb_cfg):
    rach = enb_cfg.rach[0]
    assert rach.response_window == 8
    assert rach.contention_resolution_timer == 32
    assert rach.preamble_initial_target_power_dbm == -90
    assert rach.msg3_subcarrier_range_start is Msg3RangeStart.ZERO
    assert rach.max_preamble_attempts_per_ce == 3
    assert rach.repetitions_per_attempt == 1
    assert enb_cfg.css.r_max == 4
    assert enb_cfg.css.start_sf_g == Fraction(2)
    assert enb_cfg.css.offset_fraction is CssOffset.ONE_FOURTH
    assert enb_cfg.cell.downlink_frequency_hz == 780_000_000
    assert enb_cfg.cell.uplink_frequency_offset_hz == -55_000_000
    assert enb_cfg.cell.uplink_frequency_hz == 725_000_000
    assert enb_cfg.network.mme_ipv4 == "140.118.123.99"
    assert enb_cfg.network.enb_ipv4 == "140.118.123.103"
    assert enb_cfg.network.s1u_port == 2152
    assert enb_cfg.cell_earfcn == 9448


def test_css_period_and_offset(enb_cfg):
    assert (enb_cfg.css.period, enb_cfg.css.offset) == (8, 2)


def _minimal(**carrier):
    base = {"eutra_band": 28, "downlink_frequency": 780000000}
    base.update(carrier)
    return {"component_carriers": [base], "mme_ip_address": [{"ipv4": "10.1.1.1"}]}


def test_missing_band_names_the_key():
    tree = _minimal()
    del tree["component_carriers"][0]["eutra_band"]
    with pytest.raises(ConfigError, match="eutra_band"):
        extract_enb_config(tree)


def test_missing_mme_names_the_key():
    tree = _minimal()
    del tree["mme_ip_address"]
    with pytest.raises(ConfigError, match="mme_ip_address"):
        extract_enb_config(tree)


@pytest.mark.parametrize("key, value", [
    ("rach_raResponseWindowSize_NB", 9),
    ("rach_macContentionResolutionTimer_NB", 33),
    ("npdcch_NumRepetitions_RA", 3),
    ("npdcch_Offset_RA", "oneThird"),
    ("nrprach_SubcarrierMSG3_RangeStart", "half"),
    ("rach_preambleInitialReceivedTargetPower_NB", -80),
    ("npdcch_StartSF_CSS_RA", 3),
])
def test_out_of_range_values_rejected(key, value):
    with pytest.raises(ConfigError, match=key):
        extract_enb_config(_minimal(**{key: value}))


def test_fractional_g_gives_floored_offset():
    cfg = extract_enb_config(_minimal(npdcch_StartSF_CSS_RA="v1dot5"))
    assert (cfg.css.period, cfg.css.offset) == (6, 1)


def test_separate_user_plane_address_rejected():
    tree = _minimal()
    tree["NETWORK_INTERFACES"] = {"ENB_IPV4_ADDRESS_FOR_S1_MME": "10.0.0.1/24",
                                  "ENB_IPV4_ADDRESS_FOR_S1U": "10.0.0.9/24"}
    with pytest.raises(ConfigError):
        extract_enb_config(tree)


def test_per_level_rach_override():
    cfg = extract_enb_config(_minimal(rach_CE_levels=[{}, {"numRepetitionsPerPreambleAttempt": 2},
                                                      {"numRepetitionsPerPreambleAttempt": 4}]))
    assert [r.repetitions_per_attempt for r in cfg.rach] == [1, 2, 4]
    assert all(r.response_window == 8 for r in cfg.rach)


names = st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,10}", fullmatch=True)
scalars = st.one_of(st.integers(-(2**63), 2**63 - 1), st.text(st.characters(blacklist_categories=("Cs",)), max_size=12))
groups = st.deferred(lambda: st.dictionaries(names, values, max_size=4))
values = st.one_of(scalars, groups, st.lists(groups, max_size=3))
trees = st.dictionaries(names, values, max_size=5)


@given(trees)
def test_serialize_then_parse_is_identity(tree):
    assert parse_config(serialize(tree)) == tree


@given(st.text(max_size=80))
def test_arbitrary_text_parses_or_raises_syntax_error(text):
    try:
        parse_config(text)
    except ConfigSyntaxError:
        pass
