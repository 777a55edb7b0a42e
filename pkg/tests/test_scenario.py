import pytest

from nbiotsim.scenario import ScenarioError, bundled_scenario, bundled_scenarios_dir, load_scenario, parse_scenario

BASE = """
[run]
length = 100
[enb]
config = {conf}
[subscribers]
001010000000001 000102030405060708090a0b0c0d0e0f 1
[ue 1]
imsi = 001010000000001
AT+NRB
@50 AT+CGATT=1   # not a comment inside a script line
AT+CGATT?
"""


def _conf():
    return bundled_scenarios_dir() / "nbiot_band28.conf"


def parse(text, **fmt):
    return parse_scenario(text.format(conf=_conf(), **fmt))


def test_basic_fields():
    sc = parse(BASE)
    assert sc.run_length == 100 and sc.split == "monolithic"
    assert sc.enb_config_path == _conf()
    ue = sc.ues[0]
    assert ue.script == [(None, "AT+NRB"), (50, "AT+CGATT=1   # not a comment inside a script line"),
                         (None, "AT+CGATT?")]
    assert sc.ce_level(ue) == 1 and sc.sim_key(ue) == bytes(range(16))


def test_split_loopback():
    sc = parse(BASE.replace("length = 100", "length = 100\nsplit = loopback:5000"))
    assert (sc.split, sc.split_port) == ("loopback", 5000)


@pytest.mark.parametrize("edit, msg", [
    (("length = 100", "length = 0"), ">= 1"),
    (("imsi = 001010000000001", "imsi = 001010000000002"), "no subscriber"),
    (("[run]", "[bogus]"), "unknown section"),
    (("length = 100", "length = 100\nspeed = 3"), "unknown key"),
    (("length = 100", "length = 100\nsplit = tcp"), "split"),
    (("[ue 1]", "[ue]"), "needs an id"),
    (("000102030405060708090a0b0c0d0e0f", "0001"), "16 bytes"),
])
def test_errors(edit, msg):
    with pytest.raises(ScenarioError, match=msg):
        parse(BASE.replace(*edit))


def test_missing_config_key():
    with pytest.raises(ScenarioError, match="config"):
        parse_scenario("[run]\nlength = 5\n")


def test_phy_section():
    sc = parse(BASE + "[phy]\nseed = 9\nloss_prob = 0.1, 0.2, 0.3\ncrc_bug = true\npreamble_script = miss, hit\n")
    assert sc.phy.seed == 9 and sc.phy.loss_prob == (0.1, 0.2, 0.3)
    assert sc.phy.crc_bug and not sc.phy.crc_recovery
    assert sc.phy.preamble_script == (False, True)


def test_assertions_parsed():
    sc = parse(BASE + "[assert]\nfoo: sink_count 1\nbar: trace_count S1U == 0\n")
    assert [(a.name, a.kind, a.args) for a in sc.assertions] == [("foo", "sink_count", "1"),
                                                                  ("bar", "trace_count", "S1U == 0")]
    with pytest.raises(ScenarioError, match="unknown assertion kind"):
        parse(BASE + "[assert]\nfoo: frobnicate 1\n")


def test_every_bundled_scenario_loads():
    names = sorted(p.stem for p in bundled_scenarios_dir().glob("*.scn"))
    assert "hello-ntust" in names and len(names) >= 10
    for name in names:
        sc = load_scenario(bundled_scenario(name))
        assert sc.ues and sc.assertions


def test_missing_file():
    with pytest.raises(ScenarioError):
        load_scenario("/nonexistent.scn")
