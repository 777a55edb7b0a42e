import pytest
from hypothesis import given
from hypothesis import strategies as st

from nbiotsim.trace import (COMPONENTS, LOGVIEWER_TAGS, Tag, TraceEvent, Tracer, filter_trace, format_trace,
                            sort_events)

events = st.lists(st.builds(TraceEvent, abs_sf=st.integers(0, 50), tag=st.sampled_from(list(Tag)),
                            component=st.sampled_from(COMPONENTS), entity=st.integers(0, 5),
                            detail=st.sampled_from(["a x=1", "b", "c y=2 z=3"])), max_size=30)


@given(events, st.sets(st.sampled_from(list(Tag))))
def test_filter_keeps_exactly_the_wanted_tags_in_order(evs, tags):
    assert filter_trace(evs, tags) == [e for e in evs if e.tag in tags]


@given(events)
def test_filter_all_tags_is_identity(evs):
    assert filter_trace(evs, list(Tag)) == evs


@given(events)
def test_filter_nothing_is_empty(evs):
    assert filter_trace(evs, []) == []


def test_filter_accepts_names_case_insensitively():
    ev = TraceEvent(1, Tag.RACH, "ue", 1, "preamble_tx")
    assert filter_trace([ev], ["rach"]) == [ev]


def test_unknown_tag_lists_valid_ones():
    with pytest.raises(ValueError, match="RRC_DEBUG_ASN"):
        filter_trace([], ["NOPE"])


def test_logviewer_tags_are_the_five_ue_tags():
    assert {t.value for t in LOGVIEWER_TAGS} == {"RRC_DEBUG_ASN", "NAS_DBG_NAS_MSG", "DCI", "HARQ", "RACH"}


def test_sort_key_orders_time_then_component_then_entity():
    t = Tracer()
    t.emit(2, Tag.RACH, "ue", 1, "late")
    t.emit(1, Tag.RACH, "ue", 0, "ue0")
    t.emit(1, Tag.DCI, "mac", 9, "mac9")
    t.emit(1, Tag.DCI, "phy", 3, "phy3")
    assert [e.detail for e in sort_events(t.events)] == ["phy3", "mac9", "ue0", "late"]


@given(st.lists(st.tuples(st.integers(0, 20), st.sampled_from(COMPONENTS), st.integers(0, 3)), max_size=40))
def test_emitted_events_are_totally_ordered(items):
    t = Tracer()
    for sf, comp, ent in items:
        t.emit(sf, Tag.WARN, comp, ent, "x")
    keys = [e.key for e in sort_events(t.events)]
    assert len(set(keys)) == len(keys)
    assert keys == sorted(keys)


def test_format_and_fields():
    ev = TraceEvent(7, Tag.HARQ, "mac", 257, "ul_nack kind=data retx=0")
    assert format_trace([ev]) == "[7] HARQ mac/257 ul_nack kind=data retx=0\n"
    assert ev.verb == "ul_nack"
    assert ev.fields() == {"kind": "data", "retx": "0"}
