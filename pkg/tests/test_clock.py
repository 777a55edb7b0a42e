from hypothesis import given
from hypothesis import strategies as st

from nbiotsim import clock
from nbiotsim.clock import SubframeClock, advance, from_abs, to_abs, unwrap

import pytest


@pytest.mark.parametrize("before, after", [
    ((0, 0, 9), (0, 1, 0)),
    ((0, 1023, 9), (1, 0, 0)),
    ((1023, 1023, 9), (0, 0, 0)),
])
def test_advance_carries(before, after):
    assert advance(SubframeClock(*before)) == SubframeClock(*after)


@pytest.mark.parametrize("c, n", [((0, 0, 0), 0), ((0, 1, 0), 10), ((0, 0, 2), 2)])
def test_to_abs_examples(c, n):
    assert to_abs(SubframeClock(*c)) == n


@pytest.mark.parametrize("bad", [(1024, 0, 0), (0, 1024, 0), (0, 0, 10), (0, 0, -1)])
def test_out_of_range_fields_rejected(bad):
    with pytest.raises(ValueError):
        SubframeClock(*bad)


abs_sf = st.integers(0, clock.HYPER_CYCLE - 1)


@given(abs_sf)
def test_abs_round_trip(n):
    assert to_abs(from_abs(n)) == n


@given(abs_sf)
def test_advance_is_abs_plus_one_modulo_cycle(n):
    assert to_abs(advance(from_abs(n))) == (n + 1) % clock.HYPER_CYCLE


@given(abs_sf)
def test_advance_matches_digit_oracle(n):
    # oracle: treat (hfn, sfn, sf) as a mixed-radix counter
    c = from_abs(n)
    digits = [c.sf, c.sfn, c.hfn]
    radix = [10, 1024, 1024]
    i = 0
    while i < 3:
        digits[i] += 1
        if digits[i] < radix[i]:
            break
        digits[i] = 0
        i += 1
    assert advance(c) == SubframeClock(digits[2], digits[1], digits[0])


@given(st.integers(0, 10 * clock.SF_PER_HYPERFRAME), st.integers(-4000, 4000))
def test_unwrap_recovers_nearby_time(n, skew):
    near = max(0, n + skew)
    sfn, sf = clock.sfn_sf(n)
    assert unwrap(sfn, sf, near) == n


def test_clock_str():
    assert str(SubframeClock(1, 2, 3)) == "1.2.3"
