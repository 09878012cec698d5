import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grazelab.census import Itinerary, is_maximin, rotation_number

from oracles import brute_force_maximin


class TestRotationNumber:
    def test_single_spike_block(self):
        r = rotation_number(Itinerary(bits=(0,) * 7 + (1,)))
        assert (r.p, r.q) == (1, 8)

    def test_alternating(self):
        r = rotation_number(Itinerary(bits=(0, 1)))
        assert (r.p, r.q) == (1, 2)

    def test_worked_example_block(self):
        r = rotation_number(Itinerary(bits=(0, 0, 1, 0, 1)))
        assert (r.p, r.q) == (2, 5)

    def test_reduction_recorded(self):
        r = rotation_number(Itinerary(bits=(0, 1, 0, 1)))
        assert (r.p_raw, r.q_raw) == (2, 4)
        assert (r.p, r.q) == (1, 2)
        assert r.value == 0.5

    @given(bits=st.lists(st.integers(0, 1), min_size=1, max_size=12),
           k=st.integers(0, 11))
    @settings(max_examples=60, deadline=None)
    def test_invariant_under_rotation(self, bits, k):
        bits = tuple(bits)
        k = k % len(bits)
        rot = bits[k:] + bits[:k]
        a = rotation_number(Itinerary(bits=bits))
        b = rotation_number(Itinerary(bits=rot))
        assert (a.p, a.q) == (b.p, b.q)


class TestMaximin:
    def test_worked_example_positive(self):
        assert is_maximin((0, 0, 1, 0, 1))

    def test_worked_example_negative(self):
        assert not is_maximin((0, 0, 0, 1, 1))

    def test_trivial_blocks(self):
        assert is_maximin((0,))
        assert is_maximin((1,))
        assert is_maximin((0, 0, 0))
        assert is_maximin((1, 1, 1, 1))

    def test_length_cap(self):
        with pytest.raises(ValueError):
            is_maximin((0, 1) * 32)

    @given(bits=st.lists(st.integers(0, 1), min_size=1, max_size=10),
           k=st.integers(0, 9))
    @settings(max_examples=80, deadline=None)
    def test_invariant_under_rotation(self, bits, k):
        bits = tuple(bits)
        k = k % len(bits)
        rot = bits[k:] + bits[:k]
        assert is_maximin(bits) == is_maximin(rot)

    @pytest.mark.parametrize("q", range(1, 11))
    def test_exhaustive_agreement_with_brute_force(self, q):
        for bits in itertools.product((0, 1), repeat=q):
            assert is_maximin(bits) == brute_force_maximin(bits), bits
