import random

import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from swarmsim.model import (
    Arrival,
    Departure,
    InvalidTransitionError,
    ModelParams,
    SwarmState,
    Transfer,
    allowable_set,
    apply_transition,
    chunks_of,
    frequency_snapshot,
    full_mask,
    mask_of,
    suppressed_set_ms,
)


def test_mask_roundtrip():
    assert mask_of([1, 3]) == 0b101
    assert chunks_of(0b101) == (1, 3)
    assert mask_of([]) == 0
    assert full_mask(3) == 0b111


class TestFrequencySnapshot:
    def test_chunkless_peers(self):
        snap = frequency_snapshot(SwarmState(2, {0: 3}))
        assert snap.y == [0, 0]
        assert snap.pi == [0.0, 0.0]
        assert snap.total_chunks == 0

    def test_one_club(self):
        snap = frequency_snapshot(SwarmState(3, {mask_of([2, 3]): 10}))
        assert snap.pi == [0.0, 1.0, 1.0]
        assert snap.mode_set == (2, 3)
        assert snap.total_chunks == 20

    def test_mixed_state_by_hand(self):
        # 4 peers, two hold chunk 1, one holds chunk 2
        state = SwarmState(2, {0: 1, mask_of([1]): 2, mask_of([2]): 1})
        snap = frequency_snapshot(state)
        assert snap.y == [2, 1]
        assert snap.pi == [0.5, 0.25]
        assert snap.mode_set == (1,)

    def test_empty_swarm(self):
        snap = frequency_snapshot(SwarmState(3))
        assert snap.y == [0, 0, 0]
        assert snap.pi == [0.0, 0.0, 0.0]
        assert snap.mode_set == (1, 2, 3)


class TestSuppressedSet:
    def test_clear_gap(self):
        # y = (5, 5, 2)
        state = SwarmState(
            3,
            {
                mask_of([1, 2]): 4,
                mask_of([1]): 1,
                mask_of([2]): 1,
                mask_of([3]): 2,
            },
        )
        assert frequency_snapshot(state).y == [5, 5, 2]
        assert suppressed_set_ms(state, 1) == mask_of([1, 2])

    def test_all_tied(self):
        state = SwarmState(3, {mask_of([1, 2]): 4, mask_of([3]): 4})
        assert frequency_snapshot(state).y == [4, 4, 4]
        for threshold in (1, 2, 10):
            assert suppressed_set_ms(state, threshold) == 0

    def test_gap_below_threshold(self):
        state = SwarmState(3, {mask_of([1, 2]): 5, mask_of([3]): 4})
        assert frequency_snapshot(state).y == [5, 5, 4]
        assert suppressed_set_ms(state, 2) == 0
        assert suppressed_set_ms(state, 1) == mask_of([1, 2])

    def test_threshold_validated(self):
        with pytest.raises(ValueError):
            suppressed_set_ms(SwarmState(2), 0)


class TestAllowableSet:
    def test_everything_removed(self):
        assert allowable_set(mask_of([1, 3]), mask_of([3]), mask_of([1, 2])) == 0

    def test_seed_nothing_removed(self):
        assert allowable_set(full_mask(3), 0, 0) == mask_of([1, 2, 3])

    def test_partial(self):
        assert allowable_set(mask_of([2, 3]), mask_of([2]), mask_of([1])) == mask_of([3])


class TestApplyTransition:
    def test_departure(self):
        state = SwarmState(2, {mask_of([1]): 2})
        apply_transition(state, Departure(mask_of([1]), 2))
        assert state.counts == {mask_of([1]): 1}
        assert state.population == 1

    def test_arrival(self):
        state = SwarmState(3, {mask_of([1]): 1})
        apply_transition(state, Arrival())
        assert state.counts[0] == 1
        assert state.population == 2

    def test_transfer(self):
        state = SwarmState(3, {mask_of([1]): 1})
        apply_transition(state, Transfer(mask_of([1]), 2))
        assert state.counts == {mask_of([1, 2]): 1}

    def test_transfer_missing_peer_rejected(self):
        state = SwarmState(3, {mask_of([1]): 1})
        with pytest.raises(InvalidTransitionError):
            apply_transition(state, Transfer(mask_of([2]), 3))

    def test_transfer_of_held_chunk_rejected(self):
        state = SwarmState(3, {mask_of([1]): 1})
        with pytest.raises(InvalidTransitionError):
            apply_transition(state, Transfer(mask_of([1]), 1))

    def test_completing_transfer_rejected(self):
        state = SwarmState(2, {mask_of([1]): 1})
        with pytest.raises(InvalidTransitionError):
            apply_transition(state, Transfer(mask_of([1]), 2))

    def test_early_departure_rejected(self):
        state = SwarmState(3, {mask_of([1]): 1})
        with pytest.raises(InvalidTransitionError):
            apply_transition(state, Departure(mask_of([1]), 2))


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(m=1, arrival_rate=1.0)
    with pytest.raises(ValueError):
        ModelParams(m=5, arrival_rate=0.0)
    with pytest.raises(ValueError):
        ModelParams(m=5, arrival_rate=1.0, peer_contact_rate=-1.0)


# -- properties over random states and transition walks --

small_m = st.integers(min_value=2, max_value=6)


@st.composite
def swarm_states(draw, min_pop=0):
    m = draw(small_m)
    n = draw(st.integers(min_value=min_pop, max_value=30))
    profiles = [
        draw(st.integers(min_value=0, max_value=full_mask(m) - 1)) for _ in range(n)
    ]
    return SwarmState.from_profiles(m, profiles)


@given(swarm_states(min_pop=1))
def test_least_frequent_chunk_bound(state):
    # A peer holds at most m-1 chunks, so the least frequent chunk is held
    # by at most a (m-1)/m fraction of peers.
    snap = frequency_snapshot(state)
    assert min(snap.pi) <= (state.m - 1) / state.m + 1e-12


@given(swarm_states(), st.integers(min_value=1, max_value=4))
def test_suppression_dichotomy(state, threshold):
    snap = frequency_snapshot(state)
    sup = suppressed_set_ms(state, threshold)
    assert sup in (snap.mode_mask, 0)
    if snap.mode_mask == full_mask(state.m):
        assert sup == 0


@given(swarm_states(), st.integers(min_value=1, max_value=3))
def test_no_suppression_caps_top_frequency(state, threshold):
    snap = frequency_snapshot(state)
    if suppressed_set_ms(state, threshold) == 0 and state.population > 2 * threshold * state.m:
        assert max(snap.pi) <= 1 - 1 / (2 * state.m) + 1e-12


@given(swarm_states())
def test_chunk_total_dominates_mode(state):
    snap = frequency_snapshot(state)
    assert snap.total_chunks == sum(snap.y) >= snap.y_max


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=40)
def test_random_walk_conserves_population(seed):
    # Random valid transition walk: population tracks arrivals minus
    # departures, the incremental y never diverges from a recount, and a
    # peer's profile only gains chunks.
    rng = random.Random(seed)
    m = rng.randrange(2, 6)
    state = SwarmState(m)
    arrivals = departures = 0
    for _ in range(200):
        if not state.counts or rng.random() < 0.3:
            apply_transition(state, Arrival())
            arrivals += 1
            continue
        profile = rng.choice(list(state.counts))
        missing = chunks_of(full_mask(m) & ~profile)
        if not missing:
            continue
        chunk = rng.choice(missing)
        before = profile
        if profile.bit_count() == m - 1:
            apply_transition(state, Departure(profile, chunk))
            departures += 1
        else:
            apply_transition(state, Transfer(profile, chunk))
            assert before | mask_of([chunk]) == before + mask_of([chunk])
        assert state.population == arrivals - departures
        assert state.y == state.recompute_y()
        assert all(0 <= p < full_mask(m) for p in state.counts)
        assert all(n > 0 for n in state.counts.values())
