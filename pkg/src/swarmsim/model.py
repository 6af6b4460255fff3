"""Swarm state for chunk-level file sharing.

A file is split into ``m`` chunks, numbered 1..m.  A peer's chunk profile is
the subset of chunks it currently holds, stored as a bit mask (bit ``j-1``
set iff chunk ``j`` is held), so profiles stay small integers for m <= 64.
A peer holding the full profile departs instantly, so every profile stored
in a :class:`SwarmState` is a proper subset of ``[m]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Tuple, Union

MAX_CHUNKS = 64


class InvalidTransitionError(ValueError):
    """A transition whose preconditions do not hold against the state."""


def full_mask(m: int) -> int:
    """Bit mask of the complete chunk set {1, .., m}."""
    return (1 << m) - 1


def chunk_bit(chunk: int) -> int:
    """Bit mask holding only ``chunk`` (1-based)."""
    return 1 << (chunk - 1)


def mask_of(chunks: Iterable[int]) -> int:
    """Bit mask for a collection of 1-based chunk indices."""
    mask = 0
    for c in chunks:
        mask |= 1 << (c - 1)
    return mask


def chunks_of(mask: int) -> Tuple[int, ...]:
    """Sorted 1-based chunk indices present in ``mask``."""
    out = []
    j = 1
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return tuple(out)


def iter_bits(mask: int) -> Iterator[int]:
    """Yield 0-based bit positions set in ``mask``."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def choose_chunk(mask: int, rng) -> int | None:
    """Uniformly random 1-based chunk from ``mask``, or None if empty."""
    n = mask.bit_count()
    if n == 0:
        return None
    k = rng.randrange(n)
    while k:
        mask &= mask - 1
        k -= 1
    return (mask & -mask).bit_length()


@dataclass(frozen=True)
class ModelParams:
    """Rates of the swarm model.

    ``arrival_rate`` is the Poisson rate of new (chunkless) peers,
    ``peer_contact_rate`` the per-peer contact rate, and
    ``seed_contact_rate`` the contact rate of the permanent seed.
    """

    m: int
    arrival_rate: float
    peer_contact_rate: float = 1.0
    seed_contact_rate: float = 1.0

    def __post_init__(self):
        if not 2 <= self.m <= MAX_CHUNKS:
            raise ValueError(f"m must be in [2, {MAX_CHUNKS}], got {self.m}")
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be > 0")
        if self.peer_contact_rate <= 0:
            raise ValueError("peer_contact_rate must be > 0")
        if self.seed_contact_rate <= 0:
            raise ValueError("seed_contact_rate must be > 0")


@dataclass(frozen=True)
class Arrival:
    """A new chunkless peer joins."""


@dataclass(frozen=True)
class Transfer:
    """A peer with ``profile`` receives ``chunk`` and stays (|S| < m-1)."""

    profile: int
    chunk: int


@dataclass(frozen=True)
class Departure:
    """A peer with ``profile`` receives its last missing ``chunk`` and leaves."""

    profile: int
    chunk: int


Transition = Union[Arrival, Transfer, Departure]


class SwarmState:
    """Counts of peers per chunk profile.

    ``counts`` maps profile mask -> number of peers with exactly that
    profile; zero-count profiles are never stored.  ``y[j-1]`` is the
    number of peers holding chunk ``j`` and is maintained incrementally;
    :meth:`recompute_y` re-derives it from scratch as a debug check.
    """

    __slots__ = ("m", "counts", "population", "y")

    def __init__(self, m: int, counts: Dict[int, int] | None = None):
        if not 2 <= m <= MAX_CHUNKS:
            raise ValueError(f"m must be in [2, {MAX_CHUNKS}]")
        self.m = m
        self.counts: Dict[int, int] = {}
        self.population = 0
        self.y: List[int] = [0] * m
        if counts:
            full = full_mask(m)
            for profile, n in counts.items():
                if n < 0:
                    raise ValueError("peer counts must be >= 0")
                if profile < 0 or profile >= full:
                    raise ValueError(f"profile {profile:#x} is not a proper subset of [{m}]")
                if n == 0:
                    continue
                self.counts[profile] = self.counts.get(profile, 0) + n
                self.population += n
                for b in iter_bits(profile):
                    self.y[b] += n

    @classmethod
    def from_profiles(cls, m: int, profiles: Iterable[int]) -> "SwarmState":
        state = cls(m)
        for p in profiles:
            counts = state.counts
            counts[p] = counts.get(p, 0) + 1
            state.population += 1
            for b in iter_bits(p):
                state.y[b] += 1
        if any(p >= full_mask(m) or p < 0 for p in state.counts):
            raise ValueError("profiles must be proper subsets")
        return state

    # -- fast mutators used by the event loop (no precondition checks) --

    def add_empty_peer(self) -> None:
        self.counts[0] = self.counts.get(0, 0) + 1
        self.population += 1

    def apply_transfer(self, profile: int, chunk: int) -> None:
        counts = self.counts
        n = counts[profile]
        if n == 1:
            del counts[profile]
        else:
            counts[profile] = n - 1
        new = profile | (1 << (chunk - 1))
        counts[new] = counts.get(new, 0) + 1
        self.y[chunk - 1] += 1

    def apply_departure(self, profile: int, chunk: int) -> None:
        counts = self.counts
        n = counts[profile]
        if n == 1:
            del counts[profile]
        else:
            counts[profile] = n - 1
        self.population -= 1
        y = self.y
        for b in iter_bits(profile):
            y[b] -= 1

    # -- inspection helpers --

    def recompute_y(self) -> List[int]:
        y = [0] * self.m
        for profile, n in self.counts.items():
            for b in iter_bits(profile):
                y[b] += n
        return y

    def as_vector(self) -> Tuple[int, ...]:
        """Counts over all proper-subset masks 0 .. 2^m - 2 (small m only)."""
        counts = self.counts
        return tuple(counts.get(mask, 0) for mask in range(full_mask(self.m)))

    def copy(self) -> "SwarmState":
        dup = SwarmState(self.m)
        dup.counts = dict(self.counts)
        dup.population = self.population
        dup.y = list(self.y)
        return dup

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SwarmState)
            and self.m == other.m
            and self.counts == other.counts
        )

    def __repr__(self) -> str:
        body = ", ".join(
            f"{set(chunks_of(p)) or '{}'}: {n}" for p, n in sorted(self.counts.items())
        )
        return f"SwarmState(m={self.m}, {{{body}}})"


def apply_transition(state: SwarmState, t: Transition) -> SwarmState:
    """Apply ``t`` to ``state`` in place and return it.

    Raises :class:`InvalidTransitionError` when the transition's
    preconditions do not hold; that always signals a caller bug.
    """
    if isinstance(t, Arrival):
        state.add_empty_peer()
        return state
    if state.counts.get(t.profile, 0) <= 0:
        raise InvalidTransitionError(f"no peer with profile {chunks_of(t.profile)}")
    if t.profile & chunk_bit(t.chunk):
        raise InvalidTransitionError(f"chunk {t.chunk} already in profile")
    size = t.profile.bit_count()
    if isinstance(t, Transfer):
        if size >= state.m - 1:
            raise InvalidTransitionError("transfer would complete the profile; use Departure")
        state.apply_transfer(t.profile, t.chunk)
    elif isinstance(t, Departure):
        if size != state.m - 1:
            raise InvalidTransitionError("departure requires a profile of size m-1")
        state.apply_departure(t.profile, t.chunk)
    else:
        raise InvalidTransitionError(f"unknown transition {t!r}")
    return state


@dataclass
class FrequencySnapshot:
    """Per-chunk occupancy statistics of one swarm state.

    ``y[j-1]`` is the peer count for chunk ``j``; frequencies ``pi`` are
    derived as ``y/population`` (defined as 0 for the empty swarm, in which
    case every chunk ties for the mode).  ``mode_mask`` is the bit mask of
    chunks attaining ``y_max``, and ``total_chunks`` is ``sum(y)``.
    """

    m: int
    population: int
    y: List[int]
    y_max: int = field(init=False)
    y_min: int = field(init=False)
    mode_mask: int = field(init=False)
    total_chunks: int = field(init=False)

    def __post_init__(self):
        self.refresh()

    def refresh(self) -> None:
        """Recompute the aggregate fields from ``y``."""
        y = self.y
        y_max = y_min = y[0]
        total = 0
        for v in y:
            total += v
            if v > y_max:
                y_max = v
            elif v < y_min:
                y_min = v
        mode = 0
        for j, v in enumerate(y):
            if v == y_max:
                mode |= 1 << j
        self.y_max = y_max
        self.y_min = y_min
        self.mode_mask = mode
        self.total_chunks = total

    @property
    def pi(self) -> List[float]:
        if self.population == 0:
            return [0.0] * self.m
        pop = self.population
        return [v / pop for v in self.y]

    @property
    def mode_set(self) -> Tuple[int, ...]:
        return chunks_of(self.mode_mask)


def frequency_snapshot(state: SwarmState) -> FrequencySnapshot:
    """Chunk occupancy statistics of ``state`` (copies the y vector)."""
    return FrequencySnapshot(m=state.m, population=state.population, y=list(state.y))


def suppressed_mask(y_max: int, y_min: int, mode_mask: int, threshold: int) -> int:
    """Suppressed chunks given the extremes of the chunk counts.

    The modes are suppressed exactly when their count exceeds the minimum
    count by at least ``threshold``; otherwise nothing is suppressed.  When
    every chunk ties (including the empty swarm) the gap is zero, so no
    chunk is ever suppressed in that case.
    """
    return mode_mask if y_max >= y_min + threshold else 0


def suppressed_set_ms(state: SwarmState, threshold: int) -> int:
    """Mask of chunks whose transfer mode-suppression forbids in ``state``."""
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    snap = frequency_snapshot(state)
    return suppressed_mask(snap.y_max, snap.y_min, snap.mode_mask, threshold)


def allowable_set(source_profile: int, dest_profile: int, suppressed: int) -> int:
    """Chunks the source may transfer: held by it, needed, not suppressed."""
    return source_profile & ~dest_profile & ~suppressed
