"""Event-driven simulation of the swarm.

The three Poisson sources (peer arrivals, the seed's clock, one clock per
peer) are raced as a single aggregate exponential clock: the holding time
is drawn at the total rate, then the event type is chosen proportionally.
This is distributionally identical to racing one exponential per entity;
the oracle cross-checks enforce that as a tested property rather than an
assumption.

On a peer tick the ticking peer samples its source(s) uniformly from all
peers, itself included, so the chance of contacting a peer of profile B is
exactly count(B)/population; a self-contact wastes the tick.  On a seed
tick the seed pushes to a uniformly random peer.
"""

from __future__ import annotations

import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from .model import (
    Arrival,
    Departure,
    ModelParams,
    SwarmState,
    Transfer,
    Transition,
    FrequencySnapshot,
    full_mask,
)
from .policies import (
    ContactContext,
    EwmaEstimate,
    PolicyConfig,
    PolicyKind,
    ewma_update,
    make_selector,
    samples_needed,
)


class TerminationReason(Enum):
    HORIZON_REACHED = "horizon-reached"
    POPULATION_CAP_HIT = "population-cap-hit"


INITIAL_KINDS = ("empty", "one-club")


@dataclass(frozen=True)
class InitialCondition:
    """``empty``: n chunkless peers.  ``one-club``: n peers missing only
    chunk 1 (every other chunk held)."""

    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"initial kind must be one of {INITIAL_KINDS}")
        if self.n < 0:
            raise ValueError("initial peer count must be >= 0")

    def profiles(self, m: int) -> List[int]:
        if self.kind == "empty":
            return [0] * self.n
        return [full_mask(m) & ~1] * self.n


@dataclass(frozen=True)
class Scenario:
    """Complete description of one simulation experiment."""

    params: ModelParams
    policy: PolicyConfig
    initial: InitialCondition
    horizon: float
    rng_seed: int
    max_population: Optional[int] = None
    warmup_departures: int = 2000
    sample_interval: float = 1.0
    # Disable arrivals while the population sits at the cap instead of
    # terminating; this reproduces the oracle's truncated chain exactly.
    block_arrivals_at_cap: bool = False

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if self.sample_interval <= 0:
            raise ValueError("sample_interval must be > 0")
        if self.warmup_departures < 0:
            raise ValueError("warmup_departures must be >= 0")
        if self.cap <= self.initial.n:
            raise ValueError("max_population must exceed the initial population")

    @property
    def cap(self) -> int:
        if self.max_population is not None:
            return self.max_population
        return 10 * self.initial.n + 5000


@dataclass
class EventTrace:
    """What one run produced: a sampled time series, every departure, and
    why the run stopped."""

    m: int
    sample_interval: float
    times: List[float] = field(default_factory=list)
    populations: List[int] = field(default_factory=list)
    frequencies: List[Tuple[float, ...]] = field(default_factory=list)
    departures: List[Tuple[float, float]] = field(default_factory=list)
    termination: TerminationReason = TerminationReason.HORIZON_REACHED
    final_time: float = 0.0
    events: int = 0


def derive_seed(base_seed: int, *indices: int) -> int:
    """Deterministic 128-bit child seed for replication ``indices``."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=indices)
    words = ss.generate_state(4, dtype=np.uint64)
    out = 0
    for w in words:
        out = (out << 64) | int(w)
    return out


_NONE, _ARRIVAL, _TRANSFER, _DEPARTURE = 0, 1, 2, 3


class Simulation:
    """Mutable simulation driver for one scenario.

    Use :func:`run` for the standard horizon-bounded run; :meth:`step`
    advances exactly one event for callers doing their own bookkeeping
    (occupancy measurement, generator cross-checks).
    """

    def __init__(self, scenario: Scenario, seed: Optional[int] = None):
        self.scenario = scenario
        params = scenario.params
        self.m = params.m
        self.full = full_mask(self.m)
        self.rng = random.Random(scenario.rng_seed if seed is None else seed)
        profiles = scenario.initial.profiles(self.m)
        self.state = SwarmState.from_profiles(self.m, profiles)
        self.peers: List[int] = list(profiles)
        self.arrived: List[float] = [0.0] * len(profiles)
        policy = scenario.policy
        self._is_ewma = policy.kind is PolicyKind.EWMA_MS
        self.ewma: List[EwmaEstimate] | None = (
            [EwmaEstimate.zero(self.m) for _ in profiles] if self._is_ewma else None
        )
        self.t = 0.0
        self.events = 0
        self.n_arrivals = 0
        self.departures: List[Tuple[float, float]] = []
        self.termination: Optional[TerminationReason] = None

        self._selector = make_selector(policy)
        self._policy = policy
        self._is_dms = policy.kind is PolicyKind.DISTRIBUTED_MS
        # Everything the event race reads per event, resolved once.
        self._lam = params.arrival_rate
        self._mu = params.peer_contact_rate
        self._seed_rate = params.seed_contact_rate
        self._cap = scenario.cap
        self._block = scenario.block_arrivals_at_cap
        self._fixed_k = (
            None
            if policy.kind is PolicyKind.COMMON_CHUNK
            else samples_needed(policy, 0, self.m)
        )
        self._need_snapshot = policy.kind in (
            PolicyKind.MODE_SUPPRESSION,
            PolicyKind.RAREST_FIRST,
        )
        self._need_histogram = policy.kind is PolicyKind.GROUP_SUPPRESSION
        # Live snapshot shares the state's y vector; only the aggregates
        # are refreshed per contact.
        self._snapshot = FrequencySnapshot(self.m, 0, self.state.y)
        self._ctx = ContactContext(
            m=self.m,
            dest_profile=0,
            sources=[],
            snapshot=self._snapshot if self._need_snapshot else None,
            histogram=self.state.counts if self._need_histogram else None,
        )
        self._full_sources = [self.full]
        self._last_kind = _NONE
        self._last_profile = 0
        self._last_chunk = 0

    # -- event machinery --

    def _total_rate(self) -> Tuple[float, float]:
        """(effective arrival rate, total event rate) for the current state."""
        pop = self.state.population
        lam = 0.0 if (self._block and pop >= self._cap) else self._lam
        rate = lam
        if pop:
            rate += self._seed_rate + self._mu * pop
        return lam, rate

    def _fire(self, lam: float, rate: float) -> None:
        """Resolve one event at the already-advanced clock."""
        rng = self.rng
        u = rng.random() * rate
        if u < lam:
            self.state.add_empty_peer()
            self.peers.append(0)
            self.arrived.append(self.t)
            if self._is_ewma:
                self.ewma.append(EwmaEstimate.zero(self.m))
            self.n_arrivals += 1
            self._last_kind = _ARRIVAL
            if not self._block and self.state.population >= self._cap:
                self.termination = TerminationReason.POPULATION_CAP_HIT
            return
        pop = self.state.population
        if u < lam + self._seed_rate:
            self._contact(rng.randrange(pop), is_seed_push=True)
        else:
            self._contact(rng.randrange(pop), is_seed_push=False)

    def _contact(self, i: int, is_seed_push: bool) -> None:
        rng = self.rng
        peers = self.peers
        dest = peers[i]
        ctx = self._ctx
        ctx.dest_profile = dest
        ctx.is_seed_push = is_seed_push
        pop = self.state.population
        est = None
        if is_seed_push:
            if self._is_dms:
                ctx.sources = self._draw_samples(3, pop)
            else:
                ctx.sources = self._full_sources
            if self._is_ewma:
                est = self.ewma[i]
        else:
            k = self._fixed_k
            if k is None:
                k = samples_needed(self._policy, dest, self.m)
            if k == 1:
                ctx.sources = [peers[rng.randrange(pop)]]
            else:
                ctx.sources = self._draw_samples(k, pop)
            if self._is_ewma:
                est = self.ewma[i]
                alpha = self._policy.alpha
                for b in ctx.sources:
                    ewma_update(est, b, alpha)
        if self._need_snapshot:
            self._snapshot.population = pop
            self._snapshot.refresh()
        chunk = self._selector(ctx, est, rng)
        if chunk is None:
            self._last_kind = _NONE
            return
        new = dest | (1 << (chunk - 1))
        self._last_profile = dest
        self._last_chunk = chunk
        if new == self.full:
            self.state.apply_departure(dest, chunk)
            self.departures.append((self.arrived[i], self.t))
            last = len(peers) - 1
            peers[i] = peers[last]
            peers.pop()
            self.arrived[i] = self.arrived[last]
            self.arrived.pop()
            if self._is_ewma:
                self.ewma[i] = self.ewma[last]
                self.ewma.pop()
            self._last_kind = _DEPARTURE
        else:
            self.state.apply_transfer(dest, chunk)
            peers[i] = new
            self._last_kind = _TRANSFER

    def _draw_samples(self, k: int, pop: int) -> List[int]:
        peers = self.peers
        if pop <= k:
            return peers[:]
        return [peers[j] for j in self.rng.sample(range(pop), k)]

    def step(self) -> Tuple[Optional[Transition], float]:
        """Advance exactly one event; horizon and sampling are the caller's
        concern.  Returns the applied transition (None for a wasted
        contact) and the elapsed holding time."""
        lam, rate = self._total_rate()
        dt = self.rng.expovariate(rate)
        self.t += dt
        self._fire(lam, rate)
        self.events += 1
        kind = self._last_kind
        if kind == _NONE:
            return None, dt
        if kind == _ARRIVAL:
            return Arrival(), dt
        if kind == _TRANSFER:
            return Transfer(self._last_profile, self._last_chunk), dt
        return Departure(self._last_profile, self._last_chunk), dt

    def _record(self, trace: EventTrace, t: float) -> None:
        state = self.state
        pop = state.population
        trace.times.append(t)
        trace.populations.append(pop)
        if pop:
            trace.frequencies.append(tuple(v / pop for v in state.y))
        else:
            trace.frequencies.append((0.0,) * self.m)

    def run(self) -> EventTrace:
        sc = self.scenario
        trace = EventTrace(m=self.m, sample_interval=sc.sample_interval)
        horizon = sc.horizon
        interval = sc.sample_interval
        rng = self.rng
        next_sample = 0.0
        k = 0
        while True:
            lam, rate = self._total_rate()
            t_next = self.t + rng.expovariate(rate)
            while next_sample <= t_next and next_sample <= horizon:
                self._record(trace, next_sample)
                k += 1
                next_sample = k * interval
            if t_next > horizon:
                self.t = horizon
                self.termination = TerminationReason.HORIZON_REACHED
                break
            self.t = t_next
            self._fire(lam, rate)
            self.events += 1
            if self.termination is not None:
                break
        trace.termination = self.termination
        trace.final_time = self.t
        trace.departures = self.departures
        trace.events = self.events
        return trace

    def check_invariants(self) -> None:
        """Debug check: cached y and population match a full recount, no
        stored profile is complete, and peers balance arrivals."""
        state = self.state
        assert state.y == state.recompute_y(), "incremental y diverged"
        assert state.population == sum(state.counts.values())
        assert all(0 <= p < self.full for p in state.counts)
        assert state.population == len(self.peers)
        expected = self.scenario.initial.n + self.n_arrivals - len(self.departures)
        assert state.population == expected, "population conservation violated"


def run(scenario: Scenario, seed: Optional[int] = None) -> EventTrace:
    """Run one scenario to its horizon (or population cap)."""
    return Simulation(scenario, seed=seed).run()


def _run_indexed(args: Tuple[Scenario, int]) -> EventTrace:
    scenario, rep = args
    return run(scenario, seed=derive_seed(scenario.rng_seed, rep))


def run_replications(
    scenario: Scenario, n_reps: int, max_workers: int = 1
) -> List[EventTrace]:
    """Independent replications with per-index derived seeds.

    Replication ``i`` always uses ``derive_seed(scenario.rng_seed, i)``,
    so results are identical whether run sequentially or in parallel.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    jobs = [(scenario, rep) for rep in range(n_reps)]
    if max_workers > 1 and n_reps > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(_run_indexed, jobs))
    return [_run_indexed(job) for job in jobs]
