"""Exact verification on truncated state spaces.

For desk-scale instances the swarm's continuous-time Markov chain can be
enumerated outright: states are count vectors over the proper-subset
profiles, truncated by disabling arrivals once the population reaches a
cap (all other rates stay exact).  On that space we build the
mode-suppression generator from its closed-form rates, solve for the
stationary distribution, evaluate the quadratic-potential drift, and
check the model's structural inequalities state by state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .model import ModelParams, full_mask, iter_bits, suppressed_mask

MAX_STATES = 1_000_000

StateVec = Tuple[int, ...]


class ReducibleChainError(RuntimeError):
    """The truncated chain has more than one closed communicating class."""


@dataclass(frozen=True)
class TruncationSpec:
    """Finite window on the state space: populations up to ``cap``, with
    arrivals disabled at the boundary."""

    m: int
    cap: int

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.cap < 0:
            raise ValueError("cap must be >= 0")
        if self.state_count() > MAX_STATES:
            raise ValueError(
                f"{self.state_count()} states exceed the {MAX_STATES} guard"
            )

    @property
    def n_profiles(self) -> int:
        return full_mask(self.m)  # proper subsets: masks 0 .. 2^m - 2

    def state_count(self) -> int:
        return math.comb(self.cap + self.n_profiles, self.n_profiles)


def _count_vectors(length: int, budget: int) -> Iterator[StateVec]:
    if length == 0:
        yield ()
        return
    for first in range(budget + 1):
        for rest in _count_vectors(length - 1, budget - first):
            yield (first,) + rest


def enumerate_states(spec: TruncationSpec) -> List[StateVec]:
    """All states with population <= cap, in lexicographic order of the
    count vector (index ``i`` counts peers of profile mask ``i``)."""
    return list(_count_vectors(spec.n_profiles, spec.cap))


def state_y(state: StateVec, m: int) -> List[int]:
    """Per-chunk peer counts of an enumerated state."""
    y = [0] * m
    for mask, n in enumerate(state):
        if n:
            for b in iter_bits(mask):
                y[b] += n
    return y


def _suppressed(y: Sequence[int], threshold: int) -> int:
    y_max = max(y)
    y_min = min(y)
    mode = 0
    for j, v in enumerate(y):
        if v == y_max:
            mode |= 1 << j
    return suppressed_mask(y_max, y_min, mode, threshold)


@dataclass
class GeneratorMatrix:
    """Sparse rate matrix over the enumerated states, plus per-state
    population and chunk counts for reuse by the checks."""

    spec: TruncationSpec
    params: ModelParams
    threshold: int
    states: List[StateVec]
    index: Dict[StateVec, int]
    matrix: sparse.csr_matrix
    populations: np.ndarray
    y_vectors: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.states)


def ms_transitions(
    state: StateVec, params: ModelParams, threshold: int
) -> List[Tuple[int, int, float, StateVec]]:
    """Positive-rate mode-suppression transitions out of ``state`` as
    ``(profile, chunk, rate, target)`` tuples, arrivals excluded.

    The rate for a profile-S peer to receive chunk j sums a seed term and
    one term per source profile holding j, each divided by the size of
    the corresponding allowable transfer set; suppressed chunks get no
    transition at all.
    """
    m = params.m
    pop = sum(state)
    if pop == 0:
        return []
    full = full_mask(m)
    y = state_y(state, m)
    sup = _suppressed(y, threshold)
    mu = params.peer_contact_rate
    seed_rate = params.seed_contact_rate
    out = []
    holders = [
        (mask, n) for mask, n in enumerate(state) if n
    ]
    for s, x_s in holders:
        if not x_s:
            continue
        allowed = full & ~s & ~sup
        for j_bit in iter_bits(allowed):
            j = j_bit + 1
            blocked = s | sup
            h_seed = (full & ~blocked).bit_count()
            peer_sum = 0.0
            for b, x_b in holders:
                if b >> j_bit & 1:
                    peer_sum += x_b / (b & ~blocked).bit_count()
            rate = (x_s / pop) * (seed_rate / h_seed + mu * peer_sum)
            target = list(state)
            target[s] -= 1
            new = s | (1 << j_bit)
            if new != full:
                target[new] += 1
            out.append((s, j, rate, tuple(target)))
    return out


def build_generator_ms(
    spec: TruncationSpec, params: ModelParams, threshold: int
) -> GeneratorMatrix:
    """Exact mode-suppression generator on the truncated space."""
    if params.m != spec.m:
        raise ValueError("params.m must match the truncation spec")
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    states = enumerate_states(spec)
    index = {s: i for i, s in enumerate(states)}
    m = spec.m
    n = len(states)
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    pops = np.zeros(n, dtype=np.int64)
    ys = np.zeros((n, m), dtype=np.int64)
    lam = params.arrival_rate
    for i, state in enumerate(states):
        pop = sum(state)
        pops[i] = pop
        ys[i] = state_y(state, m)
        diag = 0.0
        if pop < spec.cap:
            target = (state[0] + 1,) + state[1:]
            rows.append(i)
            cols.append(index[target])
            vals.append(lam)
            diag += lam
        for _, _, rate, target in ms_transitions(state, params, threshold):
            rows.append(i)
            cols.append(index[target])
            vals.append(rate)
            diag += rate
        if diag:
            rows.append(i)
            cols.append(i)
            vals.append(-diag)
    matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return GeneratorMatrix(
        spec=spec,
        params=params,
        threshold=threshold,
        states=states,
        index=index,
        matrix=matrix,
        populations=pops,
        y_vectors=ys,
    )


def closed_classes(gen: GeneratorMatrix) -> List[List[int]]:
    """Strongly connected components with no outgoing rate, i.e. the
    recurrent classes of the truncated chain."""
    adj = gen.matrix.copy()
    adj.setdiag(0)
    adj.eliminate_zeros()
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    open_comp = set()
    coo = adj.tocoo()
    for i, j in zip(coo.row, coo.col):
        if labels[i] != labels[j]:
            open_comp.add(labels[i])
    closed: Dict[int, List[int]] = {}
    for i, lab in enumerate(labels):
        if lab not in open_comp:
            closed.setdefault(lab, []).append(i)
    return list(closed.values())


def stationary_distribution(gen: GeneratorMatrix) -> np.ndarray:
    """Stationary probability vector of the truncated chain.

    States that cannot be revisited (transient under the truncation) get
    probability zero; more than one closed class means the stationary law
    is not unique and raises :class:`ReducibleChainError` naming states
    from the competing classes.
    """
    n = gen.n_states
    if n == 1:
        return np.ones(1)
    classes = closed_classes(gen)
    if len(classes) > 1:
        names = []
        for cls in classes:
            names.extend(str(gen.states[i]) for i in cls[:3])
        raise ReducibleChainError(
            f"{len(classes)} closed classes; stranded states: {', '.join(names)}"
        )
    a = gen.matrix.transpose().tolil()
    a[0, :] = 1.0
    b = np.zeros(n)
    b[0] = 1.0
    p = spsolve(a.tocsc(), b)
    p = np.where(np.abs(p) < 1e-15, 0.0, p)
    if p.min() < 0 or p.sum() <= 0:
        raise RuntimeError("stationary solve produced an invalid vector")
    p = p / p.sum()
    residual = np.abs(p @ gen.matrix).max()
    if residual > 1e-10:
        raise RuntimeError(f"stationary residual {residual:.3e} exceeds 1e-10")
    return p


# -- quadratic potential and drift --


@dataclass(frozen=True)
class LyapunovParams:
    """Constants of the stability potential.

    The potential penalizes spread between chunk counts, peers beyond the
    best-stocked chunk, and a shortfall of total chunks below ``m_const``:
    ``V = sum_i (y_max - y_i)^2 + c1 (pop - y_max) + c2 (m_const - r)+``.
    """

    c1: float
    c2: float
    m_const: float
    epsilon: float
    threshold: int

    def validate(self, params: ModelParams) -> None:
        m = params.m
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        if self.c1 <= (2 * self.threshold - 1) * (m - 1):
            raise ValueError("c1 must exceed (2T-1)(m-1)")
        lower = 2 * m * m * (self.c1 * params.arrival_rate + self.epsilon)
        if self.c2 < lower / params.seed_contact_rate:
            raise ValueError("c2 must be at least 2 m^2 (c1 lambda + eps) / U")
        if self.m_const <= 0:
            raise ValueError("m_const must be > 0")

    @classmethod
    def compliant(
        cls,
        params: ModelParams,
        threshold: int,
        m_const: float,
        epsilon: float = 0.5,
    ) -> "LyapunovParams":
        """Smallest constants satisfying the structural constraints."""
        m = params.m
        c1 = (2 * threshold - 1) * (m - 1) + 1.0
        c2 = 2 * m * m * (c1 * params.arrival_rate + epsilon) / params.seed_contact_rate
        lp = cls(c1=c1, c2=c2, m_const=m_const, epsilon=epsilon, threshold=threshold)
        lp.validate(params)
        return lp


def _lyapunov(y: Sequence[int], pop: int, lp: LyapunovParams) -> float:
    y_max = max(y)
    spread = sum((y_max - v) ** 2 for v in y)
    r = sum(y)
    shortfall = lp.m_const - r
    return spread + lp.c1 * (pop - y_max) + lp.c2 * (shortfall if shortfall > 0 else 0.0)


def lyapunov_value(state, lp: LyapunovParams) -> float:
    """Potential of a :class:`~swarmsim.model.SwarmState`."""
    return _lyapunov(state.y, state.population, lp)


def mean_drift(state: StateVec, gen: GeneratorMatrix, lp: LyapunovParams) -> float:
    """Exact expected rate of change of the potential out of ``state``.

    Boundary states (population at the cap) are still computable but
    biased by the missing arrival; callers should exclude them from
    negativity checks, as :func:`drift_report` flags.
    """
    i = gen.index[state]
    m = gen.spec.m
    v_here = _lyapunov(gen.y_vectors[i], int(gen.populations[i]), lp)
    row = gen.matrix.getrow(i)
    total = 0.0
    for j, rate in zip(row.indices, row.data):
        if j == i:
            continue
        v_there = _lyapunov(gen.y_vectors[j], int(gen.populations[j]), lp)
        total += rate * (v_there - v_here)
    return total


@dataclass(frozen=True)
class DriftRow:
    index: int
    state: StateVec
    population: int
    value: float
    drift: float
    boundary: bool
    region: str


def _region_tag(y: Sequence[int], threshold: int) -> str:
    sup = _suppressed(y, threshold)
    if sup:
        return "suppressed"
    if max(y) == min(y):
        return "uniform"
    return "within-threshold"


def drift_report(gen: GeneratorMatrix, lp: LyapunovParams) -> List[DriftRow]:
    """Potential and drift for every enumerated state."""
    rows = []
    for i, state in enumerate(gen.states):
        pop = int(gen.populations[i])
        y = gen.y_vectors[i]
        rows.append(
            DriftRow(
                index=i,
                state=state,
                population=pop,
                value=_lyapunov(y, pop, lp),
                drift=mean_drift(state, gen, lp),
                boundary=pop == gen.spec.cap,
                region=_region_tag(y, gen.threshold),
            )
        )
    return rows


def exceptional_states(gen: GeneratorMatrix, lp: LyapunovParams) -> List[StateVec]:
    """Non-boundary states whose drift is not below ``-epsilon``."""
    return [
        row.state
        for row in drift_report(gen, lp)
        if not row.boundary and row.drift > -lp.epsilon
    ]


# -- lemma verification --


@dataclass
class LemmaReport:
    """Violations found per named check; empty lists everywhere means the
    whole enumerated space passed."""

    spec: TruncationSpec
    threshold: int
    states_checked: int
    violations: Dict[str, List[str]] = field(default_factory=dict)

    def record(self, lemma: str, witness: str) -> None:
        self.violations.setdefault(lemma, []).append(witness)

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())

    def total_violations(self) -> int:
        return sum(len(v) for v in self.violations.values())


def _check_rate_bounds(
    gen: GeneratorMatrix, report: LemmaReport, rel_tol: float = 1e-12
) -> None:
    """Transition-rate sandwich against the matrix entries.

    For a transferable chunk j (not suppressed), the rate out of profile S
    lies between (x_S / m pop) R_j and (x_S / pop) R_j with R_j = U + mu y_j,
    and equals the upper end exactly when S misses only chunk j.
    """
    params = gen.params
    m = gen.spec.m
    full = full_mask(m)
    mu = params.peer_contact_rate
    seed_rate = params.seed_contact_rate
    mat = gen.matrix
    for i, state in enumerate(gen.states):
        pop = int(gen.populations[i])
        if pop == 0:
            continue
        y = gen.y_vectors[i]
        sup = _suppressed(y, gen.threshold)
        row = mat.getrow(i)
        entries = dict(zip(row.indices, row.data))
        for s, x_s in enumerate(state):
            if not x_s:
                continue
            for j_bit in iter_bits(full & ~s & ~sup):
                j = j_bit + 1
                r_j = seed_rate + mu * int(y[j_bit])
                new = s | (1 << j_bit)
                target = list(state)
                target[s] -= 1
                if new != full:
                    target[new] += 1
                q = entries.get(gen.index[tuple(target)], 0.0)
                upper = x_s / pop * r_j
                lower = x_s / (m * pop) * r_j
                if new == full:  # S misses only j: exact rate
                    if abs(q - upper) > rel_tol * upper:
                        report.record(
                            "rate-equality",
                            f"state={state} S={s:#x} j={j} q={q!r} expected={upper!r}",
                        )
                else:
                    if q > upper * (1 + rel_tol) or q < lower * (1 - rel_tol):
                        report.record(
                            "rate-bounds",
                            f"state={state} S={s:#x} j={j} q={q!r} "
                            f"bounds=({lower!r}, {upper!r})",
                        )


def verify_lemmas(
    spec: TruncationSpec,
    params: ModelParams,
    threshold: int,
    gen: Optional[GeneratorMatrix] = None,
) -> LemmaReport:
    """Check the structural inequalities over every enumerated state.

    Checks, each recorded with a witness state on failure: the least
    frequent chunk has frequency at most (m-1)/m; with nothing suppressed
    and population above 2 T m, the top frequency is at most 1 - 1/(2m);
    the transition-rate sandwich and its exact case (see
    :func:`_check_rate_bounds`); and the fraction of peers missing only
    chunk j never exceeds the top chunk frequency.
    """
    if gen is None:
        gen = build_generator_ms(spec, params, threshold)
    m = spec.m
    full = full_mask(m)
    report = LemmaReport(
        spec=spec, threshold=threshold, states_checked=gen.n_states
    )
    for i, state in enumerate(gen.states):
        pop = int(gen.populations[i])
        if pop == 0:
            continue
        y = gen.y_vectors[i]
        pi_min = min(y) / pop
        pi_max = max(y) / pop
        if pi_min > (m - 1) / m + 1e-12:
            report.record("min-frequency", f"state={state} pi_min={pi_min}")
        if not _suppressed(y, threshold) and pop > 2 * threshold * m:
            if pi_max > 1 - 1 / (2 * m) + 1e-12:
                report.record("max-frequency", f"state={state} pi_max={pi_max}")
        for j_bit in range(m):
            almost = full & ~(1 << j_bit)
            gamma = state[almost] / pop
            if gamma > pi_max + 1e-12:
                report.record(
                    "one-missing-fraction",
                    f"state={state} j={j_bit + 1} gamma={gamma} pi_max={pi_max}",
                )
    _check_rate_bounds(gen, report)
    return report
