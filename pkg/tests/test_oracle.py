import numpy as np
import pytest
from scipy import sparse

from swarmsim.model import ModelParams, SwarmState, mask_of
from swarmsim.oracle import (
    GeneratorMatrix,
    LyapunovParams,
    ReducibleChainError,
    TruncationSpec,
    build_generator_ms,
    closed_classes,
    drift_report,
    enumerate_states,
    exceptional_states,
    lyapunov_value,
    mean_drift,
    ms_transitions,
    stationary_distribution,
    state_y,
    verify_lemmas,
)

PARAMS2 = ModelParams(m=2, arrival_rate=1.0)


class TestEnumeration:
    def test_cap_one(self):
        states = enumerate_states(TruncationSpec(2, 1))
        assert set(states) == {(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)}

    def test_cap_zero(self):
        assert enumerate_states(TruncationSpec(2, 0)) == [(0, 0, 0)]

    def test_cap_two_stars_and_bars(self):
        assert len(enumerate_states(TruncationSpec(2, 2))) == 10

    def test_deterministic_order(self):
        assert enumerate_states(TruncationSpec(2, 3)) == enumerate_states(
            TruncationSpec(2, 3)
        )

    def test_state_count_guard(self):
        with pytest.raises(ValueError, match="guard"):
            TruncationSpec(m=5, cap=100)

    def test_state_y(self):
        # masks: 0 empty, 1 {1}, 2 {2}
        assert state_y((3, 2, 1), 2) == [2, 1]


class TestGenerator:
    def test_rows_sum_to_zero(self):
        gen = build_generator_ms(TruncationSpec(2, 6), PARAMS2, 1)
        residual = np.abs(np.asarray(gen.matrix.sum(axis=1))).max()
        assert residual < 1e-12

    def test_hand_computed_rate(self):
        # x = {(1): 2, (2): 1}: a {1}-peer finishing via chunk 2 has rate
        # (2/3) (U/1 + mu (1/1)) = 4/3, the exact endgame case.
        gen = build_generator_ms(TruncationSpec(2, 6), PARAMS2, 1)
        i = gen.index[(0, 2, 1)]
        j = gen.index[(0, 1, 1)]
        assert gen.matrix[i, j] == pytest.approx(4.0 / 3.0, rel=1e-12)

    def test_suppressed_chunk_has_zero_rate(self):
        # same state: chunk 1 is the suppressed mode (y = (2, 1)), so the
        # {2}-peer cannot finish.
        gen = build_generator_ms(TruncationSpec(2, 6), PARAMS2, 1)
        i = gen.index[(0, 2, 1)]
        j = gen.index[(0, 2, 0)]
        assert gen.matrix[i, j] == 0.0

    def test_arrival_disabled_at_cap(self):
        gen = build_generator_ms(TruncationSpec(2, 2), PARAMS2, 1)
        i = gen.index[(2, 0, 0)]
        row = gen.matrix.getrow(i)
        # seed transfers remain (rate U/2 each), but population never grows
        targets = {gen.states[j] for j in row.indices if j != i}
        assert targets == {(1, 1, 0), (1, 0, 1)}
        assert gen.matrix[i, gen.index[(1, 1, 0)]] == pytest.approx(0.5)

    def test_transitions_stay_in_space(self):
        spec = TruncationSpec(2, 4)
        gen = build_generator_ms(spec, PARAMS2, 1)
        coo = gen.matrix.tocoo()
        offdiag = [(i, j, v) for i, j, v in zip(coo.row, coo.col, coo.data) if i != j]
        assert all(v > 0 for _, _, v in offdiag)
        assert all(sum(gen.states[j]) <= spec.cap for _, j, _ in offdiag)


class TestStationary:
    def test_single_state(self):
        gen = build_generator_ms(TruncationSpec(2, 0), PARAMS2, 1)
        assert stationary_distribution(gen).tolist() == [1.0]

    def test_residual(self):
        gen = build_generator_ms(TruncationSpec(2, 8), PARAMS2, 1)
        p = stationary_distribution(gen)
        assert p.min() >= 0.0
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.abs(p @ gen.matrix).max() < 1e-10

    def test_unreachable_transients_get_zero(self):
        # Under T=1 a pair of peers holding only chunk 1 can never arise
        # from the recurrent class; the solve must park it at zero.
        gen = build_generator_ms(TruncationSpec(2, 8), PARAMS2, 1)
        p = stationary_distribution(gen)
        assert p[gen.index[(0, 2, 0)]] == 0.0

    def test_multiple_closed_classes_rejected(self):
        states = [(0, 0, 0), (1, 0, 0)]
        matrix = sparse.csr_matrix(np.zeros((2, 2)))  # both absorbing
        gen = GeneratorMatrix(
            spec=TruncationSpec(2, 1),
            params=PARAMS2,
            threshold=1,
            states=states,
            index={s: i for i, s in enumerate(states)},
            matrix=matrix,
            populations=np.array([0, 1]),
            y_vectors=np.zeros((2, 2), dtype=np.int64),
        )
        with pytest.raises(ReducibleChainError, match=r"\(1, 0, 0\)"):
            stationary_distribution(gen)

    def test_truncated_chain_has_unique_closed_class(self):
        for threshold in (1, 2):
            gen = build_generator_ms(TruncationSpec(2, 6), PARAMS2, threshold)
            assert len(closed_classes(gen)) == 1


LP = LyapunovParams(c1=2.0, c2=40.0, m_const=10.0, epsilon=0.5, threshold=1)


class TestLyapunov:
    def test_compliance_validation(self):
        LP.validate(PARAMS2)
        with pytest.raises(ValueError):
            LyapunovParams(c1=1.0, c2=40.0, m_const=10.0, epsilon=0.5, threshold=1).validate(PARAMS2)
        with pytest.raises(ValueError):
            LyapunovParams(c1=2.0, c2=1.0, m_const=10.0, epsilon=0.5, threshold=1).validate(PARAMS2)

    def test_compliant_constructor(self):
        lp = LyapunovParams.compliant(PARAMS2, threshold=1, m_const=16.0)
        lp.validate(PARAMS2)
        assert lp.c1 == pytest.approx(2.0)

    def test_empty_state_value(self):
        assert lyapunov_value(SwarmState(2), LP) == LP.c2 * LP.m_const

    def test_single_empty_peer(self):
        state = SwarmState(2, {0: 1})
        assert lyapunov_value(state, LP) == LP.c1 + LP.c2 * LP.m_const

    def test_balanced_state(self):
        # y1 = y2 = 4 with 8 peers and r = 8 above m_const=5
        lp = LyapunovParams(c1=2.0, c2=40.0, m_const=5.0, epsilon=0.5, threshold=1)
        state = SwarmState(2, {mask_of([1]): 4, mask_of([2]): 4})
        assert lyapunov_value(state, lp) == lp.c1 * (8 - 4)

    def test_empty_state_drift_is_arrival_term(self):
        gen = build_generator_ms(TruncationSpec(2, 6), PARAMS2, 1)
        drift = mean_drift((0, 0, 0), gen, LP)
        assert drift == pytest.approx(PARAMS2.arrival_rate * LP.c1, rel=1e-12)

    def test_zero_row_zero_drift(self):
        # cap 0: the empty state has its arrival disabled, so nothing at all
        # can happen and the drift vanishes
        gen = build_generator_ms(TruncationSpec(2, 0), PARAMS2, 1)
        assert mean_drift((0, 0, 0), gen, LP) == 0.0

    def test_one_club_drift_negative(self):
        # One-club states {(2): k}: the departure of a one-club peer drops
        # the quadratic spread by 2k-1 but pays the chunk-shortfall penalty
        # c2 while k <= m_const, so drift turns negative only once the club
        # outgrows m_const; smaller clubs belong to the finite exceptional
        # set the stability argument allows.
        cap = 10
        gen = build_generator_ms(TruncationSpec(2, cap), PARAMS2, 1)
        lp = LyapunovParams.compliant(PARAMS2, threshold=1, m_const=4.0)
        for k in (6, 7, 8, 9):
            assert mean_drift((0, 0, k), gen, lp) < 0.0
        assert mean_drift((0, 0, 2), gen, lp) > 0.0  # inside the finite set

    def test_drift_report_flags_boundary(self):
        gen = build_generator_ms(TruncationSpec(2, 4), PARAMS2, 1)
        rows = drift_report(gen, LP)
        assert len(rows) == gen.n_states
        for row in rows:
            assert row.boundary == (row.population == 4)
            assert row.region in ("suppressed", "uniform", "within-threshold")

    def test_exceptional_set_is_interior(self):
        gen = build_generator_ms(TruncationSpec(2, 8), PARAMS2, 1)
        lp = LyapunovParams.compliant(PARAMS2, threshold=1, m_const=8.0)
        exceptional = exceptional_states(gen, lp)
        assert all(sum(s) < 8 for s in exceptional)


class TestLemmas:
    @pytest.mark.parametrize("m,cap,threshold", [(2, 6, 1), (2, 6, 2), (3, 5, 2)])
    def test_zero_violations(self, m, cap, threshold):
        params = ModelParams(m=m, arrival_rate=1.0)
        report = verify_lemmas(TruncationSpec(m, cap), params, threshold)
        assert report.ok, report.violations
        assert report.states_checked == TruncationSpec(m, cap).state_count()

    def test_corrupted_rate_detected(self):
        spec = TruncationSpec(2, 6)
        gen = build_generator_ms(spec, PARAMS2, 1)
        bad = gen.matrix.tolil()
        i = gen.index[(0, 2, 1)]
        j = gen.index[(0, 1, 1)]
        bad[i, j] = bad[i, j] * 3.0  # break the endgame equality case
        corrupted = GeneratorMatrix(
            spec=spec,
            params=PARAMS2,
            threshold=1,
            states=gen.states,
            index=gen.index,
            matrix=bad.tocsr(),
            populations=gen.populations,
            y_vectors=gen.y_vectors,
        )
        report = verify_lemmas(spec, PARAMS2, 1, gen=corrupted)
        assert not report.ok
        assert report.violations.get("rate-equality") or report.violations.get(
            "rate-bounds"
        )
        assert "(0, 2, 1)" in str(report.violations)

    def test_ms_transitions_empty_state(self):
        assert ms_transitions((0, 0, 0), PARAMS2, 1) == []
