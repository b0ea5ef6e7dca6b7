"""Retrieval metrics against independent brute-force calculators.

The brute-force oracles below re-derive each metric from first principles
with plain loops; the production implementations must match them exactly
(rank arithmetic is integer, so no tolerance).
"""

import numpy as np
import pytest

from streamhash import index, metrics
from streamhash.errors import DimensionError, DomainError
from streamhash.index import RetrievalResult
from streamhash.metrics import CurvePoint


# --- independent oracles -----------------------------------------------------

def bf_average_precision(ranked_rel, total_relevant):
    # per-rank precision terms land in a full-length vector (zeros at
    # non-hit ranks) so the final float sum is associativity-identical to
    # any other full-length summation of the same exact terms
    terms = np.zeros(len(ranked_rel))
    hits = 0
    for r, rel in enumerate(ranked_rel, start=1):
        if rel:
            hits += 1
            terms[r - 1] = hits / r
    return float(terms.sum() / total_relevant) if total_relevant else 0.0


def bf_rank(query_bits, db_bits):
    dists = [(int(np.sum(query_bits != db_bits[:, i])), i) for i in range(db_bits.shape[1])]
    return [i for _, i in sorted(dists)]


def bf_metrics(query_bits, q_label, db_bits, db_labels, cutoff, r_max):
    order = bf_rank(query_bits, db_bits)
    rel = [db_labels[i] == q_label for i in order]
    ap = bf_average_precision(rel, sum(db_labels == q_label))
    ap_c = bf_average_precision(rel[:cutoff], sum(rel[:cutoff]))
    ball = [db_labels[i] == q_label
            for i in range(db_bits.shape[1])
            if np.sum(query_bits != db_bits[:, i]) <= 2]
    ph2 = sum(ball) / len(ball) if ball else 0.0
    p_at_r = [sum(rel[:r]) / r for r in range(1, r_max + 1)]
    return ap, ap_c, ph2, p_at_r


def make_instance(seed, n_db=20, n_q=5, k=8):
    rng = np.random.default_rng(seed)
    db_B = rng.choice([-1.0, 1.0], size=(k, n_db))
    q_B = rng.choice([-1.0, 1.0], size=(k, n_q))
    db_labels = rng.integers(0, 3, size=n_db)
    q_labels = rng.integers(0, 3, size=n_q)
    db = index.pack(db_B, db_labels)
    queries = index.pack(q_B, q_labels)
    return db_B, q_B, db_labels, q_labels, db, queries


# --- average precision -------------------------------------------------------

class TestAveragePrecision:
    def test_single_relevant_at_rank_one(self):
        result = RetrievalResult(ranked_ids=np.arange(3), distances=np.array([0, 1, 2]))
        rel = np.array([True, False, False])
        assert metrics.average_precision(result, rel) == 1.0

    def test_hand_case_one_zero_one(self):
        result = RetrievalResult(ranked_ids=np.arange(3), distances=np.array([0, 1, 2]))
        rel = np.array([True, False, True])
        assert metrics.average_precision(result, rel) == pytest.approx(5.0 / 6.0, abs=1e-15)

    def test_no_relevant_items(self):
        result = RetrievalResult(ranked_ids=np.arange(4), distances=np.arange(4))
        assert metrics.average_precision(result, np.zeros(4, dtype=bool)) == 0.0

    def test_all_relevant_first_is_maximal(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(2, 15))
            n_rel = int(rng.integers(1, n + 1))
            rel = np.zeros(n, dtype=bool)
            best_ids = np.arange(n)
            rel[:n_rel] = True  # relevant items occupy the top ranks
            result = RetrievalResult(ranked_ids=best_ids, distances=np.arange(n))
            assert metrics.average_precision(result, rel) == 1.0

    def test_cutoff_denominator_uses_relevant_within_cutoff(self):
        result = RetrievalResult(ranked_ids=np.arange(4), distances=np.arange(4))
        rel = np.array([True, False, False, True])
        # top-2 holds one relevant item at rank 1
        assert metrics.average_precision(result, rel, cutoff=2) == 1.0

    def test_length_mismatch(self):
        result = RetrievalResult(ranked_ids=np.arange(3), distances=np.arange(3))
        with pytest.raises(DimensionError):
            metrics.average_precision(result, np.zeros(5, dtype=bool))


class TestMeanAp:
    def test_single_query_equals_its_ap(self):
        db_B, q_B, db_labels, q_labels, db, _ = make_instance(1, n_q=1)
        queries = index.pack(q_B[:, :1], q_labels[:1])
        result = index.search(queries.words[0], db)
        rel = db_labels == q_labels[0]
        assert metrics.mean_ap(queries, db) == metrics.average_precision(result, rel)

    def test_full_cutoff_equals_plain(self):
        _, _, _, _, db, queries = make_instance(2)
        assert metrics.mean_ap(queries, db, cutoff=db.n) == metrics.mean_ap(queries, db)

    def test_matches_brute_force(self):
        for seed in range(5):
            db_B, q_B, db_labels, q_labels, db, queries = make_instance(seed)
            expected = np.mean([
                bf_metrics(q_B[:, i], q_labels[i], db_B, db_labels, 7, 10)[0]
                for i in range(q_B.shape[1])
            ])
            assert metrics.mean_ap(queries, db) == expected
            expected_c = np.mean([
                bf_metrics(q_B[:, i], q_labels[i], db_B, db_labels, 7, 10)[1]
                for i in range(q_B.shape[1])
            ])
            assert metrics.mean_ap(queries, db, cutoff=7) == expected_c

    def test_empty_query_set(self):
        _, _, _, _, db, _ = make_instance(3)
        empty = index.pack(np.ones((8, 1)), np.array([0]))
        empty.n = 0
        with pytest.raises(DomainError):
            metrics.mean_ap(empty, db)


class TestPrecisionH2:
    def test_hand_case(self):
        # three items at distance 0 (two sharing the label), one at distance 3
        k = 3
        q = index.pack(np.ones((k, 1)), np.array([0]))
        db_B = np.ones((k, 4))
        db_B[:, 3] = -1.0
        db = index.pack(db_B, np.array([0, 0, 1, 0]))
        assert metrics.precision_h2(q, db) == pytest.approx(2.0 / 3.0, abs=1e-15)

    def test_all_identical(self):
        q = index.pack(np.ones((5, 1)), np.array([2]))
        db = index.pack(np.ones((5, 6)), np.full(6, 2))
        assert metrics.precision_h2(q, db) == 1.0

    def test_empty_ball_contributes_zero(self):
        q = index.pack(np.ones((8, 1)), np.array([0]))
        db = index.pack(-np.ones((8, 3)), np.zeros(3, dtype=int))
        assert metrics.precision_h2(q, db) == 0.0

    def test_matches_brute_force(self):
        for seed in range(5):
            db_B, q_B, db_labels, q_labels, db, queries = make_instance(seed, k=4)
            expected = np.mean([
                bf_metrics(q_B[:, i], q_labels[i], db_B, db_labels, 7, 10)[2]
                for i in range(q_B.shape[1])
            ])
            assert metrics.precision_h2(queries, db) == expected


class TestPrecisionAtR:
    def test_trivial_top2(self):
        q = index.pack(np.ones((4, 1)), np.array([0]))
        db_B = np.ones((4, 2))
        db_B[0, 1] = -1.0  # second item at distance 1
        db = index.pack(db_B, np.array([0, 1]))
        series = metrics.precision_at_r(q, db, 2)
        assert series[0] == 1.0
        assert series[1] == 0.5

    def test_nearest_relevant_everywhere_gives_one_at_r1(self):
        _, _, _, _, db, _ = make_instance(4)
        queries = index.pack(index.unpack(db)[:, :3], db.labels[:3])
        assert metrics.precision_at_r(queries, db, 1)[0] == 1.0

    def test_matches_brute_force(self):
        for seed in range(5):
            db_B, q_B, db_labels, q_labels, db, queries = make_instance(seed)
            expected = np.mean([
                bf_metrics(q_B[:, i], q_labels[i], db_B, db_labels, 7, 10)[3]
                for i in range(q_B.shape[1])
            ], axis=0)
            np.testing.assert_array_equal(metrics.precision_at_r(queries, db, 10), expected)

    def test_r_max_beyond_database(self):
        _, _, _, _, db, queries = make_instance(5)
        with pytest.raises(DomainError):
            metrics.precision_at_r(queries, db, db.n + 1)


class TestCurveAuc:
    def test_constant_curve(self):
        pts = [CurvePoint(1.0, 0.4), CurvePoint(2.0, 0.4), CurvePoint(5.0, 0.4)]
        assert metrics.curve_auc(pts) == pytest.approx(0.4, abs=1e-15)

    def test_hand_case(self):
        assert metrics.curve_auc([(0.1, 0.5), (0.2, 0.7)]) == pytest.approx(0.6, abs=1e-12)

    def test_x_rescale_invariance(self):
        rng = np.random.default_rng(6)
        xs = np.cumsum(rng.uniform(0.5, 2.0, size=8))
        ys = rng.uniform(0, 1, size=8)
        a = metrics.curve_auc(list(zip(xs, ys)))
        b = metrics.curve_auc(list(zip(xs * 37.0, ys)))
        assert a == pytest.approx(b, rel=1e-12)

    def test_too_few_points(self):
        with pytest.raises(DomainError):
            metrics.curve_auc([(1.0, 0.5)])

    def test_non_increasing_x(self):
        with pytest.raises(DomainError):
            metrics.curve_auc([(1.0, 0.5), (1.0, 0.6)])


class TestMetricRanges:
    def test_all_metrics_within_unit_interval(self):
        for seed in range(10):
            _, _, _, _, db, queries = make_instance(seed, n_db=15, n_q=4)
            vals = [metrics.mean_ap(queries, db),
                    metrics.mean_ap(queries, db, cutoff=5),
                    metrics.precision_h2(queries, db)]
            vals.extend(metrics.precision_at_r(queries, db, 10).tolist())
            assert all(0.0 <= v <= 1.0 for v in vals)
