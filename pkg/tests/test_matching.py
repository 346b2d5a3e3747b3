import math

import numpy as np
import pytest

from conftest import random_attribute_record, random_attribute_records
from gazekit import matching
from gazekit.errors import InvalidArgument, NoMatch
from gazekit.matching import AttributeRecord, MatchConfig


def brute_force_best(query, candidates, cfg):
    """Reference retrieval: gender filter then plain argmax of score - penalty."""
    pool, _ = matching.gender_filter(query, candidates)
    def key(c):
        d = matching.matching_distance(query, c, cfg)
        return (d + matching.auxiliary_penalty(query, c, cfg), c.face_id)
    return min(pool, key=key)


def clone_with(record, **overrides):
    fields = dict(face_id=record.face_id, source=record.source, a_lmk=record.a_lmk.copy(),
                  a_pose=record.a_pose.copy(), a_age=record.a_age.copy(),
                  a_race=record.a_race.copy(), a_gender=record.a_gender.copy())
    fields.update(overrides)
    return AttributeRecord(**fields)


class TestGenderFilter:
    def test_keeps_matching_argmax(self):
        rng = np.random.default_rng(0)
        q = clone_with(random_attribute_record(rng, "q", "wider"), a_gender=np.array([0.8, 0.2]))
        cands = [clone_with(random_attribute_record(rng, f"c{i}"), a_gender=np.array(g))
                 for i, g in enumerate([[0.9, 0.1], [0.3, 0.7], [0.6, 0.4]])]
        kept, flagged = matching.gender_filter(q, cands)
        assert [c.face_id for c in kept] == ["c0", "c2"]
        assert not flagged

    def test_fallback_when_empty(self):
        rng = np.random.default_rng(1)
        q = clone_with(random_attribute_record(rng, "q", "wider"), a_gender=np.array([1.0, 0.0]))
        cands = [clone_with(random_attribute_record(rng, "c0"), a_gender=np.array([0.1, 0.9]))]
        kept, flagged = matching.gender_filter(q, cands)
        assert len(kept) == 1
        assert flagged

    def test_uniform_probabilities_tie_to_lowest_index(self):
        rng = np.random.default_rng(2)
        q = clone_with(random_attribute_record(rng, "q", "wider"), a_gender=np.array([0.5, 0.5]))
        a = clone_with(random_attribute_record(rng, "a"), a_gender=np.array([0.7, 0.3]))
        b = clone_with(random_attribute_record(rng, "b"), a_gender=np.array([0.2, 0.8]))
        kept, _ = matching.gender_filter(q, [a, b])
        assert [c.face_id for c in kept] == ["a"]


class TestDistance:
    def test_identical_records_zero(self):
        rng = np.random.default_rng(3)
        r = random_attribute_record(rng, "r")
        cfg = MatchConfig()
        assert matching.matching_distance(r, r, cfg) == 0.0
        assert matching.matching_score(r, r, cfg) == 0.0

    def test_pure_pitch_offset(self):
        rng = np.random.default_rng(4)
        a = random_attribute_record(rng, "a")
        b = clone_with(a, a_pose=a.a_pose + np.array([2.0, 0.0]))
        cfg = MatchConfig(alpha_lmk=1.0, alpha_pose=1.0)
        # mean of |2| and |0| over the two pose angles
        assert math.isclose(matching.matching_distance(a, b, cfg), 1.0, rel_tol=1e-12)

    def test_landmark_term_linear_in_weight(self):
        rng = np.random.default_rng(5)
        a = random_attribute_record(rng, "a")
        b = random_attribute_record(rng, "b")
        b = clone_with(b, a_pose=a.a_pose.copy())
        d1 = matching.matching_distance(a, b, MatchConfig(alpha_lmk=1.0))
        d2 = matching.matching_distance(a, b, MatchConfig(alpha_lmk=2.0))
        assert math.isclose(d2, 2 * d1, rel_tol=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(6)
        a = random_attribute_record(rng, "a")
        b = random_attribute_record(rng, "b")
        cfg = MatchConfig()
        assert matching.matching_distance(a, b, cfg) == matching.matching_distance(b, a, cfg)

    def test_missing_attribute_rejected(self):
        rng = np.random.default_rng(7)
        a = random_attribute_record(rng, "a")
        b = clone_with(a, a_pose=None)
        with pytest.raises(InvalidArgument):
            matching.matching_distance(a, b, MatchConfig())


class TestPenalty:
    def test_identical_distributions_zero(self):
        rng = np.random.default_rng(8)
        r = random_attribute_record(rng, "r")
        assert matching.auxiliary_penalty(r, r, MatchConfig()) == 0.0

    def test_disjoint_one_hot_age(self):
        rng = np.random.default_rng(9)
        a = random_attribute_record(rng, "a")
        age1 = np.zeros(9); age1[0] = 1.0
        age2 = np.zeros(9); age2[4] = 1.0
        a = clone_with(a, a_age=age1)
        b = clone_with(a, a_age=age2)
        cfg = MatchConfig(beta_age=1.0, beta_race=0.0)
        assert math.isclose(matching.auxiliary_penalty(a, b, cfg), 2.0, rel_tol=1e-12)

    def test_zero_weights_disable_penalty(self):
        rng = np.random.default_rng(10)
        a = random_attribute_record(rng, "a")
        b = random_attribute_record(rng, "b")
        assert matching.auxiliary_penalty(a, b, MatchConfig(beta_age=0, beta_race=0)) == 0.0


class TestRetrieve:
    def test_single_candidate_always_wins(self):
        rng = np.random.default_rng(11)
        q = random_attribute_record(rng, "q", "wider")
        c = random_attribute_record(rng, "only")
        res = matching.retrieve(q, [c])
        assert res.xgaze_id == "only"
        assert res.wider_id == "q"

    def test_empty_candidates_raise(self):
        rng = np.random.default_rng(12)
        with pytest.raises(NoMatch):
            matching.retrieve(random_attribute_record(rng, "q", "wider"), [])

    def test_matches_brute_force_with_large_topn(self):
        cands = random_attribute_records(13, 200)
        queries = random_attribute_records(14, 25, source="wider", prefix="q")
        cfg = MatchConfig(top_n=10_000, beta_age=0.0, beta_race=0.0)
        for q in queries:
            res = matching.retrieve(q, cands, cfg)
            assert res.xgaze_id == brute_force_best(q, cands, cfg).face_id
            # equals the plain nearest neighbour under the weighted distance
            pool, _ = matching.gender_filter(q, cands)
            nearest = min(pool, key=lambda c: (matching.matching_distance(q, c, cfg), c.face_id))
            assert res.xgaze_id == nearest.face_id

    def test_matches_brute_force_with_penalties(self):
        cands = random_attribute_records(15, 120)
        queries = random_attribute_records(16, 15, source="wider", prefix="q")
        cfg = MatchConfig(top_n=10_000, beta_age=0.7, beta_race=0.3)
        for q in queries:
            assert matching.retrieve(q, cands, cfg).xgaze_id == \
                brute_force_best(q, cands, cfg).face_id

    def test_penalty_can_flip_the_winner(self):
        rng = np.random.default_rng(17)
        q = random_attribute_record(rng, "q", "wider")
        # near: closest by landmarks/pose but maximally different age
        near = clone_with(q, face_id="near")
        near.a_pose = q.a_pose + np.array([0.5, 0.0])
        age = np.zeros(9); age[8] = 1.0
        near.a_age = age
        # far: slightly worse distance, identical demographics
        far = clone_with(q, face_id="far")
        far.a_pose = q.a_pose + np.array([1.0, 0.0])
        third = clone_with(q, face_id="z-third")
        third.a_pose = q.a_pose + np.array([30.0, 0.0])
        cands = [near, far, third]
        plain = matching.retrieve(q, cands, MatchConfig(top_n=3, beta_age=0.0, beta_race=0.0))
        assert plain.xgaze_id == "near"
        penalized = matching.retrieve(q, cands, MatchConfig(top_n=3, beta_age=1.0, beta_race=0.0))
        assert penalized.xgaze_id == "far"

    def test_weight_rescaling_keeps_winner(self):
        cands = random_attribute_records(18, 80)
        queries = random_attribute_records(19, 10, source="wider", prefix="q")
        base = MatchConfig(alpha_lmk=1.0, alpha_pose=1.0, top_n=80, beta_age=0.5, beta_race=0.5)
        scaled = MatchConfig(alpha_lmk=3.7, alpha_pose=3.7, top_n=80,
                             beta_age=0.5 * 3.7, beta_race=0.5 * 3.7)
        for q in queries:
            assert matching.retrieve(q, cands, base).xgaze_id == \
                matching.retrieve(q, cands, scaled).xgaze_id

    def test_mode_threshold_boundary(self):
        rng = np.random.default_rng(20)
        q = random_attribute_record(rng, "q", "wider")
        at = clone_with(q, face_id="at")
        at.a_pose = q.a_pose + np.array([4.0, 0.0])  # distance exactly 2.0
        cfg = MatchConfig(eye_swap_threshold=2.0)
        res = matching.retrieve(q, [at], cfg)
        assert math.isclose(res.distance, 2.0, rel_tol=1e-12)
        assert res.mode == matching.FULL  # boundary goes to full
        below = clone_with(q, face_id="below")
        below.a_pose = q.a_pose + np.array([3.99, 0.0])
        assert matching.retrieve(q, [below], cfg).mode == matching.EYES

    def test_tie_breaks_by_id(self):
        rng = np.random.default_rng(21)
        q = random_attribute_record(rng, "q", "wider")
        a = clone_with(q, face_id="bbb")
        b = clone_with(q, face_id="aaa")
        res = matching.retrieve(q, [a, b], MatchConfig())
        assert res.xgaze_id == "aaa"


class TestRecordValidation:
    def test_clean_record_has_no_issues(self):
        rng = np.random.default_rng(22)
        assert random_attribute_record(rng, "r").validation_issues() == []

    def test_bad_probability_sum_reported(self):
        rng = np.random.default_rng(23)
        r = random_attribute_record(rng, "r")
        r.a_age = r.a_age * 0.9
        issues = r.validation_issues()
        assert any("a_age" in s and "sum" in s for s in issues)

    def test_wrong_shapes_reported(self):
        rng = np.random.default_rng(24)
        r = random_attribute_record(rng, "r")
        r.a_lmk = r.a_lmk[:10]
        assert any("a_lmk" in s for s in r.validation_issues())
