import itertools

import numpy as np
import pytest

from votestack.core import (
    Dataset,
    ProbabilityTable,
    SINGLE_FOLD,
    argmax_label,
    validate_probability_vector,
)
from votestack.errors import (
    IncompleteTableError,
    InvalidProbabilityError,
    NormalizationError,
    ProbabilityRangeError,
    ShapeError,
)


class TestValidateProbabilityVector:
    def test_accepts_hand_checked_simplex(self):
        vec = validate_probability_vector([0.25, 0.25, 0.5])
        assert np.array_equal(vec, [0.25, 0.25, 0.5])

    def test_accepts_vertex(self):
        vec = validate_probability_vector([1.0, 0.0])
        assert np.array_equal(vec, [1.0, 0.0])

    def test_rejects_bad_sum_with_observed_value(self):
        with pytest.raises(NormalizationError) as err:
            validate_probability_vector([0.6, 0.6])
        assert err.value.observed_sum == pytest.approx(1.2)

    def test_rejects_negative_entry(self):
        with pytest.raises(ProbabilityRangeError):
            validate_probability_vector([1.2, -0.2])

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidProbabilityError):
            validate_probability_vector([np.nan, 1.0])

    def test_never_renormalizes(self):
        # Slightly off but within tolerance: returned unchanged, not scaled.
        raw = np.array([0.5, 0.5 + 4e-10])
        out = validate_probability_vector(raw)
        assert np.array_equal(out, raw)

    def test_output_read_only(self):
        vec = validate_probability_vector([0.5, 0.5])
        with pytest.raises(ValueError):
            vec[0] = 0.9


class TestArgmaxLabel:
    def test_plain_max(self):
        assert argmax_label([0.1, 0.7, 0.2]) == 1

    def test_vertex(self):
        assert argmax_label([1.0, 0.0, 0.0]) == 0

    def test_tie_breaks_to_lowest_index(self):
        assert argmax_label([0.5, 0.5]) == 0

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidProbabilityError):
            argmax_label([np.inf, 0.0])

    def test_lowest_index_among_ties_exhaustive(self):
        # Every arrangement of a two-valued vector over c <= 4 entries.
        for c in (2, 3, 4):
            for highs in itertools.product([False, True], repeat=c):
                if not any(highs):
                    continue
                n_high = sum(highs)
                hi = 1.0 / n_high if n_high else 0.0
                vec = np.array([hi if h else 0.0 for h in highs])
                assert argmax_label(vec) == highs.index(True)

    def test_order_preserving_transform_keeps_decision(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            c = int(rng.integers(2, 6))
            raw = rng.dirichlet(np.ones(c))
            # strictly increasing transform, then renormalize
            transformed = np.exp(2.0 * raw)
            transformed /= transformed.sum()
            assert argmax_label(raw) == argmax_label(transformed)


class TestDataset:
    def _tiny(self):
        return Dataset(["a", "b", "c"], np.eye(3), [0, 1, 1], class_count=2)

    def test_basic_accessors(self):
        ds = self._tiny()
        assert len(ds) == 3
        assert ds.feature_dim == 3
        assert ds.label_of("b") == 1
        assert np.array_equal(ds.features_of("c"), [0, 0, 1])
        assert ds.class_counts().tolist() == [1, 2]

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ShapeError):
            Dataset(["a", "a"], np.eye(2), [0, 1], class_count=2)

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ShapeError):
            Dataset(["a", "b"], np.eye(2), [0, 2], class_count=2)

    def test_subset_preserves_order_and_classes(self):
        ds = self._tiny()
        sub = ds.subset(["c", "a"])
        assert sub.ids == ["c", "a"]
        assert sub.class_count == 2


class TestProbabilityTable:
    def test_put_get_roundtrip(self):
        t = ProbabilityTable(2, 3, 2)
        t.put("x", 0, 1, [0.2, 0.8])
        assert np.allclose(t.get("x", 0, 1), [0.2, 0.8])
        assert t.folds_for("x", 0) == [1]

    def test_missing_entry_names_the_hole(self):
        t = ProbabilityTable(1, 2, 2)
        with pytest.raises(IncompleteTableError, match="learner 0"):
            t.get("ghost", 0, SINGLE_FOLD)

    def test_wrong_class_count_rejected(self):
        t = ProbabilityTable(1, 2, 3)
        with pytest.raises(ShapeError):
            t.put("x", 0, 0, [0.5, 0.5])

    def test_restrict_learners_renumbers(self):
        t = ProbabilityTable(3, 1, 2, ["a", "b", "c"])
        for i in range(3):
            t.put("x", i, 0, [1.0, 0.0])
        sub = t.restrict_learners([1, 2])
        assert sub.learner_names == ["b", "c"]
        assert np.array_equal(sub.get("x", 0, 0), [1.0, 0.0])
        assert len(sub) == 2
