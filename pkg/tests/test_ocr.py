"""Tests for the transition-vector character classifier.

A four-sample two-class training set on a 2x2 grid is engineered so the
third transition exhibits {01, 11} for one class and {10} for the other,
which pins the forbidden sets exactly. The elimination rules R1-R3 are
driven both through engineered rule sets hitting the noise boundary and
through a brute-force oracle on randomized models.
"""

import numpy as np
import pytest

from alprs.imgcore import BinaryImage
from alprs.ocr import (
    MODEL_MAGIC,
    NOISE_FRACTION,
    ClassifierModel,
    ClassRuleSet,
    GridSpec,
    ModelFormatError,
    ModelMagicError,
    classify,
    count_violations,
    load_model,
    save_model,
    serpentine_path,
    train,
    transition_vector,
)


def bim(rows):
    return BinaryImage(np.asarray(rows, dtype=np.uint8))


# Two engineered classes on a 2x2 grid. Along the serpentine path the
# third transition (vector index 2) sees 01 and 11 in class A but only
# 10 in class C, so the forbidden sets there differ in a known way.
ENGINEERED_SAMPLES = [
    ("A", bim([[0, 0], [1, 0]])),
    ("A", bim([[0, 0], [1, 1]])),
    ("C", bim([[1, 1], [0, 1]])),
    ("C", bim([[0, 1], [0, 1]])),
]
GRID2 = GridSpec(2, 2)


def code_set(forbidden_row):
    return set(np.nonzero(forbidden_row)[0].tolist())


class TestGridSpec:
    def test_counts(self):
        g = GridSpec(65, 60)
        assert g.n_positions == 3900
        assert g.alphabet_size == 4
        assert GridSpec(5, 4, order=3).alphabet_size == 8

    @pytest.mark.parametrize("w,h", [(1, 10), (10, 1), (0, 0)])
    def test_grid_too_small(self, w, h):
        with pytest.raises(ValueError, match="2x2"):
            GridSpec(w, h)

    @pytest.mark.parametrize("order", [1, 4, 0])
    def test_bad_order(self, order):
        with pytest.raises(ValueError, match="order"):
            GridSpec(4, 4, order=order)


class TestSerpentinePath:
    def test_two_by_two(self):
        assert serpentine_path(GRID2).tolist() == [0, 1, 3, 2]

    def test_three_by_three(self):
        assert serpentine_path(GridSpec(3, 3)).tolist() == [0, 1, 2, 5, 4, 3, 6, 7, 8]

    def test_visits_every_pixel_once(self):
        path = serpentine_path(GridSpec(7, 5))
        assert sorted(path.tolist()) == list(range(35))

    def test_row_adjacency(self):
        # Consecutive path steps move by one column or drop one row.
        g = GridSpec(6, 4)
        path = serpentine_path(g)
        pos = [(i // g.grid_w, i % g.grid_w) for i in path]
        for (r0, c0), (r1, c1) in zip(pos, pos[1:]):
            assert (r1 == r0 and abs(c1 - c0) == 1) or (r1 == r0 + 1 and c1 == c0)


class TestTransitionVector:
    def test_all_zeros(self):
        tv = transition_vector(bim([[0, 0], [0, 0]]), GRID2)
        assert tv.tolist() == [0, 0, 0, 0]

    def test_hand_traced_pairs(self):
        # Path visits 1,0,1,0; adjacent pairs wrap: 10, 01, 10, 01.
        tv = transition_vector(bim([[1, 0], [0, 1]]), GRID2)
        assert tv.tolist() == [0b10, 0b01, 0b10, 0b01]

    def test_hand_traced_triples(self):
        tv = transition_vector(bim([[1, 0], [0, 1]]), GridSpec(2, 2, order=3))
        assert tv.tolist() == [0b101, 0b010, 0b101, 0b010]

    def test_length_is_pixel_count(self):
        assert transition_vector(
            bim(np.zeros((60, 65))), GridSpec(65, 60)
        ).size == 3900
        assert transition_vector(
            bim(np.zeros((30, 50))), GridSpec(50, 30)
        ).size == 1500

    def test_wrap_links_last_pixel_to_first(self):
        img = np.zeros((3, 3), dtype=np.uint8)
        img[2, 2] = 1                       # the path's final pixel
        tv = transition_vector(bim(img), GridSpec(3, 3))
        assert tv[8] == 0b10                # last: (1, first pixel 0)
        assert tv[7] == 0b01

    def test_codes_within_alphabet(self):
        rng = np.random.default_rng(0)
        img = bim(rng.integers(0, 2, (6, 5)))
        assert transition_vector(img, GridSpec(5, 6)).max() < 4
        assert transition_vector(img, GridSpec(5, 6, order=3)).max() < 8

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError, match="grid wants"):
            transition_vector(bim(np.zeros((3, 3))), GRID2)


class TestTrain:
    def test_engineered_forbidden_sets(self):
        model = train(ENGINEERED_SAMPLES, GRID2)
        a = model.classes["A"].forbidden
        c = model.classes["C"].forbidden
        assert code_set(a[2]) == {0b10, 0b00}
        assert code_set(c[2]) == {0b00, 0b01, 0b11}

    def test_engineered_restriction_totals(self):
        model = train(ENGINEERED_SAMPLES, GRID2)
        # Each class observes six distinct position-codes out of 16 slots.
        assert model.classes["A"].restriction_count == 10
        assert model.classes["C"].restriction_count == 10

    def test_single_sample_forbids_all_but_one(self):
        model = train([("X", bim([[1, 0], [0, 1]]))], GRID2)
        forb = model.classes["X"].forbidden
        assert (forb.sum(axis=1) == 3).all()
        assert model.classes["X"].restriction_count == 12

    def test_dict_and_list_forms_agree(self):
        as_dict = {"A": [s for l, s in ENGINEERED_SAMPLES if l == "A"],
                   "C": [s for l, s in ENGINEERED_SAMPLES if l == "C"]}
        m1 = train(ENGINEERED_SAMPLES, GRID2)
        m2 = train(as_dict, GRID2)
        for lab in "AC":
            assert np.array_equal(
                m1.classes[lab].forbidden, m2.classes[lab].forbidden
            )

    def test_more_samples_never_add_restrictions(self):
        rng = np.random.default_rng(1)
        samples = [bim(rng.integers(0, 2, (4, 4))) for _ in range(8)]
        grid = GridSpec(4, 4)
        counts = [
            train([("Z", s) for s in samples[:k]], grid).classes["Z"].restriction_count
            for k in range(1, 9)
        ]
        assert counts == sorted(counts, reverse=True)

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError, match="no training samples"):
            train([], GRID2)

    def test_noise_fraction_stored(self):
        assert NOISE_FRACTION == 0.30
        model = train(ENGINEERED_SAMPLES, GRID2, noise_fraction=0.5)
        assert model.noise_fraction == 0.5
        assert train(ENGINEERED_SAMPLES, GRID2).noise_fraction == 0.30


class TestCountViolations:
    def test_own_class_is_clean(self):
        model = train(ENGINEERED_SAMPLES, GRID2)
        for label, img in ENGINEERED_SAMPLES:
            tv = transition_vector(img, GRID2)
            assert count_violations(tv, model.classes[label]) == 0

    def test_cross_class_violates(self):
        model = train(ENGINEERED_SAMPLES, GRID2)
        tv = transition_vector(ENGINEERED_SAMPLES[0][1], GRID2)
        assert count_violations(tv, model.classes["C"]) > 0

    def test_forbidding_zeros_everywhere(self):
        grid = GridSpec(3, 3)
        forbidden = np.zeros((9, 4), dtype=bool)
        forbidden[:, 0] = True
        rules = ClassRuleSet(label="Z", forbidden=forbidden, restriction_count=9)
        tv = transition_vector(bim(np.zeros((3, 3))), grid)
        assert count_violations(tv, rules) == 9

    def test_length_mismatch_rejected(self):
        model = train(ENGINEERED_SAMPLES, GRID2)
        with pytest.raises(ValueError, match="length"):
            count_violations(np.zeros(9, dtype=np.uint8), model.classes["A"])


def ruleset_for(label, tv, violated_positions, alphabet=4):
    """Rules with one forbidden code per position; the given positions
    forbid exactly the probe's code there, the rest forbid another."""
    n = tv.size
    forbidden = np.zeros((n, alphabet), dtype=bool)
    for p in range(n):
        code = tv[p] if p in violated_positions else (tv[p] + 1) % alphabet
        forbidden[p, code] = True
    return ClassRuleSet(label=label, forbidden=forbidden, restriction_count=n)


class TestClassify:
    def test_training_samples_recover_their_class(self):
        model = train(ENGINEERED_SAMPLES, GRID2)
        for label, img in ENGINEERED_SAMPLES:
            assert classify(img, model) == label

    def test_r2_prefers_more_restrictive_class(self):
        # Y sees two samples so its forbidden set is a subset of X's;
        # the shared sample is clean in both and X must win.
        s = bim([[1, 0], [0, 1]])
        t = bim([[1, 1], [0, 1]])
        model = train([("X", s), ("Y", s), ("Y", t)], GRID2)
        assert model.classes["X"].restriction_count > model.classes["Y"].restriction_count
        assert classify(s, model) == "X"

    def test_r2_tie_takes_smallest_label(self):
        s = bim([[1, 0], [0, 1]])
        model = train([("Q", s), ("P", s)], GRID2)
        assert classify(s, model) == "P"

    def test_r3_least_relative_violator_wins(self):
        probe = bim([[1, 0, 1], [0, 0, 1], [1, 1, 0]])
        grid = GridSpec(3, 3)
        tv = transition_vector(probe, grid)
        model = ClassifierModel(
            grid=grid,
            classes={
                "A": ruleset_for("A", tv, violated_positions={0, 1, 2}),
                "B": ruleset_for("B", tv, violated_positions={0, 1}),
            },
        )
        assert classify(probe, model) == "B"

    def test_r3_noise_boundary(self):
        # 10 restrictions per class; 7 violations leaves exactly 30% of
        # the restrictions satisfied, which is still classifiable, while
        # 8 violations drops below the line and reads as noise.
        probe = bim([[1, 0, 1, 0, 1], [0, 0, 1, 1, 0]])
        grid = GridSpec(5, 2)
        tv = transition_vector(probe, grid)
        at_line = ClassifierModel(
            grid=grid, classes={"A": ruleset_for("A", tv, set(range(7)))}
        )
        below = ClassifierModel(
            grid=grid, classes={"A": ruleset_for("A", tv, set(range(8)))}
        )
        assert classify(probe, at_line) == "A"
        assert classify(probe, below) is None

    def test_all_restrictions_violated_is_noise(self):
        probe = bim([[1, 0], [1, 1]])
        tv = transition_vector(probe, GRID2)
        model = ClassifierModel(
            grid=GRID2, classes={"A": ruleset_for("A", tv, {0, 1, 2, 3})}
        )
        assert classify(probe, model) is None

    def test_zero_restriction_class_loses_r2(self):
        # A fully permissive class is always clean but carries no evidence,
        # so any other clean class outranks it on restriction count.
        probe = bim([[1, 0], [1, 1]])
        model = train([("X", probe)], GRID2)
        model.classes["E"] = ClassRuleSet(
            label="E", forbidden=np.zeros((4, 4), dtype=bool), restriction_count=0
        )
        assert classify(probe, model) == "X"

    def test_zero_restriction_class_wins_r1_as_clean(self):
        probe = bim([[1, 0], [1, 1]])
        empty = ClassRuleSet(
            label="E", forbidden=np.zeros((4, 4), dtype=bool), restriction_count=0
        )
        model = ClassifierModel(grid=GRID2, classes={"E": empty})
        assert classify(probe, model) == "E"

    def test_allowed_restricts_candidates(self):
        model = train(ENGINEERED_SAMPLES, GRID2)
        img = ENGINEERED_SAMPLES[0][1]             # an 'A' sample
        assert classify(img, model) == "A"
        # With only C admitted, R1 finds no clean class and R3 still
        # clears the noise bar (4 violations of 10 restrictions).
        assert classify(img, model, allowed={"C"}) == "C"

    def test_no_candidates_rejected(self):
        model = train(ENGINEERED_SAMPLES, GRID2)
        with pytest.raises(ValueError, match="candidate"):
            classify(ENGINEERED_SAMPLES[0][1], model, allowed={"Z"})

    def test_deterministic(self):
        model = train(ENGINEERED_SAMPLES, GRID2)
        img = ENGINEERED_SAMPLES[2][1]
        assert len({classify(img, model) for _ in range(5)}) == 1

    @pytest.mark.parametrize("seed", [0, 4, 9])
    def test_matches_rule_oracle(self, seed):
        rng = np.random.default_rng(seed)
        grid = GridSpec(4, 3)
        samples = [
            (lab, bim(rng.integers(0, 2, (3, 4))))
            for lab in "ABC"
            for _ in range(3)
        ]
        model = train(samples, grid)

        def oracle(img):
            tv = transition_vector(img, grid)
            scores = {
                lab: count_violations(tv, rs) for lab, rs in model.classes.items()
            }
            clean = sorted(lab for lab in scores if scores[lab] == 0)
            if clean:
                top = max(model.classes[lab].restriction_count for lab in clean)
                return min(
                    lab
                    for lab in clean
                    if model.classes[lab].restriction_count == top
                )
            ratios = {
                lab: scores[lab] / model.classes[lab].restriction_count
                for lab in scores
                if model.classes[lab].restriction_count > 0
            }
            r_star = min(ratios.values())
            if 1.0 - r_star < model.noise_fraction:
                return None
            return min(lab for lab in ratios if ratios[lab] == r_star)

        for _ in range(50):
            probe = bim(rng.integers(0, 2, (3, 4)))
            assert classify(probe, model) == oracle(probe)


class TestModelIO:
    def model(self, order=2):
        rng = np.random.default_rng(7)
        grid = GridSpec(5, 4, order=order)
        samples = [
            (lab, bim(rng.integers(0, 2, (4, 5))))
            for lab in "0189AZ"
            for _ in range(2)
        ]
        return train(samples, grid, noise_fraction=0.25)

    @pytest.mark.parametrize("order", [2, 3])
    def test_round_trip(self, order, tmp_path):
        model = self.model(order)
        path = tmp_path / "m.bin"
        save_model(model, path)
        back = load_model(path)
        assert back.grid == model.grid
        assert back.noise_fraction == model.noise_fraction
        assert sorted(back.classes) == sorted(model.classes)
        for lab, rules in model.classes.items():
            got = back.classes[lab]
            assert np.array_equal(got.forbidden, rules.forbidden)
            assert got.restriction_count == rules.restriction_count

    def test_save_is_deterministic(self, tmp_path):
        model = self.model()
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        save_model(model, a)
        save_model(model, b)
        assert a.read_bytes() == b.read_bytes()

    def test_header_layout(self, tmp_path):
        model = self.model()
        path = tmp_path / "m.bin"
        save_model(model, path)
        blob = path.read_bytes()
        assert blob.startswith(MODEL_MAGIC)
        # 21-byte header, then per class 1 label byte + one byte per
        # path position, then the 4-byte checksum.
        body = len(MODEL_MAGIC) + 21 + len(model.classes) * (1 + 20) + 4
        assert len(blob) == body

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "m.bin"
        path.write_bytes(b"NOTAMODEL" + b"\x00" * 40)
        with pytest.raises(ModelMagicError, match="not a classifier model"):
            load_model(path)

    def test_checksum_mismatch(self, tmp_path):
        model = self.model()
        path = tmp_path / "m.bin"
        save_model(model, path)
        blob = bytearray(path.read_bytes())
        blob[len(MODEL_MAGIC) + 20] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(ModelFormatError, match="checksum"):
            load_model(path)

    def test_truncated(self, tmp_path):
        model = self.model()
        path = tmp_path / "m.bin"
        save_model(model, path)
        blob = path.read_bytes()
        import zlib

        cut = blob[: len(MODEL_MAGIC) + 21 + 5]
        path.write_bytes(cut + np.uint32(zlib.crc32(cut)).tobytes())
        with pytest.raises(ModelFormatError, match="truncated"):
            load_model(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "m.bin"
        path.write_bytes(b"")
        with pytest.raises(ModelMagicError):
            load_model(path)

    def test_magic_error_is_format_error(self):
        assert issubclass(ModelMagicError, ModelFormatError)
