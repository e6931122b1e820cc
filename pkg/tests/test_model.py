import numpy as np
import pytest

from famc import (
    Atom,
    AtomicModel,
    FitConfig,
    ObservationSet,
    ProbabilityField,
    densify,
    evaluate_entries,
    svd_canonicalized,
)

from helpers import brute_force_dense, e_vec, random_model, unit


class TestObservationSet:
    def test_bounds_and_labels_validated(self):
        ObservationSet(3, 4, 2, [0, 2], [0, 3], [1, 2])
        with pytest.raises(ValueError):
            ObservationSet(3, 4, 2, [3], [0], [1])
        with pytest.raises(ValueError):
            ObservationSet(3, 4, 2, [0], [4], [1])
        with pytest.raises(ValueError):
            ObservationSet(3, 4, 2, [0], [0], [3])
        with pytest.raises(ValueError):
            ObservationSet(3, 4, 2, [0], [0], [0])

    def test_repeats_kept(self):
        obs = ObservationSet.from_samples(2, 2, 2, [(0, 0, 1), (0, 0, 1), (0, 0, 2)])
        assert obs.n == 3

    def test_immutable(self):
        obs = ObservationSet(2, 2, 2, [0], [1], [2])
        with pytest.raises(ValueError):
            obs.labels[0] = 1


class TestAtom:
    def test_unit_norm_enforced(self):
        Atom(1.0, unit([1.0, 2.0]), unit([3.0, 4.0, 5.0]))
        with pytest.raises(ValueError):
            Atom(1.0, np.array([1.0, 1.0]), unit([1.0, 0.0]))
        with pytest.raises(ValueError):
            Atom(-0.5, unit([1.0, 0.0]), unit([1.0, 0.0]))


class TestEvaluateEntries:
    def test_zero_model_all_zero(self):
        model = AtomicModel.zero(4, 3, 3)
        vals = evaluate_entries(model, [(0, 0), (3, 2), (1, 1)])
        assert vals.shape == (3, 2)
        assert np.all(vals == 0.0)

    def test_canonical_single_atom(self):
        model = AtomicModel(2, 2, 2, ((Atom(1.0, e_vec(2, 0), e_vec(2, 0)),),))
        assert evaluate_entries(model, [(0, 0)])[0, 0] == pytest.approx(1.0)
        assert evaluate_entries(model, [(1, 0)])[0, 0] == 0.0

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(42)
        model = random_model(rng, rows=6, cols=4, classes=2, atoms_per_class=5)
        dense = brute_force_dense(model)
        got = evaluate_entries(model, [(2, 3)])
        assert got[0, 0] == pytest.approx(dense[0, 2, 3], rel=1e-12)

    def test_out_of_bounds(self):
        model = AtomicModel.zero(4, 3, 2)
        with pytest.raises(IndexError):
            evaluate_entries(model, [(4, 0)])
        with pytest.raises(IndexError):
            evaluate_entries(model, [(0, 3)])


class TestDensify:
    def test_zero_model(self):
        assert np.all(densify(AtomicModel.zero(3, 5, 4)) == 0.0)

    def test_single_atom_placement(self):
        model = AtomicModel(3, 3, 2, ((Atom(2.0, e_vec(3, 0), e_vec(3, 1)),),))
        dense = densify(model)
        expected = np.zeros((1, 3, 3))
        expected[0, 0, 1] = 2.0
        assert np.array_equal(dense, expected)

    def test_three_atom_sum_oracle(self):
        rng = np.random.default_rng(7)
        model = random_model(rng, rows=5, cols=4, classes=2, atoms_per_class=3)
        assert np.allclose(densify(model), brute_force_dense(model), rtol=1e-12)

    def test_agreement_with_evaluate_everywhere(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            model = random_model(rng, rows=5, cols=6, classes=4, atoms_per_class=4)
            dense = densify(model)
            pairs = [(k, l) for k in range(5) for l in range(6)]
            vals = evaluate_entries(model, pairs)
            for idx, (k, l) in enumerate(pairs):
                for j in range(model.classes - 1):
                    assert vals[idx, j] == pytest.approx(dense[j, k, l],
                                                         rel=1e-12, abs=1e-300)


class TestProbabilityField:
    def test_rejects_bad_fields(self):
        probs = np.full((2, 2, 2), 0.5)
        ProbabilityField(2, 2, 2, probs)
        with pytest.raises(ValueError):
            ProbabilityField(2, 2, 2, probs * 1.1)
        with pytest.raises(ValueError):
            ProbabilityField(2, 2, 2,
                             np.stack([probs[..., 0] * 2, -probs[..., 1]], axis=2))


class TestFitConfig:
    def test_validation(self):
        FitConfig(lam=0.1)
        FitConfig(lam=0.0)  # unpenalized runs are allowed for the oracles
        with pytest.raises(ValueError):
            FitConfig(lam=-1.0)
        with pytest.raises(ValueError):
            FitConfig(lam=0.1, epsilon=0.0)
        with pytest.raises(ValueError):
            FitConfig(lam=0.1, max_iters=0)


class TestCanonicalization:
    def test_mass_matches_nuclear_norm_after_svd_pass(self):
        rng = np.random.default_rng(11)
        model = random_model(rng, rows=6, cols=5, classes=3, atoms_per_class=6)
        canon = svd_canonicalized(model)
        dense = densify(model)
        nuclear = sum(np.linalg.svd(dense[j], compute_uv=False).sum()
                      for j in range(model.classes - 1))
        assert model.total_mass >= nuclear - 1e-8
        assert canon.total_mass == pytest.approx(nuclear, abs=1e-8)
        assert np.allclose(densify(canon), dense, atol=1e-10)
