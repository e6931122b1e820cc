import math
import tracemalloc

import numpy as np
import pytest

from famc import (
    Atom,
    AtomicModel,
    FitConfig,
    ObservationSet,
    atom_step,
    correction_step,
    densify,
    evaluate_entries,
    fit,
    lambda_max,
    make_ground_truth,
    make_sampling,
    negative_log_likelihood,
    reference_fit,
    sample_observations,
    sparse_gradient,
)
from famc.model import model_from_dense
from famc.solver import STOP_DUALITY_GAP, STOP_MAX_ITERS, STOP_STALLED

from helpers import e_vec, golden_section_min, random_obs, unit


def toy_objective(lam):
    # objective along the canonical direction when only entry (0,0) is
    # observed, with 7 labels of class 1 and 3 of class 2; mpmath-safe
    def phi(b):
        import mpmath as mp
        p1 = 1 / (1 + mp.exp(-b))
        return lam * b - (7 * mp.log(p1) + 3 * mp.log(1 - p1)) / 10

    return phi


def objective_atomic(model, obs, lam):
    return lam * model.total_mass + negative_log_likelihood(model, obs)


def objective_dense(x, obs, lam):
    nuclear = sum(np.linalg.svd(x[j], compute_uv=False).sum()
                  for j in range(x.shape[0]))
    return lam * nuclear + negative_log_likelihood(
        model_from_dense(x, obs.classes), obs)


def simulated_instance(rows, cols, classes, n, seed, gamma_scale=0.6, rank=2):
    truth = make_ground_truth(rows, cols, classes, rank, gamma_scale, seed=seed)
    dist = make_sampling("uniform", rows, cols)
    return sample_observations(truth, dist, n, seed=seed + 1)


class TestFit:
    def test_large_lambda_returns_zero_model(self):
        obs = simulated_instance(5, 4, 2, 60, seed=0)
        lam = lambda_max(obs) * 1.05
        model, report = fit(obs, FitConfig(lam=lam, epsilon=1e-6, max_iters=50))
        assert model.n_atoms == 0
        assert report.stop_reason == STOP_DUALITY_GAP
        assert report.converged
        assert report.iterations == 0

    def test_binary_matches_reference(self):
        obs = simulated_instance(5, 4, 2, 60, seed=1)
        cfg = FitConfig(lam=0.05, epsilon=1e-5, max_iters=3000, seed=0)
        model, report = fit(obs, cfg)
        x_ref, _ = reference_fit(obs, cfg)
        assert abs(objective_atomic(model, obs, cfg.lam)
                   - objective_dense(x_ref, obs, cfg.lam)) <= 1e-4

    def test_five_class_trace_and_exit(self):
        obs = simulated_instance(8, 6, 5, 200, seed=2, gamma_scale=0.8, rank=3)
        lam = 0.3 * lambda_max(obs)
        cfg = FitConfig(lam=lam, epsilon=1e-5, max_iters=3000, seed=0)
        model, report = fit(obs, cfg)
        assert report.stop_reason == STOP_DUALITY_GAP
        trace = np.asarray(report.objective_trace)
        assert np.all(trace[1:] <= trace[:-1] + 1e-9)

    def test_lambda_must_be_positive(self):
        obs = simulated_instance(4, 4, 2, 30, seed=3)
        with pytest.raises(ValueError):
            fit(obs, FitConfig(lam=0.0))

    def test_class_mismatch_rejected(self):
        obs = simulated_instance(4, 4, 2, 30, seed=4)
        with pytest.raises(ValueError):
            negative_log_likelihood(AtomicModel.zero(4, 4, 3), obs)

    def test_deterministic_given_config(self):
        obs = simulated_instance(6, 5, 3, 90, seed=5)
        cfg = FitConfig(lam=0.4 * lambda_max(obs), epsilon=1e-5,
                        max_iters=500, seed=7)
        m1, r1 = fit(obs, cfg)
        m2, r2 = fit(obs, cfg)
        assert r1.objective_trace == r2.objective_trace
        assert m1.n_atoms == m2.n_atoms
        for a1, a2 in zip(m1.per_class_atoms, m2.per_class_atoms):
            for x, y in zip(a1, a2):
                assert x.weight == y.weight
                assert np.array_equal(x.left, y.left)
                assert np.array_equal(x.right, y.right)

    def test_exit_certificates_hold(self):
        # recompute both stopping tests with an independent dense SVD
        rng = np.random.default_rng(8)
        for seed in range(5):
            classes = int(rng.integers(2, 6))
            obs = simulated_instance(7, 6, classes, 120, seed=100 + seed)
            lam = 0.35 * lambda_max(obs)
            cfg = FitConfig(lam=lam, epsilon=1e-4, max_iters=2000, seed=seed)
            model, report = fit(obs, cfg)
            assert report.stop_reason == STOP_DUALITY_GAP
            grads = sparse_gradient(model, obs)
            sigma_top = max(np.linalg.svd(g.densify(), compute_uv=False)[0]
                            for g in grads)
            assert lam - sigma_top > -cfg.epsilon / 2
            for j, atoms in enumerate(model.per_class_atoms):
                gd = grads[j].densify()
                for a in atoms:
                    score = lam + float(a.left @ gd @ a.right)
                    assert abs(score) <= cfg.epsilon

    def test_unresolvable_tolerance_reports_honestly(self):
        obs = simulated_instance(5, 4, 2, 60, seed=9)
        cfg = FitConfig(lam=0.05, epsilon=1e-300, max_iters=30, seed=0)
        model, report = fit(obs, cfg)
        assert report.stop_reason in (STOP_STALLED, STOP_MAX_ITERS)
        assert not report.converged

    def test_nuclear_norm_bookkeeping(self):
        obs = simulated_instance(6, 5, 3, 150, seed=10)
        lam = 0.25 * lambda_max(obs)
        model, _ = fit(obs, FitConfig(lam=lam, epsilon=1e-5, max_iters=2000))
        dense = densify(model)
        nuclear = sum(np.linalg.svd(dense[j], compute_uv=False).sum()
                      for j in range(model.classes - 1))
        assert model.total_mass >= nuclear - 1e-8

    def test_never_materializes_dense_parameters(self):
        # 3000 x 4000 dense doubles would be 96 MB; observed support is tiny
        rows, cols = 3000, 4000
        rng = np.random.default_rng(11)
        obs = ObservationSet(rows, cols, 2,
                             rng.integers(0, rows, 60),
                             rng.integers(0, cols, 60),
                             rng.integers(1, 3, 60))
        lam = 0.5 * lambda_max(obs)
        tracemalloc.start()
        fit(obs, FitConfig(lam=lam, epsilon=1e-4, max_iters=5))
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        assert peak < 20 * 1024 * 1024


class TestAtomStep:
    def test_no_append_when_scores_nonnegative(self):
        obs = simulated_instance(5, 4, 2, 60, seed=12)
        lam = lambda_max(obs) * 1.1  # every direction has lam + <grad, uv> >= 0
        model = AtomicModel.zero(5, 4, 2)
        rng = np.random.default_rng(0)
        new_atoms = [(unit(rng.standard_normal(5)), unit(rng.standard_normal(4)))]
        updated = atom_step(model, obs, lam, new_atoms)
        assert updated.n_atoms == 0

    def test_single_entry_toy_matches_golden_section(self):
        obs = ObservationSet.from_samples(3, 3, 2,
                                          [(0, 0, 1)] * 7 + [(0, 0, 2)] * 3)
        lam = 0.02
        model = AtomicModel.zero(3, 3, 2)
        new_atoms = [(e_vec(3, 0), e_vec(3, 0))]
        updated = atom_step(model, obs, lam, new_atoms)
        assert updated.n_atoms == 1
        beta = updated.per_class_atoms[0][0].weight
        expected = golden_section_min(toy_objective(lam), 0.0, 10.0, tol=1e-13)
        assert beta == pytest.approx(expected, abs=1e-8)

    def test_objective_never_increases(self):
        rng = np.random.default_rng(13)
        for seed in range(5):
            obs = simulated_instance(6, 5, 3, 80, seed=200 + seed)
            lam = 0.3 * lambda_max(obs)
            model, _ = fit(obs, FitConfig(lam=lam, epsilon=1e-3, max_iters=20))
            before = objective_atomic(model, obs, lam)
            new_atoms = [(unit(rng.standard_normal(6)), unit(rng.standard_normal(5)))
                         for _ in range(2)]
            updated = atom_step(model, obs, lam, new_atoms)
            after = objective_atomic(updated, obs, lam)
            assert after <= before + 1e-12


class TestCorrectionStep:
    def _single_entry_obs(self):
        return ObservationSet.from_samples(3, 3, 2,
                                           [(0, 0, 1)] * 7 + [(0, 0, 2)] * 3)

    def _scalar_opt(self, lam):
        def phi(b):
            p1 = 1.0 / (1.0 + math.exp(-b))
            return lam * b - (7 * math.log(p1) + 3 * math.log(1 - p1)) / 10.0
        return golden_section_min(phi, 0.0, 10.0, tol=1e-14)

    def test_duplicate_atoms_merge_to_single_optimum(self):
        obs = self._single_entry_obs()
        lam = 0.02
        u, v = e_vec(3, 0), e_vec(3, 0)
        doubled = AtomicModel(3, 3, 2, ((Atom(0.3, u, v), Atom(0.25, u, v)),))
        single = AtomicModel(3, 3, 2, ((Atom(0.55, u, v),),))
        corrected_d = correction_step(doubled, obs, lam)
        corrected_s = correction_step(single, obs, lam)
        assert corrected_d.n_atoms == 1
        assert corrected_d.total_mass == pytest.approx(corrected_s.total_mass,
                                                       abs=1e-9)
        assert abs(objective_atomic(corrected_d, obs, lam)
                   - objective_atomic(corrected_s, obs, lam)) <= 1e-9

    def test_fixed_point_when_already_optimal(self):
        obs = self._single_entry_obs()
        lam = 0.02
        opt = self._scalar_opt(lam)
        model = AtomicModel(3, 3, 2, ((Atom(opt, e_vec(3, 0), e_vec(3, 0)),),))
        corrected = correction_step(model, obs, lam)
        assert corrected.per_class_atoms[0][0].weight == pytest.approx(opt, abs=1e-9)

    def test_single_support_matches_golden_section(self):
        obs = self._single_entry_obs()
        lam = 0.02
        model = AtomicModel(3, 3, 2, ((Atom(2.0, e_vec(3, 0), e_vec(3, 0)),),))
        corrected = correction_step(model, obs, lam)
        assert corrected.per_class_atoms[0][0].weight == pytest.approx(
            self._scalar_opt(lam), abs=1e-7)

    def test_objective_never_increases(self):
        rng = np.random.default_rng(14)
        for seed in range(5):
            obs = simulated_instance(6, 5, 2, 80, seed=300 + seed)
            lam = 0.3 * lambda_max(obs)
            model, _ = fit(obs, FitConfig(lam=lam, epsilon=1e-3, max_iters=15))
            if model.n_atoms == 0:
                continue
            before = objective_atomic(model, obs, lam)
            after = objective_atomic(correction_step(model, obs, lam), obs, lam)
            assert after <= before + 1e-12

    def test_empty_support_rejected(self):
        obs = self._single_entry_obs()
        with pytest.raises(ValueError):
            correction_step(AtomicModel.zero(3, 3, 2), obs, 0.1)


class TestReferenceFit:
    def test_huge_lambda_gives_zero(self):
        obs = simulated_instance(5, 4, 2, 50, seed=15)
        x, report = reference_fit(obs, FitConfig(lam=100.0))
        assert np.all(x == 0.0)
        assert report.converged

    def test_unpenalized_fully_observed_is_entrywise_logit(self):
        # every cell observed with 3 ones and 1 two: MLE is logit(3/4) per cell
        samples = []
        for r in range(3):
            for c in range(3):
                samples += [(r, c, 1)] * 3 + [(r, c, 2)]
        obs = ObservationSet.from_samples(3, 3, 2, samples)
        x, _ = reference_fit(obs, FitConfig(lam=0.0), max_iter=50_000)
        expected = math.log(3.0)  # logit(3/4) = log(0.75/0.25)
        assert np.allclose(x[0], expected, atol=1e-3)

    def test_desk_scale_guard(self):
        obs = ObservationSet(200, 200, 2, [0], [0], [1])
        with pytest.raises(ValueError):
            reference_fit(obs, FitConfig(lam=0.1))

    def test_solver_equivalence_both_links(self):
        rng = np.random.default_rng(16)
        for seed in range(6):
            classes = 2 if seed % 2 == 0 else 5
            obs = simulated_instance(8, 7, classes, 150, seed=400 + seed,
                                     gamma_scale=0.7)
            lam = float(rng.uniform(0.15, 0.6)) * lambda_max(obs)
            cfg = FitConfig(lam=lam, epsilon=1e-5, max_iters=3000, seed=seed)
            model, _ = fit(obs, cfg)
            x_ref, _ = reference_fit(obs, cfg)
            assert abs(objective_atomic(model, obs, lam)
                       - objective_dense(x_ref, obs, lam)) <= 1e-4

            lam_g = float(rng.uniform(0.15, 0.6)) * lambda_max(obs, link="gaussian")
            cfg_g = FitConfig(lam=lam_g, epsilon=1e-5, max_iters=3000, seed=seed)
            from famc import fit_gaussian
            from famc.solver import SquaredLoss
            gm, _ = fit_gaussian(obs, cfg_g)
            xg_ref, _ = reference_fit(obs, cfg_g, link="gaussian")
            loss = SquaredLoss(obs, np.arange(1, classes + 1, dtype=float))

            def sq_obj_atoms(m):
                xs = np.zeros((loss.rows_e.size, 1))
                for a in m.atoms:
                    xs[:, 0] += a.weight * a.left[loss.rows_e] * a.right[loss.cols_e]
                return lam_g * sum(a.weight for a in m.atoms) + loss.value(xs)

            def sq_obj_dense(x):
                nuclear = np.linalg.svd(x[0], compute_uv=False).sum()
                return lam_g * nuclear + loss.value(
                    x[0][loss.rows_e, loss.cols_e][:, None])

            assert abs(sq_obj_atoms(gm) - sq_obj_dense(xg_ref)) <= 1e-4
