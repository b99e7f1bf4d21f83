import os
import unittest

import numpy as np

from clustershock.core.errors import PrerequisiteViolation, ValidationError
from clustershock.core.montecarlo import RunningMoments, clt_diagnostic, merge_tree, run_mc, validate_targets
from clustershock.core.population import load_population, load_population_config, population_from_dict
from clustershock.schemas.enums import Target
from clustershock.schemas.montecarlo import MCConfig

EXAMPLE_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "example", "populations")


def example(name: str):
    return load_population(os.path.join(EXAMPLE_DIR, name))


def mc(targets, replications=2000, **kwargs) -> MCConfig:
    return MCConfig(
        replications=replications, seed=kwargs.pop("seed", 20240601), targets=targets,
        tolerance_sigmas=4.0, chunk_size=500, **kwargs,
    )


class TestRunningMoments(unittest.TestCase):
    def test_merge_matches_batch(self):
        rows = np.random.default_rng(0).normal(size=(103, 4))
        parts = [RunningMoments.from_rows(rows[i : i + 20]) for i in range(0, 103, 20)]
        merged = merge_tree(parts)
        whole = RunningMoments.from_rows(rows)
        self.assertEqual(merged.count, 103)
        np.testing.assert_allclose(merged.mean, whole.mean, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(merged.m2, whole.m2, rtol=1e-12)

    def test_single_part(self):
        part = RunningMoments.from_rows(np.ones((3, 2)))
        self.assertIs(merge_tree([part]), part)


class TestValidateTargets(unittest.TestCase):
    def test_cond_variance_needs_frozen(self):
        with self.assertRaises(PrerequisiteViolation) as ctx:
            validate_targets(example("additive_small.json"), mc([Target.COND_VARIANCE]))
        self.assertEqual(ctx.exception.target, "cond_variance")

    def test_unconditional_target_rejects_frozen(self):
        with self.assertRaises(PrerequisiteViolation):
            validate_targets(example("additive_small.json"), mc([Target.UNCOND_VARIANCE], condition_on_eta=True))

    def test_gap_needs_equal_sizes(self):
        with self.assertRaisesRegex(PrerequisiteViolation, "equal stratum sizes"):
            validate_targets(example("unequal_sizes.toml"), mc([Target.COR1_GAP]))

    def test_gap_needs_additive(self):
        with self.assertRaises(PrerequisiteViolation):
            validate_targets(example("multiplicative.json"), mc([Target.COR1_GAP]))

    def test_bootstrap_size_needs_null(self):
        with self.assertRaisesRegex(PrerequisiteViolation, "null population"):
            validate_targets(example("compact_independent.json"), mc([Target.BOOTSTRAP_SIZE]))

    def test_homogeneous_needs_identical(self):
        with self.assertRaises(PrerequisiteViolation):
            validate_targets(example("compact_independent.json"), mc([Target.HOMOGENEOUS_SHOCKS]))
        validate_targets(example("compact_identical.json"), mc([Target.HOMOGENEOUS_SHOCKS]))

    def test_undercoverage_needs_shock_variance(self):
        with self.assertRaises(PrerequisiteViolation):
            validate_targets(example("compact_identical.json"), mc([Target.ROB_UNDERCOVERAGE]))


class TestRunMC(unittest.TestCase):
    def test_unconditional_suite(self):
        targets = [
            Target.UNBIASEDNESS,
            Target.UNCOND_VARIANCE,
            Target.CLU_CONSERVATIVE,
            Target.COR1_GAP,
            Target.ROB_UNDERCOVERAGE,
        ]
        summary = run_mc(example("compact_independent.json"), mc(targets))
        failed = [(c.name, c.empirical, c.theoretical, c.tolerance) for c in summary.checks if not c.passed]
        self.assertEqual(failed, [])
        self.assertTrue(summary.passed)
        self.assertEqual(summary.replications, 2000)

    def test_frozen_suite(self):
        targets = [Target.UNBIASEDNESS, Target.COND_VARIANCE, Target.ROB_CONSERVATIVE]
        summary = run_mc(example("additive_small.json"), mc(targets, condition_on_eta=True))
        self.assertTrue(summary.passed, [c for c in summary.checks if not c.passed])
        self.assertTrue(summary.condition_on_eta)
        self.assertIsNotNone(summary.theory.estimands.ate_given_eta)

    def test_multiplicative_variance_is_oracle_free(self):
        summary = run_mc(example("multiplicative.json"), mc([Target.UNBIASEDNESS, Target.UNCOND_VARIANCE]))
        check = next(c for c in summary.checks if c.name == "uncond_variance")
        self.assertTrue(check.oracle_free)
        self.assertIsNone(check.passed)
        self.assertIsNone(check.theoretical)
        self.assertTrue(summary.passed)

    def test_clt_below_min_k_is_diagnostic(self):
        summary = run_mc(example("compact_independent.json"), mc([Target.CLT], replications=500))
        ks = next(c for c in summary.checks if c.name == "clt_ks")
        self.assertIsNone(ks.passed)
        self.assertIn("diagnostic only", ks.note)
        self.assertIsNotNone(summary.empirical["ks_distance"])

    def test_bootstrap_size(self):
        summary = run_mc(
            example("compact_identical.json"),
            mc([Target.BOOTSTRAP_SIZE], replications=5000, bootstrap_mode="enum"),
        )
        check = summary.checks[0]
        self.assertEqual(check.name, "bootstrap_size")
        self.assertIs(check.passed, True)
        self.assertGreaterEqual(summary.empirical["rejection_rate"], 0.03)
        self.assertLessEqual(summary.empirical["rejection_rate"], 0.07)

    def test_coverage_and_sandwich(self):
        summary = run_mc(example("compact_independent.json"), mc([Target.COVERAGE, Target.SANDWICH]))
        by_name = {c.name: c for c in summary.checks}
        self.assertEqual(set(by_name), {"coverage_clu", "sandwich_lower", "sandwich_upper"})
        for check in by_name.values():
            self.assertIs(check.passed, True, check)
        self.assertGreaterEqual(summary.empirical["coverage_clu"], 0.93)
        theory = summary.theory
        self.assertGreater(summary.empirical["var_ate"], theory.variances.v_cond)
        self.assertGreater(summary.empirical["mean_v_clu"], summary.empirical["var_ate"])

    def test_homogeneous_shocks(self):
        summary = run_mc(example("compact_identical.json"), mc([Target.HOMOGENEOUS_SHOCKS], replications=1000))
        check = summary.checks[0]
        self.assertEqual(check.name, "homogeneous_shocks")
        self.assertIs(check.passed, True)
        self.assertLessEqual(abs(check.empirical - 1.0), check.tolerance)

    def test_negative_gap(self):
        # strong within-stratum effect heterogeneity and no shocks: V_clu sits below V_rob
        pop = population_from_dict(
            {"K": 12, "n_per_stratum": 10, "tau": 1.0, "tau_within": 3.0, "eps_sd0": 0.5, "eps_sd1": 0.5}
        )
        targets = [Target.ROB_CONSERVATIVE, Target.CLU_CONSERVATIVE, Target.COR1_GAP]
        summary = run_mc(pop, mc(targets))
        self.assertLess(summary.theory.variances.gap_cor1, -0.3)
        for check in summary.checks:
            self.assertIs(check.passed, True, check)
        gap = next(c for c in summary.checks if c.name == "cor1gap")
        self.assertLess(gap.empirical, 0.0)
        self.assertLess(summary.empirical["mean_k_v_clu"], summary.empirical["mean_k_v_rob"])

    def test_same_seed_same_summary(self):
        pop = example("compact_identical.json")
        a = run_mc(pop, mc([Target.UNBIASEDNESS], replications=400, keep_draws=True))
        b = run_mc(pop, mc([Target.UNBIASEDNESS], replications=400, keep_draws=True))
        self.assertEqual(a.model_dump(), b.model_dump())
        self.assertEqual(len(a.draws["ate"]), 400)

    def test_jobs_do_not_change_results(self):
        pop = example("compact_identical.json")
        serial = run_mc(pop, mc([Target.UNBIASEDNESS], replications=1000, jobs=1))
        parallel = run_mc(pop, mc([Target.UNBIASEDNESS], replications=1000, jobs=2))
        self.assertEqual(serial.model_dump_json(), parallel.model_dump_json())


class TestCLTDiagnostic(unittest.TestCase):
    def test_rows_per_k(self):
        cfg = load_population_config(os.path.join(EXAMPLE_DIR, "compact_independent.json"))
        table = clt_diagnostic(cfg, [4, 8], replications=300, seed=3)
        self.assertEqual([row.K for row in table.rows], [4, 8])
        for row in table.rows:
            self.assertGreater(row.sigma2_plus_K, 0.0)
            self.assertGreaterEqual(row.sigma2_plus_K, row.sigma2_K)
            self.assertIsNone(row.ks_pass)

    def test_rejects_per_stratum_lists(self):
        cfg = load_population_config(os.path.join(EXAMPLE_DIR, "unequal_sizes.toml"))
        with self.assertRaisesRegex(ValidationError, "n_per_stratum must be a single number"):
            clt_diagnostic(cfg, [4, 8], replications=300, seed=3)


if __name__ == "__main__":
    unittest.main()
