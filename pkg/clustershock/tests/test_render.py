import unittest

from clustershock.schemas.enums import Relation, Target
from clustershock.schemas.montecarlo import CheckResult, CLTRow, CLTTable, MCSummary
from clustershock.schemas.report import ComparisonRow, ComparisonTable
from clustershock.schemas.theory import EstimandSet, Theory, TrueVariances
from clustershock.utils.render import render_clt_table, render_comparison, render_mc_summary, stars


def row(**kwargs) -> ComparisonRow:
    base = dict(
        treatment="treated", outcome="visits", estimate=1.0, se_rob=0.0707, p_rob=0.0,
        se_clu=1.0, p_clu=0.3173, n=16, K=4, n_clusters=4,
    )
    return ComparisonRow(**{**base, **kwargs})


class TestStars(unittest.TestCase):
    def test_levels(self):
        self.assertEqual(stars(0.001), "***")
        self.assertEqual(stars(0.01), "**")
        self.assertEqual(stars(0.07), "*")
        self.assertEqual(stars(0.5), "")
        self.assertEqual(stars(None), "")


class TestRenderComparison(unittest.TestCase):
    def test_three_panels(self):
        text = render_comparison(ComparisonTable(alpha=0.05, rows=[row()]))
        for heading in ("Panel A: Robust SE", "Panel B: Clustered SE", "Panel C: Wild Bootstrap"):
            self.assertIn(heading, text)
        self.assertIn("1.0000***", text)
        self.assertIn("(1.0000)", text)
        self.assertIn("[0.3173]", text)
        self.assertIn("N = 16, strata = 4, clusters = 4", text)
        self.assertNotIn("wild bootstrap:", text)

    def test_bootstrap_column(self):
        table = ComparisonTable(alpha=0.05, bootstrap="16 Rademacher draws", rows=[row(p_boot=0.5)])
        text = render_comparison(table)
        self.assertIn("[0.5000]", text)
        self.assertTrue(text.endswith("wild bootstrap: 16 Rademacher draws\n"))


class TestRenderMC(unittest.TestCase):
    def test_verdicts(self):
        theory = Theory(
            shock_model="additive", K=2, n=8, n_bar=4.0, estimands=EstimandSet(ate=1.0), variances=TrueVariances()
        )
        checks = [
            CheckResult(name="unbiasedness", target=Target.UNBIASEDNESS, empirical=1.01, theoretical=1.0,
                        mc_se=0.01, tolerance=0.03, relation=Relation.EQ, passed=True),
            CheckResult(name="uncond_variance", target=Target.UNCOND_VARIANCE, empirical=0.5,
                        relation=Relation.EQ, oracle_free=True),
        ]
        summary = MCSummary(
            seed=1, replications=100, condition_on_eta=False, targets=[c.target for c in checks],
            checks=checks, empirical={}, theory=theory,
        )
        lines = render_mc_summary(summary).splitlines()
        self.assertIn("R = 100", lines[0])
        self.assertTrue(lines[2].startswith("unbiasedness"))
        self.assertTrue(lines[2].endswith("PASS"))
        self.assertTrue(lines[3].endswith("info"))

    def test_clt_table(self):
        table = CLTTable(
            seed=1, replications=100, ks_threshold=0.02, decreasing=True,
            rows=[CLTRow(K=40, ks_distance=0.01, k_var_ate=1.0, sigma2_K=1.0, mean_k_v_clu=1.2,
                         sigma2_plus_K=1.2, expected_k_v_clu=1.2, ks_pass=True)],
        )
        text = render_clt_table(table)
        self.assertIn("    40    0.0100", text)
        self.assertIn("KS trend over K: decreasing", text)


if __name__ == "__main__":
    unittest.main()
