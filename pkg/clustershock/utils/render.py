"""Fixed-width text renderings. Every number comes from the report object; nothing is recomputed."""

from clustershock.schemas.montecarlo import CLTTable, MCSummary
from clustershock.schemas.report import ComparisonTable

STAR_LEVELS = ((0.01, "***"), (0.05, "**"), (0.1, "*"))


def stars(p: float | None) -> str:
    if p is None:
        return ""
    for level, mark in STAR_LEVELS:
        if p < level:
            return mark
    return ""


def render_comparison(table: ComparisonTable) -> str:
    head = f"{'treatment':<16}{'outcome':<16}"
    rule = "-" * 72
    lines = []

    lines.append("Panel A: Robust SE")
    lines.append(head + f"{'estimate':>15}{'se':>14}{'p':>12}")
    for r in table.rows:
        lines.append(
            f"{r.treatment:<16}{r.outcome:<16}{r.estimate:>12.4f}{stars(r.p_rob):<3}"
            f"{'(' + format(r.se_rob, '.4f') + ')':>14}{'[' + format(r.p_rob, '.4f') + ']':>12}"
        )
    lines.append(rule)

    lines.append("Panel B: Clustered SE")
    lines.append(head + f"{'estimate':>15}{'se':>14}{'p':>12}")
    for r in table.rows:
        lines.append(
            f"{r.treatment:<16}{r.outcome:<16}{r.estimate:>12.4f}{stars(r.p_clu):<3}"
            f"{'(' + format(r.se_clu, '.4f') + ')':>14}{'[' + format(r.p_clu, '.4f') + ']':>12}"
        )
    lines.append(rule)

    lines.append("Panel C: Wild Bootstrap")
    lines.append(head + f"{'estimate':>15}{'':>14}{'p':>12}")
    for r in table.rows:
        p = "" if r.p_boot is None else "[" + format(r.p_boot, ".4f") + "]"
        lines.append(f"{r.treatment:<16}{r.outcome:<16}{r.estimate:>12.4f}{stars(r.p_boot):<3}{'':>14}{p:>12}")
    lines.append(rule)

    for r in table.rows:
        lines.append(f"{r.treatment:<16}{r.outcome:<16}N = {r.n}, strata = {r.K}, clusters = {r.n_clusters}")
    lines.append("*** p < 0.01 ** p < 0.05 * p < 0.1")
    if table.bootstrap:
        lines.append(f"wild bootstrap: {table.bootstrap}")
    return "\n".join(lines) + "\n"


def _verdict(passed: bool | None) -> str:
    return {True: "PASS", False: "FAIL", None: "info"}[passed]


def render_mc_summary(summary: MCSummary) -> str:
    lines = [
        f"Monte Carlo  R = {summary.replications}  seed = {summary.seed}  "
        f"condition_on_eta = {summary.condition_on_eta}",
        f"{'check':<20}{'relation':>9}{'empirical':>14}{'theoretical':>14}{'mc_se':>12}{'tolerance':>12}  result",
    ]
    for c in summary.checks:
        lines.append(
            f"{c.name:<20}{c.relation.value:>9}{c.empirical:>14.6g}"
            f"{'' if c.theoretical is None else format(c.theoretical, '.6g'):>14}"
            f"{'' if c.mc_se is None else format(c.mc_se, '.3g'):>12}"
            f"{'' if c.tolerance is None else format(c.tolerance, '.3g'):>12}  {_verdict(c.passed)}"
        )
    return "\n".join(lines) + "\n"


def render_clt_table(table: CLTTable) -> str:
    lines = [
        f"{'K':>6}{'KS':>10}{'K var':>12}{'sigma2_K':>12}{'mean K Vclu':>14}{'E K Vclu':>12}{'sigma2+_K':>12}  KS<=thr"
    ]
    for r in table.rows:
        lines.append(
            f"{r.K:>6}{r.ks_distance:>10.4f}{r.k_var_ate:>12.4f}{r.sigma2_K:>12.4f}"
            f"{r.mean_k_v_clu:>14.4f}{r.expected_k_v_clu:>12.4f}{r.sigma2_plus_K:>12.4f}  {_verdict(r.ks_pass)}"
        )
    lines.append(f"KS trend over K: {'decreasing' if table.decreasing else 'not decreasing'}")
    return "\n".join(lines) + "\n"
