"""Acceptance criteria, one test per criterion.

Each test prints a single ``[criterion k] PASS|FAIL`` line (shown even
without ``-s``) before asserting. Run only this suite with::

    pytest -m acceptance
"""

import io
import math

import numpy as np
import pytest

from quantum_averaging.cli import main
from quantum_averaging.estimator import DRIFT_SNU, combined_stderr
from quantum_averaging.gaussian import (
    conditional_covariance,
    crossing_success_probability,
    feedforward_gain,
    finite_window_conditional_variance,
    sample_gaussian,
    success_probability,
)
from quantum_averaging.means import (
    CorrelatedPair,
    arithmetic_mean,
    arithmetic_mean_correlated,
    geometric_mean,
    harmonic_mean,
    harmonic_mean_correlated,
    stabilization_table,
)
from quantum_averaging.network import apply_to_covariance, apply_to_samples
from quantum_averaging.protocol import (
    ARITHMETIC_INTERFERENCE,
    HARMONIC_HERALDED,
    PostSelectionRule,
    heralded_outcome,
    interference_network,
    narrow_window,
    run_harmonic_feedforward,
    run_harmonic_heralded,
)
from quantum_averaging.scenarios import FIGURE_PRESETS, default_c_grid, run_fig4

pytestmark = pytest.mark.acceptance

N_POINT = 60_000
# Monte Carlo size for narrow-window limits
N_NARROW = 4_000_000


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {k}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def mixed_pair(v1, v2, c, n_samples, seed):
    pair = CorrelatedPair(v1, v2, c)
    net = interference_network(2)
    image = apply_to_covariance(net, pair.covariance())
    batch = apply_to_samples(net, sample_gaussian(pair.covariance(), n_samples, seed))
    return image, batch


def narrow_limit(batch, trig, gain, target, min_kept_options=(1000, 500, 250, 100)):
    """Heralded outcome at the smallest window whose predicted bias is negligible.

    For a small cube window the bias is ``t^2/3 * |g|^2``; take the largest
    kept count whose predicted bias stays under a quarter of the stderr.
    """
    for k in min_kept_options:
        w = narrow_window(batch, trig, k)
        bias = w.t**2 / 3 * float(np.sum(np.square(gain)))
        se = target * math.sqrt(2 / (k - 1))
        if bias <= se / 4:
            break
    return heralded_outcome(batch, PostSelectionRule(tuple(trig), w)), bias


def test_1_closed_form_worked_examples(report):
    a = stabilization_table(5, 1, 0.25, 4)
    b = stabilization_table(5, 2, 0.25, 4)
    exact = abs(a[0] - 1.0) <= 1e-10 and abs(a[1] - 4 / 13) <= 1e-10 \
        and abs(b[0] - 1.75) <= 1e-10 and abs(b[1] - 0.40) <= 1e-10
    # quoted to two decimals
    quoted = round(a[0], 2) == 1.0 and round(a[1], 2) == 0.31 and round(b[0], 2) == 1.75 and round(b[1], 2) == 0.40
    report(1, exact and quoted, f"(5,1) -> ({a[0]:.12g}, {a[1]:.12g}); (5,2) -> ({b[0]:.12g}, {b[1]:.12g})")


def test_2_fig4a_reproduction(report):
    v1, v2 = FIGURE_PRESETS["fig4a"]
    recs = run_fig4(v1, v2, (0.10,), N_POINT, seed=4, figure="fig4a")
    arith = next(r for r in recs if r.protocol == ARITHMETIC_INTERFERENCE)
    her = next(r for r in recs if r.protocol == HARMONIC_HERALDED)
    ok_a = abs(arith.var_empirical - 0.770) <= 3 * arith.var_stderr
    ok_h = abs(her.var_empirical - her.var_analytic) <= 3 * her.var_stderr
    ok_band = 0.748 <= her.var_analytic <= 0.770
    # quoted 0.74 +/- 0.02, plus the measurement drift in quadrature
    quoted_tol = 3 * combined_stderr(her.var_stderr, 0.02, DRIFT_SNU)
    ok_quoted = abs(her.var_empirical - 0.74) <= quoted_tol
    report(2, ok_a and ok_h and ok_band and ok_quoted,
           f"arith {arith.var_empirical:.4f}+/-{arith.var_stderr:.4f} (0.770); "
           f"heralded@0.10 {her.var_empirical:.4f}+/-{her.var_stderr:.4f} vs analytic {her.var_analytic:.4f} "
           f"in [0.748,0.770]; |est-0.74| = {abs(her.var_empirical - 0.74):.4f} <= {quoted_tol:.4f}")


def test_3_fig4b_reproduction(report):
    v1, v2 = FIGURE_PRESETS["fig4b"]
    recs = run_fig4(v1, v2, (1.0,), N_POINT, seed=5, figure="fig4b", protocols=(ARITHMETIC_INTERFERENCE,))
    arith = recs[0]
    ok_a = abs(arith.var_empirical - 1.225) <= 3 * arith.var_stderr
    image, batch = mixed_pair(v1, v2, 0.0, N_NARROW, seed=6)
    cross = crossing_success_probability(image, level=1.0)
    ok_cross = cross is not None and abs(cross - 0.64) <= 0.02
    hm = harmonic_mean([v1, v2])
    gain = feedforward_gain(image, 0, [1])
    oc, bias = narrow_limit(batch, [1], gain, hm)
    ok_narrow = abs(oc.variance.value - 0.926) <= 3 * oc.variance.standard_error
    # the measured curve crosses below 0.60 because of setup imperfections the ideal model omits
    report(3, ok_a and ok_cross and ok_narrow,
           f"arith {arith.var_empirical:.4f}+/-{arith.var_stderr:.4f} (1.225); ideal crossing P_S={cross:.4f} "
           f"(0.64+/-0.02; measured <0.60, imperfection gap); narrow-window "
           f"{oc.variance.value:.4f}+/-{oc.variance.standard_error:.4f} (0.926, kept {oc.kept_count})")


def test_4_correlated_closed_forms(report):
    v1, v2 = FIGURE_PRESETS["fig5"]
    cs = default_c_grid(v1, v2)
    rows, ok = [], True
    an_a, an_h, em_a, em_h = [], [], [], []
    for i, c in enumerate(cs):
        pair = CorrelatedPair(v1, v2, c)
        va, vh = arithmetic_mean_correlated(pair), harmonic_mean_correlated(pair)
        image, batch = mixed_pair(v1, v2, c, N_NARROW, seed=40 + i)
        arith = heralded_outcome(batch, PostSelectionRule.all_but(2))
        her, _ = narrow_limit(batch, [1], feedforward_gain(image, 0, [1]), vh)
        ok &= arith.variance.within(va, k=4) and her.variance.within(vh, k=4)
        an_a.append(va), an_h.append(vh)
        em_a.append(arith.variance.value), em_h.append(her.variance.value)
        rows.append(f"C={c:.3f}: A {arith.variance.value:.4f}/{va:.4f} H {her.variance.value:.4f}/{vh:.4f}")
    for seq in (an_a, an_h, em_a, em_h):
        ok &= bool(np.all(np.diff(seq) < 0))
    report(4, ok, "; ".join(rows) + "; strictly decreasing in C")


def test_5_n_port_property(report):
    rng = np.random.default_rng(2024)
    rows, ok = [], True
    for n in range(2, 7):
        v = rng.uniform(0.2, 5, n)
        net = interference_network(n)
        image = apply_to_covariance(net, np.diag(v))
        trig = list(range(1, n))
        schur = float(conditional_covariance(image, [0], trig)[0, 0])
        hm = n / np.sum(1 / v)
        ok &= abs(schur - hm) <= 1e-10
        batch = apply_to_samples(net, sample_gaussian(np.diag(v), N_NARROW, seed=500 + n))
        oc, bias = narrow_limit(batch, trig, feedforward_gain(image, 0, trig), hm)
        ok &= oc.variance.within(hm, k=3)
        rows.append(f"n={n}: |schur-HM|={abs(schur - hm):.1e} MC {oc.variance.value:.3f}+/-"
                    f"{oc.variance.standard_error:.3f} vs {hm:.3f} (kept {oc.kept_count})")
        del batch
    report(5, ok, "; ".join(rows))


def test_6_inequality_and_monotonicity(report):
    rng = np.random.default_rng(6)
    ineq = True
    for _ in range(1000):
        x = rng.uniform(0.05, 10, rng.integers(1, 20))
        h, g, a = harmonic_mean(x), geometric_mean(x), arithmetic_mean(x)
        ineq &= h <= g * (1 + 1e-12) and g <= a * (1 + 1e-12)
    mono = True
    for _ in range(20):
        A = rng.normal(size=(2, 2))
        S = A @ A.T + 0.1 * np.eye(2)
        vals = [finite_window_conditional_variance(S, t) for t in np.geomspace(1e-3, 10, 50)]
        mono &= bool(np.all(np.diff(vals) >= -1e-15))
    v1, v2 = FIGURE_PRESETS["fig4b"]
    vt = arithmetic_mean([v1, v2])
    worst = 0.0
    for i, t in enumerate(np.linspace(0.1, 2.5, 10)):
        oc = run_harmonic_heralded(np.diag([v1, v2]), N_POINT, PostSelectionRule.all_but(2, t), seed=600 + i)
        p = success_probability(vt, t)
        worst = max(worst, abs(oc.success_probability - p) / math.sqrt(p * (1 - p) / N_POINT))
    ok = ineq and mono and worst <= 4
    report(6, ok, f"H<=G<=A on 1000 sets: {ineq}; monotone in t: {mono}; max |P_S - erf| = {worst:.2f} binomial stderr")


def test_7_feedforward_equivalence(report):
    rng = np.random.default_rng(7)
    worst, ok = 0.0, True
    for i in range(20):
        A = rng.normal(size=(2, 2))
        S = A @ A.T + 0.2 * np.eye(2)
        ff = run_harmonic_feedforward(S, N_POINT, seed=700 + i)
        ok &= ff.success_probability == 1.0 and ff.kept_count == ff.total
        image = apply_to_covariance(interference_network(2), S)
        batch = apply_to_samples(interference_network(2), sample_gaussian(S, 1_000_000, seed=800 + i))
        her, _ = narrow_limit(batch, [1], feedforward_gain(image, 0, [1]), ff.analytic_prediction)
        z = abs(ff.variance.value - her.variance.value) / combined_stderr(
            ff.variance.standard_error, her.variance.standard_error)
        worst = max(worst, z)
    ok &= worst <= 4
    report(7, ok, f"20 random covariances: P_S == 1 always; max |ff - narrow heralded| = {worst:.2f} combined stderr")


def test_8_determinism(tmp_path, report):
    cases = [
        ("figure", "fig4b", "--seed", "11", "--n", "5000", "--ps-grid", "0.05,0.3,1", "--format", "csv"),
        ("figure", "fig5", "--seed", "2", "--n", "3000", "--ps-grid", "0.1,1", "--format", "csv"),
        ("run", "--protocol", "harmonic-heralded", "--v", "0.62,1.83", "--ps", "0.1", "--seed", "7", "--format", "csv"),
        ("run", "--protocol", "arithmetic-pick", "--v", "4,0.25,0.25", "--seed", "7", "--format", "csv"),
    ]
    ok = True
    for argv in cases:
        outs = []
        for rep in range(2):
            buf = io.StringIO()
            ok &= main(list(argv) + ["--out", str(tmp_path / f"{argv[1]}{rep}")], stdout=io.StringIO()) == 0
            ok &= main(list(argv), stdout=buf) == 0
            files = sorted((tmp_path / f"{argv[1]}{rep}").glob("*.csv"))
            outs.append((buf.getvalue().encode(), [f.read_bytes() for f in files]))
        ok &= outs[0] == outs[1]
    report(8, ok, f"{len(cases)} command lines, repeated: stdout and CSV files byte-identical")
