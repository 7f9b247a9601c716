"""End-to-end acceptance criteria, one test per criterion.

Every test prints a single ``criterion N [PASS|FAIL] ...`` line; the lines
are repeated in the terminal summary. Run alone with
``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np

from fredholm.chaos import ItoFunction, TestVariable, ito_duality_check, product_formula_check
from fredholm.cli import run
from fredholm.covariance import (
    brownian_bridge,
    brownian_motion,
    evaluate,
    fractional_brownian,
    ornstein_uhlenbeck,
    rank_one,
    truncated_series,
)
from fredholm.factorize import factorization_residual, factorize, known_kernel
from fredholm.numerics import make_uniform_grid
from fredholm.processes import (
    VolterraKernel,
    bridge_gram,
    bridge_orthogonal,
    empirical_covariance,
    integrated_truncation_error,
    langevin_kernel,
    langevin_simulate_euler,
    series_expand,
    series_truncation_error,
    simulate,
    simulate_bridge_canonical,
    volterra_perturb,
)
from fredholm.rng import noise_matrix
from fredholm.transfer import StepFunction, ht_inner
from oracles import bm_eigenvalue, bm_tail, ito_expectation, ou_variance

FOUR_MODELS = {
    "BM": lambda: brownian_motion(1.0),
    "BB": lambda: brownian_bridge(1.0),
    "OU": lambda: ornstein_uhlenbeck(1.0, 1.0, 1.0),
    "fBm(0.75)": lambda: fractional_brownian(0.75, 1.0),
}


def test_criterion_1_factorization_exactness(acceptance_report):
    start = time.perf_counter()
    grid = make_uniform_grid(1.0, 256)
    residuals = {}
    for name, make in FOUR_MODELS.items():
        model = make()
        kernel = factorize(model, grid, trace_fraction_target=1.0)
        residuals[name] = factorization_residual(kernel, model).absolute
    seconds = time.perf_counter() - start
    worst = max(residuals.values())
    passed = worst <= 1e-10 and seconds < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in residuals.items()) + " (tol 1e-10)"
    acceptance_report(1, "factorization residual", passed, detail, seconds)
    assert passed


def test_criterion_2_mercer_eigenvalues(acceptance_report):
    start = time.perf_counter()
    kernel = factorize(brownian_motion(1.0), make_uniform_grid(1.0, 512))
    lam = kernel.decomposition.eigenvalues[:10]
    errors = [abs(lam[k - 1] / bm_eigenvalue(k) - 1.0) for k in range(1, 11)]
    seconds = time.perf_counter() - start
    passed = max(errors) <= 1e-3 and seconds < 5
    acceptance_report(2, "BM eigenvalues k<=10", passed,
                      f"max relative error {max(errors):.2e} (tol 1e-3)", seconds)
    assert passed


def test_criterion_3_transfer_isometry(acceptance_report):
    start = time.perf_counter()
    models = {
        **{k: v() for k, v in FOUR_MODELS.items()},
        "rank-one": rank_one(np.sin, 1.0),
        "truncated-series": truncated_series(10, 1.0),
    }
    grid = make_uniform_grid(1.0, 256)
    sub = grid.nodes[::16]
    worst_ratio, details = 0.0, []
    for name, model in models.items():
        kernel = factorize(model, grid)
        tol = max(1e-8, factorization_residual(kernel, model).absolute * model.T)
        ind = [StepFunction.indicator(t) for t in sub]
        err = max(
            abs(ht_inner(kernel, ind[i], ind[j]) - evaluate(model, sub[i], sub[j]))
            for i in range(len(sub)) for j in range(len(sub))
        )
        worst_ratio = max(worst_ratio, err / tol)
        details.append(f"{name} {err:.1e}/{tol:.0e}")
    seconds = time.perf_counter() - start
    passed = worst_ratio <= 1.0 and seconds < 5
    acceptance_report(3, "transfer isometry on 17x17 indicators", passed, ", ".join(details), seconds)
    assert passed


def test_criterion_4_product_formula(acceptance_report):
    start = time.perf_counter()
    grid = make_uniform_grid(1.0, 64)
    pairs = {
        "aligned": (StepFunction.indicator(0.5), StepFunction.indicator(0.5) * 2.0),
        "orthogonal": (StepFunction.interval(0.0, 0.5), StepFunction.interval(0.5, 1.0)),
        "oblique": (StepFunction.indicator(0.75), StepFunction((0.0, 0.25, 1.0), (1.0, -0.5))),
    }
    kernels = {
        "indicator": known_kernel("brownian-motion-indicator", grid),
        "fBm Mercer": factorize(fractional_brownian(0.75), grid),
    }
    worst, count = 0.0, 0
    for kernel in kernels.values():
        noise = noise_matrix(2024, 1000, kernel.n_noise)
        for f, g in pairs.values():
            for p in range(7):
                for q in range(7 - p):
                    rep = product_formula_check(kernel, f, g, p, q, noise, tol=1e-10)
                    worst = max(worst, rep.max_abs_deviation)
                    count += 1
    seconds = time.perf_counter() - start
    passed = worst <= 1e-10 and seconds < 30
    acceptance_report(4, "product formula p+q<=6", passed,
                      f"{count} (kernel, pair, p, q) cases x 1000 draws, max deviation {worst:.1e} (tol 1e-10)",
                      seconds)
    assert passed


def test_criterion_5_ito_duality(acceptance_report):
    start = time.perf_counter()
    bm = brownian_motion(1.0)
    exact = ito_expectation(bm, 0.5, [0, 0, 1], [(1.0, (2,))], [1.0])
    head = ito_duality_check(bm, factorize(bm, make_uniform_grid(1.0, 64)), ItoFunction.monomial(2), 0.5,
                             TestVariable.power(1.0, 2), 1_000_000, 42)
    head_ok = (head.passed and abs(head.lhs_mean - exact) <= 3.5 * head.lhs_se
               and abs(head.rhs_mean - exact) <= 3.5 * head.rhs_se)
    grid = make_uniform_grid(1.0, 32)
    tests = {
        "X(0.75)^3": TestVariable.power(0.75, 3),
        "X(.25)X(.5)X(1)+X(.5)^2": TestVariable((0.25, 0.5, 1.0), ((1.0, (1, 1, 1)), (1.0, (0, 2, 0)))),
    }
    failures, worst_z, runs = [], 0.0, 1
    for mname, make in FOUR_MODELS.items():
        model = make()
        kernel = factorize(model, grid)
        for k in (3, 4):
            for gname, G in tests.items():
                rep = ito_duality_check(model, kernel, ItoFunction.monomial(k), 0.5, G, 1_000_000, 7 + k)
                runs += 1
                worst_z = max(worst_z, rep.z)
                if not rep.passed:
                    failures.append(f"{mname}/x^{k}/{gname} z={rep.z:.2f}")
    seconds = time.perf_counter() - start
    passed = head_ok and not failures and seconds < 300
    detail = (f"headline lhs {head.lhs_mean:.5f}+-{head.lhs_se:.5f}, rhs {head.rhs_mean:.5f}+-{head.rhs_se:.5f} "
              f"vs {exact:.3f}; {runs - 1} more runs, max z {worst_z:.2f} (tol 3.5)")
    if failures:
        detail += "; failed: " + ", ".join(failures)
    acceptance_report(5, "Ito duality at 1e6 paths", passed, detail, seconds)
    assert passed


def test_criterion_6_bridges(acceptance_report):
    start = time.perf_counter()
    grid = make_uniform_grid(1.0, 64)
    kernel = known_kernel("brownian-motion-indicator", grid)
    spec = bridge_gram(kernel, StepFunction.constant(1.0, 1.0))
    times = np.array([0.125, 0.25, 0.5, 0.75, 0.875])
    target = np.minimum.outer(times, times) - np.outer(times, times)
    orth = bridge_orthogonal(kernel, spec, simulate(kernel, 200_000, 61))
    endpoint = float(np.max(np.abs(orth.at(1.0))))
    est_o = empirical_covariance(orth, times)
    z_exact = float(np.max(np.abs(est_o.covariance - target) / est_o.std_error))
    canon = simulate_bridge_canonical(kernel, spec, 200_000, 62)
    est_c = empirical_covariance(canon, times)
    z_pair = float(np.max(np.abs(est_o.covariance - est_c.covariance) / np.hypot(est_o.std_error, est_c.std_error)))
    seconds = time.perf_counter() - start
    passed = z_exact <= 3.5 and endpoint <= 1e-10 and z_pair <= 3.5 and seconds < 120
    acceptance_report(6, "BM bridge g=1", passed,
                      f"max z vs min(t,s)-ts {z_exact:.2f}, max |X(T)| {endpoint:.1e}, "
                      f"canonical vs orthogonal max z {z_pair:.2f}", seconds)
    assert passed


def test_criterion_7_langevin(acceptance_report):
    start = time.perf_counter()
    theta = 1.0
    g256 = make_uniform_grid(1.0, 256)
    ind = known_kernel("brownian-motion-indicator", g256)
    lang = langevin_kernel(ind, theta)
    t, u = g256.nodes[:, None], ind.noise_points[None, :]
    closed = np.where(u < t, np.exp(-theta * (t - u)), 0.0)
    d_closed = float(np.max(np.abs(lang.matrix - closed)))
    d_volterra = float(np.max(np.abs(lang.matrix - volterra_perturb(ind, VolterraKernel.exponential(theta)).matrix)))

    g512 = make_uniform_grid(1.0, 512)
    ind512 = known_kernel("brownian-motion-indicator", g512)
    times = [0.25, 0.5, 0.75, 1.0]
    est_k = empirical_covariance(simulate(langevin_kernel(ind512, theta), 100_000, 71), times)
    est_e = empirical_covariance(langevin_simulate_euler(ind512, theta, 100_000, 72), times)
    var_target = ou_variance(1.0, theta)
    z_var = abs(est_k.covariance[-1, -1] - var_target) / est_k.std_error[-1, -1]
    # explicit Euler inflates the variance by about theta * dt / 2
    budget = 3.5 * np.hypot(est_k.std_error, est_e.std_error) + theta * (1.0 / 512) * np.abs(est_k.covariance)
    euler_ok = bool(np.all(np.abs(est_k.covariance - est_e.covariance) <= budget))
    seconds = time.perf_counter() - start
    passed = d_closed <= 1e-6 and d_volterra <= 1e-6 and z_var <= 3.5 and euler_ok and seconds < 120
    acceptance_report(7, "Langevin kernel", passed,
                      f"vs closed form {d_closed:.1e}, vs Volterra {d_volterra:.1e}, "
                      f"Var X(1) {est_k.covariance[-1, -1]:.5f} vs {var_target:.5f} (z {z_var:.2f}), "
                      f"Euler table {'agrees' if euler_ok else 'disagrees'}", seconds)
    assert passed


def test_criterion_8_series(acceptance_report):
    start = time.perf_counter()
    bm = brownian_motion(1.0)
    grid = make_uniform_grid(1.0, 512)
    kernel = factorize(bm, grid)
    full = float(np.max(np.abs(series_truncation_error(series_expand(kernel, "mercer-eigen"), bm))))
    m10 = integrated_truncation_error(series_expand(kernel, "mercer-eigen", 10), bm)
    tail = bm_tail(10)
    quoted = 0.00966
    rel = abs(m10 / tail - 1.0)
    rel_quoted = abs(m10 / quoted - 1.0)
    ranks_ok = all(
        integrated_truncation_error(series_expand(kernel, "mercer-eigen", m), bm)
        <= integrated_truncation_error(series_expand(kernel, "trigonometric", m), bm)
        for m in (1, 5, 10)
    )
    seconds = time.perf_counter() - start
    passed = full <= 1e-8 and rel <= 0.05 and ranks_ok and seconds < 30
    acceptance_report(8, "series expansion", passed,
                      f"full-basis error {full:.1e}; m=10 integrated {m10:.6f} vs tail sum {tail:.6f} "
                      f"({100 * rel:.2f}%) and vs quoted {quoted} ({100 * rel_quoted:.2f}%); "
                      f"KL <= trigonometric at m=1,5,10: {ranks_ok}", seconds)
    assert passed


DETERMINISM_RUNS = {
    "factorize": ["--model", "fbm:H=0.75", "--n", "128"],
    "simulate": ["--model", "ou", "--n", "64", "--paths", "20000", "--save-paths"],
    "bridge": ["--model", "bm", "--n", "32", "--paths", "20000", "--kernel", "indicator"],
    "langevin": ["--model", "bm", "--n", "64", "--paths", "20000", "--kernel", "indicator"],
    "equiv": ["--model", "bm", "--n", "128"],
    "kl": ["--model", "bm", "--n", "128", "--basis", "trigonometric"],
    "ito-check": ["--model", "fbm", "--n", "32", "--paths", "50000", "--f", "x3", "--G", "X(0.5)*X(1)"],
    "chaos-check": ["--model", "bm", "--n", "32", "--draws", "200"],
}


def test_criterion_9_determinism(acceptance_report, tmp_path):
    start = time.perf_counter()
    mismatched = []
    n_files = 0
    for command, args in DETERMINISM_RUNS.items():
        outs = []
        for threads in ("1", "3"):
            out = tmp_path / f"{command}-{threads}"
            code = run([command, *args, "--seed", "123", "--threads", threads, "--out", str(out)])
            if code != 0:
                mismatched.append(f"{command} exit {code}")
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if outs[0] != outs[1]:
            mismatched.append(command)
        n_files += len(outs[0])
    seconds = time.perf_counter() - start
    passed = not mismatched
    detail = f"{len(DETERMINISM_RUNS)} commands, {n_files} files byte-identical across 1 and 3 threads"
    if mismatched:
        detail = "mismatch: " + ", ".join(mismatched)
    acceptance_report(9, "CLI determinism", passed, detail, seconds)
    assert passed
