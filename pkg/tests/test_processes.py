import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fredholm.covariance import (
    brownian_bridge,
    brownian_motion,
    evaluate,
    fractional_brownian,
    gram,
    ornstein_uhlenbeck,
    rank_one,
    truncated_series,
)
from fredholm.errors import DependentFunctionalsError, InvalidArgumentError, InvalidBasisError
from fredholm.factorize import factorization_residual, factorize, known_kernel, unitary_equivalence_check
from fredholm.numerics import make_gauss_legendre_grid, make_uniform_grid
from fredholm.processes import (
    PathEnsemble,
    VolterraKernel,
    bridge_canonical,
    bridge_gram,
    bridge_orthogonal,
    canonical_drift_kernel,
    empirical_covariance,
    integrated_truncation_error,
    langevin_kernel,
    langevin_simulate_euler,
    load_ensemble,
    path_functionals,
    save_ensemble,
    series_expand,
    series_truncation_error,
    simulate,
    simulate_bridge_canonical,
)
from fredholm.rng import noise_matrix, noise_vector
from fredholm.transfer import StepFunction
from oracles import bm_eigenvalue, bm_tail, gaussian_conditional_cov, ou_variance

G16 = make_uniform_grid(1.0, 16)
G64 = make_uniform_grid(1.0, 64)


def _within(est, target, sigmas=3.5):
    return np.all(np.abs(est.covariance - target) <= sigmas * est.std_error + 1e-15)


# ----------------------------------------------------------------- simulate

def test_simulate_bridge_kernel_pins_endpoint():
    ens = simulate(known_kernel("brownian-bridge-orthogonal", G16), 1000, 1)
    assert np.max(np.abs(ens.at(1.0))) <= 1e-12
    assert np.all(ens.at(0.0) == 0.0)


def test_simulate_bm_variance():
    ens = simulate(known_kernel("brownian-motion-indicator", G16), 200_000, 2)
    est = empirical_covariance(ens, [1.0])
    assert abs(est.covariance[0, 0] - 1.0) <= 3.5 * est.std_error[0, 0]


def test_simulate_degenerate_paths_are_lines():
    g = make_uniform_grid(2.0, 16)
    ens = simulate(known_kernel("degenerate-rank-one", g, f=lambda t: t), 50, 3)
    slope = ens.paths[:, -1] / 2.0
    np.testing.assert_allclose(ens.paths, np.outer(slope, g.nodes), atol=1e-13)


def test_simulate_is_reproducible_per_path():
    K = factorize(fractional_brownian(0.7), G16)
    a = simulate(K, 5000, 9)
    b = simulate(K, 5000, 9)
    assert np.array_equal(a.paths, b.paths)
    nv = noise_vector(9, 4500, K.n_noise)
    np.testing.assert_allclose(a.paths[4500], K.noise_map() @ nv.values, rtol=0, atol=1e-14)
    assert not np.array_equal(simulate(K, 10, 9, stream=1).paths, a.paths[:10])
    with pytest.raises(InvalidArgumentError):
        simulate(K, 0, 1)


@pytest.mark.parametrize("name", ["bm", "bb", "ou", "fbm", "fbm-rough", "rank-one", "series"])
def test_law_reproduction(name):
    model = {
        "bm": brownian_motion(1.0),
        "bb": brownian_bridge(1.0),
        "ou": ornstein_uhlenbeck(1.0, 1.0, 1.0),
        "fbm": fractional_brownian(0.75, 1.0),
        "fbm-rough": fractional_brownian(0.3, 1.0),
        "rank-one": rank_one(np.cos, 1.0),
        "series": truncated_series(5, 1.0),
    }[name]
    g = make_uniform_grid(1.0, 90)
    K = factorize(model, g)
    ens = simulate(K, 200_000, 11)
    times = g.nodes[9::9]
    est = empirical_covariance(ens, times)
    assert _within(est, evaluate(model, times[:, None], times[None, :]))


# --------------------------------------------------------- empirical cov

def test_empirical_covariance_examples():
    zero = PathEnsemble(G16, np.zeros((10, 17)), None, "zero")
    est = empirical_covariance(zero)
    assert np.all(est.covariance == 0) and np.all(est.std_error == 0)
    K = known_kernel("brownian-motion-indicator", G16)
    est = empirical_covariance(simulate(K, 200_000, 4), [0.5, 1.0])
    assert _within(est, np.array([[0.5, 0.5], [0.5, 1.0]]))
    with pytest.raises(InvalidArgumentError):
        empirical_covariance(PathEnsemble(G16, np.zeros((1, 17)), None, "one"))


def test_standard_error_rate():
    K = known_kernel("brownian-motion-indicator", G16)
    se1 = empirical_covariance(simulate(K, 25_000, 5), [0.5, 1.0]).std_error
    se4 = empirical_covariance(simulate(K, 100_000, 6), [0.5, 1.0]).std_error
    ratio = se1 / se4
    assert np.all(np.abs(ratio - 2.0) <= 0.4)


def test_empirical_covariance_matches_numpy():
    rng = np.random.default_rng(0)
    ens = PathEnsemble(G16, rng.standard_normal((50, 17)), None, "x")
    np.testing.assert_allclose(empirical_covariance(ens).covariance, np.cov(ens.paths.T), atol=1e-14)


def test_export_round_trip(tmp_path):
    ens = simulate(factorize(brownian_bridge(1.0), G16), 20, 8, stream=2)
    csv_path, json_path = save_ensemble(ens, tmp_path / "paths.csv", {"command": "test"})
    back = load_ensemble(csv_path)
    assert np.array_equal(back.paths, ens.paths)
    assert (back.seed, back.stream, back.provenance) == (8, 2, "mercer")
    assert back.grid.same_as(G16)


# ------------------------------------------------------------------ series

def test_series_leading_function_is_karhunen_loeve():
    g = make_uniform_grid(1.0, 256)
    exp = series_expand(factorize(brownian_motion(1.0), g), "mercer-eigen", 3)
    expected = math.sqrt(bm_eigenvalue(1)) * math.sqrt(2) * np.sin(np.pi * g.nodes / 2)
    assert np.max(np.abs(exp.table[0] - expected)) <= 5e-6
    # Nystrom at doubled resolution, sampled on the coarse nodes
    g2 = make_uniform_grid(1.0, 512)
    ref = series_expand(factorize(brownian_motion(1.0), g2), "mercer-eigen", 1).table[0, ::2]
    assert np.max(np.abs(exp.table[0] - ref)) <= 5e-6


@pytest.mark.parametrize("model", [brownian_motion(1.0), fractional_brownian(0.75), ornstein_uhlenbeck(1.0, 1.0, 1.0)])
def test_series_full_basis_parseval(model):
    K = factorize(model, G64, trace_fraction_target=1.0)
    res = factorization_residual(K, model).absolute
    exp = series_expand(K, "mercer-eigen")
    assert np.max(np.abs(exp.covariance() - gram(model, G64))) <= res + 1e-12
    assert np.max(np.abs(series_truncation_error(exp, model))) <= 1e-8
    # all n + 1 cosines alias on the trapezoid nodes; n of them stay orthonormal
    with pytest.raises(InvalidBasisError):
        series_expand(K, "trigonometric")
    assert series_expand(K, "trigonometric", 64).m == 64


@pytest.mark.parametrize("basis", ["trigonometric", "haar"])
def test_series_complete_bases_on_cell_kernel(basis):
    K = known_kernel("brownian-motion-indicator", G64)
    exp = series_expand(K, basis)
    assert np.max(np.abs(exp.covariance() - gram(brownian_motion(), G64))) <= 1e-12


def test_series_empty_expansion():
    K = factorize(brownian_motion(1.0), G16)
    exp = series_expand(K, "trigonometric", 0)
    assert exp.m == 0 and exp.table.shape == (0, 17)
    np.testing.assert_allclose(series_truncation_error(exp, brownian_motion()), G16.nodes)
    assert series_truncation_error(exp, brownian_motion(), 0.5) == 0.5


def test_series_integrated_tail():
    g = make_uniform_grid(1.0, 512)
    exp = series_expand(factorize(brownian_motion(1.0), g), "mercer-eigen", 10)
    assert integrated_truncation_error(exp, brownian_motion()) == pytest.approx(bm_tail(10), abs=1e-5)


@pytest.mark.parametrize("basis", ["mercer-eigen", "trigonometric", "haar"])
def test_series_error_monotone_in_rank(basis):
    K = known_kernel("brownian-motion-indicator", G64)
    prev = None
    for m in range(0, 65, 4):
        err = series_truncation_error(series_expand(K, basis, m), brownian_motion())
        assert np.all(err >= -1e-10)
        if prev is not None:
            assert np.all(err <= prev + 1e-12)
        prev = err


def test_karhunen_loeve_optimal_among_bases():
    g = make_uniform_grid(1.0, 256)
    bm = brownian_motion(1.0)
    mercer = factorize(bm, g)
    cell = known_kernel("brownian-motion-indicator", g)
    for m in (1, 5, 10):
        kl = integrated_truncation_error(series_expand(mercer, "mercer-eigen", m), bm)
        trig = integrated_truncation_error(series_expand(mercer, "trigonometric", m), bm)
        haar = integrated_truncation_error(series_expand(cell, "haar", m), bm)
        assert kl <= trig + 1e-12 and kl <= haar + 1e-12


def test_series_errors():
    K = factorize(brownian_motion(1.0), G16)
    with pytest.raises(InvalidBasisError):
        series_expand(K, "haar", 4)
    with pytest.raises(InvalidArgumentError):
        series_expand(K, "wavelet", 2)
    with pytest.raises(InvalidArgumentError):
        series_expand(K, "trigonometric", 100)


# ----------------------------------------------------------------- bridges

def test_bridge_gram_examples():
    K = known_kernel("brownian-motion-indicator", G16)
    spec = bridge_gram(K, [StepFunction.constant(1.0, 1.0)])
    np.testing.assert_allclose(spec.gram, [[1.0]], atol=1e-15)
    np.testing.assert_allclose(spec.running_gram[:, 0, 0], 1.0 - G16.nodes, atol=1e-14)
    with pytest.raises(DependentFunctionalsError):
        bridge_gram(known_kernel("brownian-bridge-orthogonal", G16), StepFunction.constant(1.0, 1.0))
    with pytest.raises(DependentFunctionalsError):
        bridge_gram(K, [StepFunction.indicator(0.5), StepFunction.indicator(0.5) * 2.0])


def test_orthogonal_bridge_is_brownian_bridge():
    K = known_kernel("brownian-motion-indicator", G16)
    spec = bridge_gram(K, StepFunction.constant(1.0, 1.0))
    ens = simulate(K, 100, 12)
    out = bridge_orthogonal(K, spec, ens)
    expected = ens.paths - np.outer(ens.paths[:, -1], G16.nodes)
    np.testing.assert_allclose(out.paths, expected, atol=1e-14)
    assert np.max(np.abs(path_functionals(spec, G16, out.paths))) <= 1e-10


def test_orthogonal_bridge_covariance():
    K = known_kernel("brownian-motion-indicator", G16)
    spec = bridge_gram(K, StepFunction.constant(1.0, 1.0))
    out = bridge_orthogonal(K, spec, simulate(K, 200_000, 13))
    est = empirical_covariance(out, [0.25, 0.75])
    assert abs(est.covariance[0, 1] - 0.0625) <= 3.5 * est.std_error[0, 1]


@settings(max_examples=20, deadline=None)
@given(a=st.integers(1, 15), b=st.integers(1, 16), c=st.floats(-3, 3))
def test_orthogonal_bridge_constraints_hold_per_path(a, b, c):
    K = factorize(fractional_brownian(0.75), G16)
    g = [StepFunction.indicator(G16.nodes[a]), StepFunction((0.0, G16.nodes[a], 1.0), (1.0, c))]
    try:
        spec = bridge_gram(K, g)
    except DependentFunctionalsError:
        return
    out = bridge_orthogonal(K, spec, simulate(K, 200, b))
    assert np.max(np.abs(path_functionals(spec, G16, out.paths))) <= 1e-10


def test_canonical_bridge_bm():
    K = known_kernel("brownian-motion-indicator", G16)
    spec = bridge_gram(K, StepFunction.constant(1.0, 1.0))
    x = bridge_canonical(K, spec, noise_vector(3, 0, 16))
    assert x.shape == (17,) and abs(x[-1]) <= 1e-12 and x[0] == 0.0
    D = canonical_drift_kernel(spec)
    # running Gram at the left end of each cell: exactly 1/(T - u)
    np.testing.assert_allclose(np.diag(D), 1.0 / (1.0 - G16.nodes[:-1]), rtol=1e-12)
    np.testing.assert_allclose(D[-1], 1.0 / (1.0 - G16.nodes[:-1]), rtol=1e-12)
    assert np.all(np.triu(D, 1) == 0)
    nodal = bridge_gram(factorize(brownian_motion(1.0), G16), StepFunction.constant(1.0, 1.0))
    Dn = canonical_drift_kernel(nodal)
    assert np.isnan(Dn[-1, -1]) and np.all(np.isfinite(Dn[:, :-1]))


def test_canonical_and_orthogonal_laws_agree():
    K = known_kernel("brownian-motion-indicator", G16)
    spec = bridge_gram(K, StepFunction.constant(1.0, 1.0))
    orth = empirical_covariance(bridge_orthogonal(K, spec, simulate(K, 100_000, 14)), [0.25, 0.5, 0.75])
    can = empirical_covariance(simulate_bridge_canonical(K, spec, 100_000, 15), [0.25, 0.5, 0.75])
    combined = np.hypot(orth.std_error, can.std_error)
    assert np.all(np.abs(orth.covariance - can.covariance) <= 3.5 * combined)
    t = np.array([0.25, 0.5, 0.75])
    assert _within(can, np.minimum.outer(t, t) - np.outer(t, t))


def test_two_functional_bridges():
    K = factorize(brownian_motion(1.0), G16)
    g = [StepFunction.constant(1.0, 1.0), StepFunction.indicator(0.5)]
    spec = bridge_gram(K, g)
    can = simulate_bridge_canonical(K, spec, 50_000, 16)
    orth = bridge_orthogonal(K, spec, simulate(K, 50_000, 17))
    assert np.max(np.abs(path_functionals(spec, G16, can.paths))) <= 1e-6
    assert np.max(np.abs(path_functionals(spec, G16, orth.paths))) <= 1e-10
    times = [0.25, 0.75]
    C = gram(brownian_motion(), G16)
    idx = [G16.index_of(t) for t in times]
    A = np.zeros((2, 17))
    A[0, -1] = 1.0
    A[1, 8] = 1.0
    exact = gaussian_conditional_cov(C, A)[np.ix_(idx, idx)]
    for est in (empirical_covariance(can, times), empirical_covariance(orth, times)):
        assert _within(est, exact)


def test_canonical_strict_mode():
    K = known_kernel("brownian-motion-indicator", G16)
    spec = bridge_gram(K, [StepFunction.constant(1.0, 1.0), StepFunction.indicator(0.5)])
    xi = noise_matrix(1, 10, 16)
    with pytest.raises(DependentFunctionalsError):
        bridge_canonical(K, spec, xi)
    x = bridge_canonical(K, spec, xi, strict=False)
    assert np.max(np.abs(path_functionals(spec, G16, x))) <= 1e-10
    with pytest.raises(InvalidArgumentError):
        bridge_canonical(K, spec, xi[:, :5], strict=False)


# ------------------------------------------------- volterra and langevin

def test_volterra_identity_and_examples():
    g = make_uniform_grid(1.0, 256)
    K = known_kernel("brownian-motion-indicator", g)
    assert np.array_equal(volterra_perturb_zero(K).matrix, K.matrix)
    Kt = volterra_perturb_exp(K, 1.0)
    assert not unitary_equivalence_check(K, Kt, 1e-3).passed
    # an odd cell count puts u = 0.5 on a cell midpoint
    K255 = known_kernel("brownian-motion-indicator", make_uniform_grid(1.0, 255))
    assert volterra_perturb_exp(K255, 1.0).evaluate(1.0, 0.5) == pytest.approx(math.exp(-0.5), abs=1e-6)
    tab = VolterraKernel.exponential(2.0).tabulate(g.nodes[:4], g.nodes[:4])
    assert np.all(np.triu(tab, 1) == 0) and np.all(np.diag(tab) == 2.0)


def volterra_perturb_zero(K):
    from fredholm.processes import volterra_perturb
    return volterra_perturb(K, VolterraKernel.zero())


def volterra_perturb_exp(K, theta):
    from fredholm.processes import volterra_perturb
    return volterra_perturb(K, VolterraKernel.exponential(theta))


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_langevin_matches_closed_form_and_perturbation(theta):
    g = make_uniform_grid(1.0, 256)
    K = known_kernel("brownian-motion-indicator", g)
    L = langevin_kernel(K, theta)
    V = volterra_perturb_exp(K, theta)
    t, u = g.nodes[:, None], K.noise_points[None, :]
    closed = np.where(u < t, np.exp(-theta * (t - u)), 0.0)
    assert np.max(np.abs(L.matrix - closed)) <= 1e-6
    assert np.max(np.abs(L.matrix - V.matrix)) <= 1e-6
    K255 = known_kernel("brownian-motion-indicator", make_uniform_grid(1.0, 255))
    assert langevin_kernel(K255, theta).evaluate(1.0, 0.5) == pytest.approx(math.exp(-0.5 * theta), abs=1e-6)


def test_langevin_small_theta_and_errors():
    K = known_kernel("brownian-motion-indicator", G64)
    assert np.max(np.abs(langevin_kernel(K, 1e-8).matrix - K.matrix)) <= 1e-6
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(InvalidArgumentError):
            langevin_kernel(K, bad)
    Kgl = factorize(brownian_motion(1.0), make_gauss_legendre_grid(1.0, 8))
    with pytest.raises(InvalidArgumentError):
        langevin_kernel(Kgl, 1.0)


def test_langevin_of_mercer_kernel_gives_ou_covariance():
    g = make_uniform_grid(1.0, 256)
    L = langevin_kernel(factorize(brownian_motion(1.0), g), 1.0)
    C = L.covariance()
    target = gram(ornstein_uhlenbeck(1.0, 1.0, 1.0), g)
    assert np.max(np.abs(C - target)) <= 1e-5


def test_euler_variance_and_small_theta():
    g = make_uniform_grid(1.0, 256)
    K = known_kernel("brownian-motion-indicator", g)
    ens = langevin_simulate_euler(K, 1.0, 100_000, 18)
    est = empirical_covariance(ens, [1.0])
    bias = 1.0 * (1.0 / 256) * ou_variance(1.0)
    assert abs(est.covariance[0, 0] - ou_variance(1.0)) <= 3.5 * est.std_error[0, 0] + bias
    drv = simulate(K, 200, 19).paths
    e = langevin_simulate_euler(K, 1e-8, 200, 19).paths
    assert np.max(np.abs(e - drv)) <= 1e-7
    with pytest.raises(InvalidArgumentError):
        langevin_simulate_euler(brownian_motion(), 1.0, 10, 0)
    e2 = langevin_simulate_euler(brownian_motion(), 1.0, 10, 0, grid=G16)
    assert e2.paths.shape == (10, 17)


def test_langevin_kernel_and_euler_laws_agree():
    g = make_uniform_grid(1.0, 128)
    K = known_kernel("brownian-motion-indicator", g)
    times = [0.25, 0.5, 1.0]
    a = empirical_covariance(simulate(langevin_kernel(K, 1.0), 100_000, 20), times)
    b = empirical_covariance(langevin_simulate_euler(K, 1.0, 100_000, 21), times)
    budget = 3.5 * np.hypot(a.std_error, b.std_error) + 2.0 * (1.0 / 128) * np.abs(a.covariance)
    assert np.all(np.abs(a.covariance - b.covariance) <= budget)
