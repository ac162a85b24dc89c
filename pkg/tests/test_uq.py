"""Morris screening and Sobol indices."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from podgpr.sampling import ParameterSpace
from podgpr.uq import (
    DegenerateOutputError,
    DesignError,
    evaluate,
    minmax_scale,
    morris_design,
    morris_indices,
    saltelli_design,
    sobol_indices,
    time_integrated_sobol,
)


def unit(p):
    return ParameterSpace(tuple(f"x{i}" for i in range(p)), np.zeros(p), np.ones(p))


def box(lo, hi):
    return ParameterSpace(tuple(f"x{i}" for i in range(len(lo))), np.array(lo, float), np.array(hi, float))


# ---------------------------------------------------------------- Morris


def test_delta_and_run_count():
    d = morris_design(unit(4), r=7, levels=6, seed=0)
    assert d.delta == pytest.approx(0.6)
    assert d.unit_points.shape == (7, 5, 4)
    assert d.n_runs == 7 * 5 == len(d.flat_points())


@pytest.mark.parametrize("levels", [3, 0, 1])
def test_bad_levels(levels):
    with pytest.raises(DesignError):
        morris_design(unit(2), 3, levels=levels)


@given(st.integers(1, 6), st.integers(1, 8), st.sampled_from([2, 4, 6, 8]), st.integers(0, 10_000))
def test_one_at_a_time_on_grid(p, r, levels, seed):
    d = morris_design(unit(p), r, levels, seed)
    grid = d.unit_points * (levels - 1)
    np.testing.assert_allclose(grid, np.round(grid), atol=1e-9)
    assert np.all((d.unit_points >= 0) & (d.unit_points <= 1))
    steps = np.diff(d.unit_points, axis=1)
    moved = np.abs(steps) > 1e-12
    assert np.all(moved.sum(axis=2) == 1)
    np.testing.assert_allclose(np.abs(steps[moved]), d.delta, atol=1e-12)
    # every input moves exactly once per trajectory
    assert np.all(np.sort(d.changed, axis=1) == np.arange(p))


def test_physical_mapping():
    space = box([1.0, 10.0], [3.0, 20.0])
    d = morris_design(space, 3, seed=1)
    np.testing.assert_allclose(d.points, space.from_unit(d.unit_points))


@given(st.integers(0, 10_000))
def test_linear_model_exact(seed):
    a = np.array([1.5, -2.0, 0.25, 4.0])
    d = morris_design(unit(4), 6, seed=seed)
    res = morris_indices(d, evaluate(lambda x: a @ x, d.flat_points()))
    np.testing.assert_allclose(res.mu, a, atol=1e-12)
    np.testing.assert_allclose(res.mu_star, np.abs(a), atol=1e-12)
    np.testing.assert_allclose(res.sd, 0.0, atol=1e-12)


def test_additive_nonlinear_sd_zero_only_for_linear_parts():
    d = morris_design(unit(3), 10, seed=2)
    res = morris_indices(d, evaluate(lambda x: 2 * x[0] + x[1] ** 2 + 0.0 * x[2], d.flat_points()))
    assert res.sd[0] < 1e-12 and res.sd[2] == 0
    assert np.all(res.mu_star >= np.abs(res.mu)) and np.all(res.sd >= 0)


def test_product_model_brute_force():
    d = morris_design(unit(2), 8, seed=3)
    pts = d.flat_points().reshape(8, 3, 2)
    y = pts[..., 0] * pts[..., 1]
    res = morris_indices(d, y.ravel())
    ee1 = []
    for t in range(8):
        for j in range(2):
            diff = pts[t, j + 1] - pts[t, j]
            i = int(np.argmax(np.abs(diff)))
            if i == 0:
                ee1.append((y[t, j + 1] - y[t, j]) / diff[0])
    ee1 = np.array(ee1)
    assert res.sd[0] > 0
    assert res.mu[0] == pytest.approx(ee1.mean())
    assert res.sd[0] == pytest.approx(ee1.std(ddof=1))


def test_constant_model_and_r_one():
    d = morris_design(unit(3), 4, seed=0)
    res = morris_indices(d, np.full(d.n_runs, 5.0))
    assert np.all(res.mu == 0) and np.all(res.mu_star == 0) and np.all(res.sd == 0)
    one = morris_indices(morris_design(unit(3), 1, seed=0), np.arange(4.0))
    assert not one.sd_defined and np.all(np.isnan(one.sd))


def test_physical_units_scale():
    space = box([0.0, 0.0], [10.0, 1.0])
    d = morris_design(space, 5, seed=4)
    y = evaluate(lambda x: 3 * x[0] + x[1], d.flat_points())
    np.testing.assert_allclose(morris_indices(d, y, "physical").mu, [3, 1], atol=1e-12)
    np.testing.assert_allclose(morris_indices(d, y, "unit").mu, [30, 1], atol=1e-10)


def test_multiple_outputs_independent():
    d = morris_design(unit(3), 5, seed=5)
    Y = evaluate(lambda x: [x[0], x[1] * x[2]], d.flat_points())
    both = morris_indices(d, Y)
    for q in range(2):
        single = morris_indices(d, Y[:, q])
        np.testing.assert_allclose(both.mu_star[:, q], single.mu_star)


def test_minmax_scale():
    np.testing.assert_allclose(minmax_scale([2.0, 4.0, 3.0]), [0, 1, 0.5])
    np.testing.assert_allclose(minmax_scale([[1.0], [1.0]]), 0)


# ---------------------------------------------------------------- Sobol


def ishigami(x, a=7.0, b=0.1):
    return np.sin(x[..., 0]) + a * np.sin(x[..., 1]) ** 2 + b * x[..., 2] ** 4 * np.sin(x[..., 0])


def ishigami_oracle(a=7.0, b=0.1):
    V = a**2 / 8 + b * np.pi**4 / 5 + b**2 * np.pi**8 / 18 + 0.5
    V1 = 0.5 * (1 + b * np.pi**4 / 5) ** 2
    V2 = a**2 / 8
    VT3 = 8 * b**2 * np.pi**8 / 225
    return np.array([V1, V2, 0.0]) / V, VT3 / V


def test_ishigami_oracle_values():
    S, ST3 = ishigami_oracle()
    np.testing.assert_allclose(S, [0.3139, 0.4424, 0.0], atol=1e-4)
    assert ST3 == pytest.approx(0.2437, abs=1e-4)


def test_design_shape_and_structure():
    d = saltelli_design(unit(3), 200, seed=0)
    assert d.n_runs == 1000 == len(d.all_points())
    for i in range(3):
        diff = d.AB[i] != d.A
        assert not diff[:, [j for j in range(3) if j != i]].any()
        np.testing.assert_array_equal(d.AB[i][:, i], d.B[:, i])
    again = saltelli_design(unit(3), 200, seed=0)
    np.testing.assert_array_equal(again.all_points(), d.all_points())
    with pytest.raises(ValueError):
        saltelli_design(unit(3), 1)


def test_additive_example():
    d = saltelli_design(unit(2), 2**14, seed=1)
    x = d.all_points()
    res = sobol_indices(d, x[:, 0] + 2 * x[:, 1])
    np.testing.assert_allclose(res.first, [0.2, 0.8], atol=0.03)
    np.testing.assert_allclose(res.total, [0.2, 0.8], atol=0.03)
    assert np.all(np.abs(res.total - res.first) <= 3 * (res.first_se + res.total_se))
    assert res.variance == pytest.approx(5 / 12, rel=0.03)


def test_ishigami_example():
    d = saltelli_design(box([-np.pi] * 3, [np.pi] * 3), 2**14, seed=2)
    res = sobol_indices(d, ishigami(d.all_points()))
    S, ST3 = ishigami_oracle()
    np.testing.assert_allclose(res.first, S, atol=0.05)
    assert res.total[2] == pytest.approx(ST3, abs=0.05)


def test_constant_output_degenerate():
    d = saltelli_design(unit(2), 64, seed=0)
    with pytest.raises(DegenerateOutputError):
        sobol_indices(d, np.ones(d.n_runs))
    res = sobol_indices(d, np.ones(d.n_runs), allow_degenerate=True)
    assert np.all(np.isnan(res.first))


def test_label_permutation_equivariance():
    d = saltelli_design(unit(3), 512, seed=3)
    f = lambda x: x[:, 0] + 3 * x[:, 1] ** 2 + x[:, 0] * x[:, 2]  # noqa: E731
    res = sobol_indices(d, f(d.all_points()))
    perm = np.array([2, 0, 1])
    inv = np.argsort(perm)
    pd = type(d)(d.A[:, perm], d.B[:, perm], d.AB[perm][:, :, perm], d.seed)
    res_p = sobol_indices(pd, f(pd.all_points()[:, inv]))
    np.testing.assert_allclose(res_p.first, res.first[perm], rtol=1e-12)
    np.testing.assert_allclose(res_p.total, res.total[perm], rtol=1e-12)


def test_morris_permutation_equivariance():
    d = morris_design(unit(3), 6, seed=4)
    f = lambda x: x[0] + 3 * x[1] ** 2 + x[0] * x[2]  # noqa: E731
    res = morris_indices(d, evaluate(f, d.flat_points()))
    perm = np.array([1, 2, 0])
    inv = np.argsort(perm)
    pd = type(d)(d.unit_points[..., perm], d.points[..., perm], inv[d.changed], d.levels, d.delta, d.seed,
                 d.lower[perm], d.upper[perm])
    res_p = morris_indices(pd, evaluate(lambda z: f(z[inv]), pd.flat_points()))
    np.testing.assert_allclose(res_p.mu_star, res.mu_star[perm], rtol=1e-12)


def test_multi_column_outputs():
    d = saltelli_design(unit(2), 256, seed=4)
    x = d.all_points()
    Y = np.column_stack([x[:, 0], x[:, 0] + x[:, 1]])
    res = sobol_indices(d, Y)
    assert res.first.shape == (2, 2)
    np.testing.assert_allclose(res.first[:, 0], sobol_indices(d, Y[:, 0]).first)


# ---------------------------------------------------------------- time integration


class _Per:
    def __init__(self, Vi, VT, V):
        self.first_numerator, self.total_numerator, self.variance = Vi, VT, V


def test_time_integrated_constant_indices():
    t = np.linspace(0.1, 1.0, 10)
    V = 1.0 + t**2
    per = _Per(np.outer([0.3, 0.6], V), np.outer([0.35, 0.7], V), V)
    first, total = time_integrated_sobol(t, per)
    np.testing.assert_allclose(first, np.array([[0.3], [0.6]]) * np.ones(10))
    np.testing.assert_allclose(total, np.array([[0.35], [0.7]]) * np.ones(10))


def test_time_integrated_two_step_hand_case():
    t = np.array([0.0, 1.0])
    per = _Per(np.array([[0.0, 0.4]]), np.array([[0.0, 0.5]]), np.array([0.0, 1.0]))
    first, total = time_integrated_sobol(t, per)
    assert np.isnan(first[0, 0]) and np.isnan(total[0, 0])
    assert first[0, 1] == pytest.approx(0.4) and total[0, 1] == pytest.approx(0.5)


def test_time_integrated_single_step_plain():
    per = _Per(np.array([[0.2], [0.1]]), np.array([[0.3], [0.2]]), np.array([2.0]))
    first, total = time_integrated_sobol(np.array([0.5]), per)
    np.testing.assert_allclose(first[:, 0], [0.1, 0.05])
    np.testing.assert_allclose(total[:, 0], [0.15, 0.1])


def test_time_integrated_from_real_result():
    d = saltelli_design(unit(2), 256, seed=5)
    x = d.all_points()
    t = np.linspace(0.1, 1.0, 4)
    Y = np.stack([x[:, 0] * s + x[:, 1] for s in t], axis=1)
    res = sobol_indices(d, Y)
    first, _ = time_integrated_sobol(t, res)
    np.testing.assert_allclose(first[:, 0], res.first[:, 0])
    assert first.shape == (2, 4)
