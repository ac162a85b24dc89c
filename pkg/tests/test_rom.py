"""Global and tensor-decomposition POD-GPR models and error metrics."""

import numpy as np
import pytest

from podgpr import rom as rom_mod
from podgpr.gpr import GpConfig, TrainingFailureError, count_kernel_evaluations
from podgpr.pod import ReducedBasis, build_basis, project
from podgpr.rom import (
    RomTrainingError,
    error_metrics,
    global_design,
    load_rom,
    predict_global,
    predict_td,
    save_rom,
    thin_steps,
    train_global_rom,
    train_td_rom,
)

N_H = 30
TIMES = np.linspace(0.1, 1.0, 10)
CFG = GpConfig(n_starts=2)


def orthonormal(n, k, seed=0):
    return np.linalg.qr(np.random.default_rng(seed).standard_normal((n, k)))[0]


def separable(t, mu):
    """Two rank-one coefficient fields."""
    t = np.asarray(t)[:, None]
    q1 = np.sin(1.5 * t) * (1.0 + mu[:, 0] ** 2)[None, :]
    q2 = 0.3 * t**2 * np.cos(mu[:, 1])[None, :]
    return np.stack([q1, q2])  # (2, N_t, N_s)


def dataset(params, W, fn=separable, times=TIMES):
    q = fn(times, params)
    snaps = [W @ q[:, :, m] for m in range(len(params))]
    return snaps, q


@pytest.fixture(scope="module")
def synth():
    rng = np.random.default_rng(11)
    W = orthonormal(N_H, 2)
    params = rng.uniform(0, 1, (12, 2))
    snaps, q = dataset(params, W)
    basis = ReducedBasis(W, np.array([1.0, 0.5]))
    coeffs = project(basis, np.hstack(snaps), n_steps=len(TIMES))
    g = train_global_rom(basis, coeffs, TIMES, params, CFG, seed=0)
    td = train_td_rom(basis, coeffs, TIMES, params, eps_svd=1e-3, gp_config=CFG, seed=0)
    return dict(W=W, params=params, snaps=snaps, q=q, basis=basis, coeffs=coeffs, g=g, td=td)


def test_global_design_layout():
    X = global_design([0.1, 0.2, 0.3], np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert X.shape == (6, 3) and X.size == 3 * 3 * 2
    np.testing.assert_array_equal(X[:, 0], [0.1, 0.2, 0.3, 0.1, 0.2, 0.3])
    np.testing.assert_array_equal(X[:3, 1:], [[1, 2]] * 3)
    np.testing.assert_array_equal(thin_steps(50, 5), np.arange(4, 50, 5))


def test_constant_coefficient():
    params = np.random.default_rng(0).uniform(0, 1, (5, 2))
    basis = ReducedBasis(orthonormal(N_H, 1), np.array([1.0]))
    coeffs = project(basis, np.hstack([basis.V * 2.5 * np.ones((1, 10)) for _ in params]), n_steps=10)
    g = train_global_rom(basis, coeffs, TIMES, params, CFG)
    m, _ = predict_global(g, [0.05, 0.5, 3.0], [10.0, -4.0]).mean, None
    np.testing.assert_allclose(m, 2.5, atol=1e-6)


def _scaled_err(rom, synth):
    err = 0.0
    for m, mu in enumerate(synth["params"]):
        pred = rom.predict(TIMES, mu).mean
        err = max(err, np.max(np.abs(pred - synth["q"][:, :, m]) / synth["q"].std(axis=(1, 2))[:, None]))
    return err


def test_global_reproduces_training_grid(synth):
    assert _scaled_err(synth["g"], synth) < 1e-4


def test_td_rank_one_and_reproduction(synth):
    assert synth["td"].ranks == [1, 1]
    assert synth["td"].n_gps == 4
    assert _scaled_err(synth["td"], synth) < 1e-4


def test_td_and_global_agree_on_training_nodes(synth):
    for mu in synth["params"][:4]:
        a = synth["g"].predict(TIMES, mu).mean
        b = synth["td"].predict(TIMES, mu).mean
        assert np.max(np.abs(a - b) / synth["q"].std(axis=(1, 2))[:, None]) < 1e-4


def test_td_rank_one_is_product_of_modes(synth):
    td = synth["td"]
    mu = np.array([0.4, 0.6])
    c = td.coefficients[0]
    psi = c.time_gps[0].predict(np.array([[0.55]]))[0][0]
    phi = c.param_gps[0].predict(mu[None])[0][0]
    assert predict_td(td, [0.55], mu).mean[0, 0] == pytest.approx(c.singular_values[0] * psi * phi, rel=1e-12)


def test_td_singular_values_non_increasing():
    rng = np.random.default_rng(3)
    params = rng.uniform(0, 1, (10, 2))

    def rough(t, mu):
        t = np.asarray(t)[:, None]
        return np.sin(3 * t * (1 + mu[:, 0])[None, :] + mu[:, 1][None, :])[None]

    W = orthonormal(N_H, 1, 2)
    snaps, _ = dataset(params, W, rough)
    basis = ReducedBasis(W, np.array([1.0]))
    td = train_td_rom(basis, project(basis, np.hstack(snaps), 10), TIMES, params, 1e-3, CFG)
    lam = td.coefficients[0].singular_values
    assert td.ranks[0] >= 2 and np.all(np.diff(lam) <= 0)
    assert td.n_gps == 2 * sum(td.ranks)


def test_far_query_reverts_to_prior(synth):
    p = predict_global(synth["g"], [50.0], [80.0, -90.0])
    assert p.extrapolated
    for ell, gp in enumerate(synth["g"].gps):
        prior = gp.kernel.sigma_f**2 * float(gp.y_scaler.scale) ** 2
        assert p.variance[ell, 0] >= 0.5 * prior


def test_band_coverage_on_unseen_times(synth):
    t_new = 0.5 * (TIMES[1:] + TIMES[:-1])
    inside = total = 0
    for m in (0, 3, 7):
        mu = synth["params"][m]
        p = predict_global(synth["g"], t_new, mu)
        truth = separable(t_new, mu[None])[:, :, 0]
        lo, hi = p.band()
        assert np.all(np.isfinite(p.mean))
        inside += np.sum((truth >= lo) & (truth <= hi) | np.isclose(truth, p.mean, atol=1e-6, rtol=0))
        total += truth.size
    assert inside / total >= 0.9


def test_batched_prediction_matches_single(synth):
    mus = synth["params"][:3] + 0.01
    for rom in (synth["g"], synth["td"]):
        batch = rom.predict(TIMES, mus)
        assert batch.mean.shape == (3, 2, len(TIMES))
        for i, mu in enumerate(mus):
            one = rom.predict(TIMES, mu)
            np.testing.assert_allclose(batch.mean[i], one.mean, rtol=1e-6, atol=1e-12)
            np.testing.assert_allclose(batch.variance[i], one.variance, rtol=1e-6, atol=1e-12)


def test_td_variance_formula(synth):
    td = synth["td"]
    mu = np.array([0.2, 0.9])
    v = predict_td(td, [0.35], mu).variance[1, 0]
    c = td.coefficients[1]
    psi, vpsi = c.time_gps[0].predict(np.array([[0.35]]))
    phi, vphi = c.param_gps[0].predict(mu[None])
    expected = c.singular_values[0] ** 2 * (psi[0] ** 2 * vphi[0] + phi[0] ** 2 * vpsi[0])
    assert v == pytest.approx(expected, rel=1e-12)


def test_kernel_evaluation_counts(synth):
    g, td = synth["g"], synth["td"]
    n_t, n_s = len(TIMES), len(synth["params"])
    mu = synth["params"][0]
    with count_kernel_evaluations() as c:
        predict_global(g, [0.5], mu)
    assert c.count == g.kernel_evaluations_per_query() == g.N * n_t * n_s
    with count_kernel_evaluations() as c:
        predict_td(td, [0.5], mu)
    assert c.count == td.kernel_evaluations_per_query() == sum(td.ranks) * (n_t + n_s)


def test_sample_order_invariance(synth):
    perm = np.random.default_rng(0).permutation(len(synth["params"]))
    snaps = [synth["snaps"][i] for i in perm]
    coeffs = project(synth["basis"], np.hstack(snaps), n_steps=len(TIMES))
    g2 = train_global_rom(synth["basis"], coeffs, TIMES, synth["params"][perm], CFG, seed=0)
    td2 = train_td_rom(synth["basis"], coeffs, TIMES, synth["params"][perm], 1e-3, CFG, seed=0)
    mu = np.array([0.33, 0.44])
    for one, two in ((synth["g"], g2), (synth["td"], td2)):
        np.testing.assert_allclose(one.predict(TIMES, mu).mean, two.predict(TIMES, mu).mean, rtol=0, atol=1e-8)


def test_time_stride_thinning(synth):
    g = train_global_rom(synth["basis"], synth["coeffs"], TIMES, synth["params"], CFG, time_stride=5)
    assert g.gps[0].n_train == 2 * len(synth["params"])
    assert g.time_box == (TIMES[4], TIMES[9])


def test_save_load_round_trip(tmp_path, synth):
    mu = np.array([0.5, 0.5])
    for name in ("g", "td"):
        rom = synth[name]
        save_rom(rom, tmp_path / name)
        again = load_rom(tmp_path / name)
        a, b = rom.predict(TIMES, mu), again.predict(TIMES, mu)
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.variance, b.variance)


def test_training_failure_annotated(monkeypatch, synth):
    def boom(*a, **k):
        raise TrainingFailureError("nope")

    monkeypatch.setattr(rom_mod, "train_gp", boom)
    with pytest.raises(RomTrainingError) as info:
        train_global_rom(synth["basis"], synth["coeffs"], TIMES, synth["params"], CFG)
    assert info.value.coefficient == 0
    with pytest.raises(RomTrainingError) as info:
        train_td_rom(synth["basis"], synth["coeffs"], TIMES, synth["params"], gp_config=CFG)
    assert (info.value.coefficient, info.value.mode, info.value.factor) == (0, 0, "time")


def test_layout_mismatch_rejected(synth):
    with pytest.raises(ValueError):
        train_global_rom(synth["basis"], synth["coeffs"], TIMES[:-1], synth["params"], CFG)


# ---------------------------------------------------------------- metrics


def reference_metrics(U, Q, V):
    """Loop-based restatement of the error definitions."""
    M, N, Nt = len(U), V.shape[1], U[0].shape[1]
    qt = [V.T @ u for u in U]
    mse, rse = [], []
    for ell in range(N):
        num = sum((qt[m][ell, n] - Q[m][ell, n]) ** 2 for m in range(M) for n in range(Nt))
        mean = sum(qt[m][ell, n] for m in range(M) for n in range(Nt)) / (M * Nt)
        den = sum((qt[m][ell, n] - mean) ** 2 for m in range(M) for n in range(Nt))
        mse.append(num / (M * Nt))
        rse.append(num / den)
    tae, tre = [], []
    for m in range(M):
        a = [np.sqrt(np.sum((U[m][:, n] - V @ Q[m][:, n]) ** 2)) for n in range(Nt)]
        r = [a[n] / np.sqrt(np.sum(U[m][:, n] ** 2)) for n in range(Nt)]
        tae.append(sum(a) / Nt)
        tre.append(sum(r) / Nt)
    return np.array(mse), np.array(rse), np.array(tae), np.array(tre)


def test_metrics_match_reference():
    rng = np.random.default_rng(5)
    V = orthonormal(12, 3, 1)
    U = [rng.standard_normal((12, 6)) for _ in range(4)]
    Q = [rng.standard_normal((3, 6)) for _ in range(4)]
    got = error_metrics(U, Q, ReducedBasis(V, np.ones(3)))
    for key, ref in zip(("mse", "rse", "tae", "tre"), reference_metrics(U, Q, V)):
        np.testing.assert_allclose(got[key], ref, rtol=1e-10)
    assert got["mean_tre"] == pytest.approx(np.mean(reference_metrics(U, Q, V)[3]), rel=1e-10)


def test_metrics_trivial_cases():
    rng = np.random.default_rng(6)
    V = orthonormal(12, 2, 3)
    basis = ReducedBasis(V, np.ones(2))
    U = [V @ rng.standard_normal((2, 5)) for _ in range(3)]
    perfect = error_metrics(U, [V.T @ u for u in U], basis)
    assert np.all(perfect["mse"] == 0) or np.allclose(perfect["mse"], 0, atol=1e-30)
    np.testing.assert_allclose(perfect["tae"], 0, atol=1e-14)
    qt = np.stack([V.T @ u for u in U])
    const = [np.broadcast_to(qt.mean(axis=(0, 2))[:, None], (2, 5)) for _ in U]
    np.testing.assert_allclose(error_metrics(U, const, basis)["rse"], 1.0)


def test_metrics_degenerate_flags():
    V = orthonormal(6, 1)
    basis = ReducedBasis(V, np.ones(1))
    U = [np.zeros((6, 3)), V @ np.ones((1, 3))]
    out = error_metrics(U, [np.zeros((1, 3)), np.zeros((1, 3))], basis)
    assert list(out["degenerate_tre"]) == [True, False]
    assert out["mean_tre"] == pytest.approx(1.0)
    flat = error_metrics([np.zeros((6, 3))], [np.zeros((1, 3))], basis)
    assert flat["degenerate_rse"][0] and np.isnan(flat["rse"][0])


def test_projection_floor(synth):
    rng = np.random.default_rng(8)
    params = rng.uniform(0, 1, (4, 2))
    # truth with a component outside the basis
    snaps, _ = dataset(params, synth["W"])
    extra = orthonormal(N_H, 3, 9)[:, 2:] - synth["W"] @ (synth["W"].T @ orthonormal(N_H, 3, 9)[:, 2:])
    snaps = [s + 0.01 * extra @ np.ones((1, len(TIMES))) for s in snaps]
    basis = synth["basis"]
    proj = error_metrics(snaps, [basis.V.T @ s for s in snaps], basis)
    for rom in (synth["g"], synth["td"]):
        pred = [rom.predict(TIMES, mu).mean for mu in params]
        assert error_metrics(snaps, pred, basis)["mean_tae"] >= proj["mean_tae"] - 1e-8
