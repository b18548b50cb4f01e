"""Training engines: chain sampling, sampled TD updates, averaged and scaled
flows, and the fixed-step integrators."""

import numpy as np
import pytest

from lazytd import (
    LinearModel,
    Mrp,
    SpiralModel,
    TrainConfig,
    averaged_rhs,
    cyclic_chain,
    exact_value,
    integrate,
    lazy_rhs,
    make_lazy_rhs,
    run_stochastic_td,
    sample_chain,
    stationary_measure,
    stochastic_td_step,
    td_operator,
)
from lazytd.errors import NonFiniteState

from oracles import linear_td_fixed_point, series_td_components

SPIRAL_RBAR = np.array([-6.85, 8.35, -1.5])


@pytest.fixture
def chain3():
    mrp = Mrp(P=cyclic_chain(3, "backward"), rbar=SPIRAL_RBAR, gamma=0.9)
    return mrp, stationary_measure(mrp)


# ------------------------------------------------------------- chain sampling

def test_sample_chain_symmetric_frequency():
    mrp = Mrp(P=np.array([[0.5, 0.5], [0.5, 0.5]]), rbar=np.zeros(2), gamma=0.5)
    mu = stationary_measure(mrp)
    path = sample_chain(mrp, mu, 10**6, 42)
    freq = np.mean(path == 0)
    assert abs(freq - 0.5) < 0.005


def test_sample_chain_cyclic_uniform(chain3):
    mrp, mu = chain3
    path = sample_chain(mrp, mu, 200_000, 7)
    freqs = np.bincount(path, minlength=3) / path.size
    # 3 standard errors for a multinomial frequency around 1/3
    assert np.abs(freqs - 1 / 3).max() < 3 * np.sqrt((1 / 3) * (2 / 3) / path.size)


def test_sample_chain_deterministic(chain3):
    mrp, mu = chain3
    a = sample_chain(mrp, mu, 1000, 5)
    b = sample_chain(mrp, mu, 1000, 5)
    np.testing.assert_array_equal(a, b)


# --------------------------------------------------------------- sampled step

def test_step_reduces_to_plain_td_at_lam_zero(chain3):
    mrp, mu = chain3
    model = LinearModel(np.eye(3))
    cfg = TrainConfig(lam=0.0, alpha=1.0, beta0=0.1)
    w = np.array([1.0, -2.0, 0.5])
    z = np.array([9.0, 9.0, 9.0])  # must be forgotten entirely at lam = 0
    w2, z2 = stochastic_td_step(model, w, z, 0, 1, 2.0, 0.1, mrp.gamma, cfg)
    np.testing.assert_allclose(z2, model.jacobian(w)[0])
    delta = 2.0 + mrp.gamma * w[1] - w[0]
    np.testing.assert_allclose(w2, w + 0.1 * delta * z2)


def test_expected_update_vanishes_at_fixed_point(chain3):
    mrp, mu = chain3
    model = LinearModel(np.eye(3))
    vstar = exact_value(mrp)
    cfg = TrainConfig(lam=0.0, alpha=1.0, beta0=1.0)
    # expectation over (s, s') ~ mu x P of the lam = 0 update, by direct sum
    total = np.zeros(3)
    for s in range(3):
        for s_next in range(3):
            w2, _ = stochastic_td_step(model, vstar, np.zeros(3),
                                       s, s_next, mrp.rbar[s], 1.0, mrp.gamma, cfg)
            total += mu.mu[s] * mrp.P[s, s_next] * (w2 - vstar)
    np.testing.assert_allclose(total, np.zeros(3), atol=1e-12)


def test_stochastic_linear_approaches_fixed_point(chain3):
    mrp, mu = chain3
    rng = np.random.default_rng(10)
    features = rng.standard_normal((3, 2))
    model = LinearModel(features)
    lam = 0.4
    target = linear_td_fixed_point(features, mu.mu, mrp.P, mrp.rbar, mrp.gamma, lam)
    cfg = TrainConfig(lam=lam, alpha=1.0, mode="stochastic", beta0=2e-3,
                      horizon=100_000, seed=3, save_every=1000)
    run = run_stochastic_td(model, mrp, mu, cfg, np.zeros(2))
    tail = run.params[len(run.params) // 2:]
    gap = np.abs(tail.mean(axis=0) - target).max()
    assert gap < 0.05 * max(1.0, np.abs(target).max())


def test_trace_modes_agree_at_small_step(chain3):
    mrp, mu = chain3
    model = LinearModel(np.eye(3))
    common = dict(lam=0.6, alpha=1.0, mode="stochastic", beta0=1e-4,
                  horizon=2000, seed=11, save_every=2000)
    rec = run_stochastic_td(model, mrp, mu, TrainConfig(**common), np.zeros(3))
    win = run_stochastic_td(model, mrp, mu,
                            TrainConfig(trace_mode="windowed", trace_window=400, **common),
                            np.zeros(3))
    # same chain path; trace variants differ at O(beta) per step
    gap = np.abs(rec.final_params - win.final_params).max()
    assert gap < 5e-4


# -------------------------------------------------------------- averaged flow

def test_averaged_rhs_zero_at_fixed_point(chain3):
    mrp, mu = chain3
    model = LinearModel(np.eye(3))
    for lam in (0.0, 0.5):
        r = averaged_rhs(model, mrp, mu, lam, exact_value(mrp))
        np.testing.assert_allclose(r, np.zeros(3), atol=1e-10)


def test_averaged_rhs_matches_matrix_assembly(chain3):
    mrp, mu = chain3
    rng = np.random.default_rng(12)
    features = rng.standard_normal((3, 2))
    model = LinearModel(features)
    w = rng.standard_normal(2)
    lam = 0.7
    r_lam, P_lam = series_td_components(mrp.P, mrp.rbar, mrp.gamma, lam)
    want = features.T @ (mu.mu * (r_lam + (mrp.gamma * P_lam - np.eye(3)) @ features @ w))
    np.testing.assert_allclose(averaged_rhs(model, mrp, mu, lam, w), want, atol=1e-9)


def test_averaged_rhs_spiral_three_term_sum(chain3):
    mrp, mu = chain3
    model = SpiralModel()
    theta = np.array([0.3])
    lam = 0.0
    V = model.value(theta)
    jac = model.jacobian(theta)[:, 0]
    td = td_operator(mrp, lam, V) - V
    want = sum(mu.mu[s] * td[s] * jac[s] for s in range(3))
    got = averaged_rhs(model, mrp, mu, lam, theta)
    np.testing.assert_allclose(got, [want], atol=1e-12)


# ------------------------------------------------------------------ lazy flow

def test_lazy_rhs_reduces_to_averaged(chain3):
    mrp, mu = chain3
    rng = np.random.default_rng(13)
    model = LinearModel(rng.standard_normal((3, 2)))
    w = rng.standard_normal(2)
    np.testing.assert_array_equal(
        lazy_rhs(model, mrp, mu, 0.3, 1.0, w),
        averaged_rhs(model, mrp, mu, 0.3, w),
    )


def test_lazy_flow_alpha_invariant_in_value_space(chain3):
    mrp, mu = chain3
    rng = np.random.default_rng(14)
    features = rng.standard_normal((3, 2))
    model = LinearModel(features)          # value at w0 = 0 for w0 = 0
    cfg = TrainConfig(dt=1e-3, horizon=5.0, save_every=100)
    w0 = np.zeros(2)
    flows = []
    for alpha in (1.0, 10.0, 100.0):
        rhs = make_lazy_rhs(model, mrp, mu, 0.0, alpha)
        run = integrate(rhs, w0, cfg)
        flows.append(alpha * run.params @ features.T)  # scaled value trajectories
    np.testing.assert_allclose(flows[0], flows[1], atol=1e-9)
    np.testing.assert_allclose(flows[0], flows[2], atol=1e-9)


def test_lazy_rhs_vanishes_at_tangent_fixed_point(chain3):
    mrp, mu = chain3
    rng = np.random.default_rng(15)
    features = rng.standard_normal((3, 2))
    model = LinearModel(features)
    lam, alpha = 0.2, 50.0
    # fixed point of the scaled flow: alpha * features @ w = linear fixed point
    target = linear_td_fixed_point(features, mu.mu, mrp.P, mrp.rbar, mrp.gamma, lam)
    w_fixed = target / alpha
    assert np.linalg.norm(lazy_rhs(model, mrp, mu, lam, alpha, w_fixed)) < 1e-9


def test_lazy_flow_reaches_tangent_fixed_point(chain3):
    mrp, mu = chain3
    rng = np.random.default_rng(16)
    features = rng.standard_normal((3, 2))
    model = LinearModel(features)
    lam, alpha = 0.2, 50.0
    rhs = make_lazy_rhs(model, mrp, mu, lam, alpha)
    run = integrate(rhs, np.zeros(2), TrainConfig(dt=1e-2, horizon=1200.0, save_every=1000))
    assert np.linalg.norm(rhs(run.final_params)) < 1e-8


@pytest.mark.parametrize("bad", [
    dict(lam=1.0), dict(lam=-0.1), dict(alpha=0.5), dict(dt=0.0),
    dict(mode="magic"), dict(integrator="ab3"), dict(beta0=0.0),
    dict(divergence_threshold=0.0), dict(save_every=0), dict(trace_mode="other"),
])
def test_train_config_validation(bad):
    from lazytd.errors import DomainError
    with pytest.raises(DomainError):
        TrainConfig(**bad)


def test_decaying_step_schedule():
    cfg = TrainConfig(beta0=0.5, t0=10.0)
    assert cfg.beta(0.0) == pytest.approx(0.5)
    assert cfg.beta(10.0) == pytest.approx(0.25)
    assert cfg.beta(90.0) == pytest.approx(0.05)


def test_stochastic_run_with_decaying_schedule(chain3):
    mrp, mu = chain3
    model = LinearModel(np.eye(3))
    cfg = TrainConfig(lam=0.0, mode="stochastic", beta0=0.05, t0=5.0,
                      horizon=50_000, seed=2, save_every=5000)
    run = run_stochastic_td(model, mrp, mu, cfg, np.zeros(3))
    assert not run.diverged
    # harmonically decaying steps keep shrinking the gap to the fixed point
    gap = np.abs(run.final_params - exact_value(mrp)).max()
    assert gap < 1.0


# ----------------------------------------------------------------- integrator

def test_integrate_zero_rhs_is_constant():
    cfg = TrainConfig(dt=0.1, horizon=5.0, save_every=10)
    run = integrate(lambda w: np.zeros_like(w), np.array([2.0, -1.0]), cfg)
    assert not run.diverged
    np.testing.assert_array_equal(run.params[-1], [2.0, -1.0])


def test_integrate_exponential_decay_oracle():
    cfg = TrainConfig(dt=1e-3, horizon=1.0, save_every=1000, integrator="rk4")
    run = integrate(lambda w: -w, np.array([1.0]), cfg)
    assert abs(run.final_params[0] - np.exp(-1.0)) < 1e-8


def test_integrate_euler_first_order():
    cfg = TrainConfig(dt=1e-4, horizon=1.0, save_every=10_000, integrator="euler")
    run = integrate(lambda w: -w, np.array([1.0]), cfg)
    assert abs(run.final_params[0] - np.exp(-1.0)) < 1e-4


def test_integrate_step_halving_self_check(chain3):
    mrp, mu = chain3
    model = SpiralModel()
    rhs = make_lazy_rhs(model, mrp, mu, 0.0, 100.0)
    runs = {}
    for dt in (1e-2, 5e-3):
        cfg = TrainConfig(dt=dt, horizon=2.0, save_every=10**6)
        runs[dt] = integrate(rhs, np.zeros(1), cfg).final_params[0]
    assert abs(runs[1e-2] - runs[5e-3]) < 1e-6 * max(1.0, abs(runs[5e-3]))


def test_spiral_unscaled_flow_diverges(chain3):
    mrp, mu = chain3
    model = SpiralModel()
    rhs = make_lazy_rhs(model, mrp, mu, 0.0, 1.0)
    cfg = TrainConfig(dt=1e-2, horizon=2000.0, save_every=100)
    probe = lambda w: np.max(np.abs(model.value(w)))
    run = integrate(rhs, np.zeros(1), cfg, divergence_probe=probe)
    assert run.diverged
    assert run.diverged_at is not None
    # no samples past the divergence time, and all saved states finite
    assert run.times[-1] <= run.diverged_at
    assert np.all(np.isfinite(run.params))


def test_integrate_raises_on_nonfinite_rhs():
    def bad(w):
        return np.array([np.nan])
    cfg = TrainConfig(dt=0.1, horizon=1.0)
    with pytest.raises(NonFiniteState):
        integrate(bad, np.array([0.5]), cfg)


def test_trajectory_csv_round_trip(tmp_path, chain3):
    mrp, mu = chain3
    model = SpiralModel()
    rhs = make_lazy_rhs(model, mrp, mu, 0.0, 100.0)
    cfg = TrainConfig(dt=1e-2, horizon=1.0, save_every=10)
    run = integrate(rhs, np.zeros(1), cfg)
    run.diagnostics["err"] = np.linspace(1.0, 0.0, len(run.times))
    path = tmp_path / "traj.csv"
    run.to_csv(path)
    rows = np.genfromtxt(path, delimiter=",", names=True)
    np.testing.assert_allclose(rows["time"], run.times, atol=0)
    np.testing.assert_allclose(rows["w0"], run.params[:, 0], atol=0)
    np.testing.assert_allclose(rows["err"], run.diagnostics["err"], atol=0)
