"""Experiment protocols: the 3-state spiral dichotomy, wide and narrow ReLU
networks on cyclic chains, scaling and discount sweeps, and the particle
run, each emitting flat files (config.json, trajectory.csv, report.json)
for external plotting.

Defaults reproduce the reference qualitative outcomes with the smallest
horizons that make them unambiguous; integration steps and horizons for the
network runs are derived from the spectrum of the dynamics linearized at
initialization rather than hard-coded.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .analysis import (
    LazyGeometry,
    fit_exponential_rate,
    metric_drift,
    overparametrized_certificate,
    projected_td_error,
    underparametrized_certificate,
)
from .dynamics import TrainConfig, Trajectory, integrate, make_lazy_rhs, run_stochastic_td
from .errors import DomainError, RankCollapse
from .meanfield import (
    GaussianBumpFeatures,
    doubled_ensemble,
    fixed_point_optimality,
    g_profile,
    h1_profile,
    integrate_ensemble,
    linearized_gap_bound,
    separation_check,
)
from .models import ReluNet, SpiralModel, rank_profile
from .mrp import (
    Mrp,
    StationaryMeasure,
    cyclic_chain,
    exact_value,
    mu_norm,
    stationary_measure,
    td_resolvent,
)

SPIRAL_RBAR = np.array([-6.85, 8.35, -1.5])
SPIRAL_GAMMA = 0.9
SPIRAL_BETA = 2e-3

# network-run defaults; the full-rank seed was selected by scanning for a
# width-100 net whose kinks cover all 30 grid points (most seeds fall short)
OVER_DEFAULTS = dict(n_units=100, n_states=30, alpha=500.0, seed=1454)
UNDER_DEFAULTS = dict(n_units=10, n_states=50, alpha=100.0, seed=5)
NN_BETA = 1e-3

EXPERIMENTS = ("spiral", "nn-over", "nn-under", "meanfield", "alpha-sweep", "gamma-sweep")


def spiral_mrp() -> Mrp:
    """The 3-state cyclic chain of the divergence experiment.

    The backward shift orientation is the one consistent with the reference
    reward vector (and the one under which the unscaled run diverges).
    """
    return Mrp(P=cyclic_chain(3, "backward"), rbar=SPIRAL_RBAR.copy(), gamma=SPIRAL_GAMMA)


@dataclass
class ExperimentConfig:
    """Serializable description of one experiment invocation."""

    experiment: str
    seed: int | None = None
    out_dir: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls(**json.loads(text))


@dataclass
class RunReport:
    """Summary of one run; every series-derived number is recomputable from
    the emitted trajectory CSV."""

    experiment: str
    config: dict
    diverged: bool
    final_projected_error: float | None = None
    final_value_error: float | None = None
    fitted_rate: float | None = None
    r_squared: float | None = None
    displacement: float | None = None
    certificate: dict | None = None
    extra: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    manifest: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _emit(out_dir, config: dict, run: Trajectory | None, report: RunReport,
          include_params: bool = False, extra_files: dict | None = None) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    (out / "config.json").write_text(json.dumps(_jsonable(config), indent=2, sort_keys=True))
    manifest.append("config.json")
    if run is not None:
        run.to_csv(out / "trajectory.csv", include_params=include_params)
        manifest.append("trajectory.csv")
    for name, text in (extra_files or {}).items():
        (out / name).write_text(text)
        manifest.append(name)
    report.manifest = sorted(manifest + ["report.json"])
    (out / "report.json").write_text(report.to_json())
    return report.manifest


def _attach_run_diagnostics(run: Trajectory, model, mrp: Mrp, mu: StationaryMeasure,
                            lam: float, alpha: float, vstar: np.ndarray) -> None:
    """Per-saved-time series every report quotes: projected residual, value
    error, and parameter displacement."""
    pe = np.empty(len(run.times))
    ve = np.empty(len(run.times))
    for i, w in enumerate(run.params):
        V = alpha * model.value(w)
        pe[i] = projected_td_error(model, mrp, mu, lam, alpha, w)
        ve[i] = mu_norm(V - vstar, mu)
    run.diagnostics["projected_error"] = pe
    run.diagnostics["value_error"] = ve
    run.diagnostics["displacement"] = np.linalg.norm(run.params - run.params[0], axis=1)


def run_spiral(
    alpha: float,
    out_dir: str | Path | None = None,
    mode: str = "ode",
    integrator: str = "rk4",
    dt: float = 1e-2,
    horizon: float | None = None,
    beta: float = SPIRAL_BETA,
    seed: int = 0,
    stop_tol: float = 1e-8,
    save_every: int = 100,
) -> RunReport:
    """Spiral manifold on the 3-state chain: diverges unscaled, converges lazily.

    The averaged (ode) engine is the default; the sampled engine with the
    reference constant step size is available for visual comparison.
    ``horizon`` is flow time for the ode engine (default 2000, i.e. 2e5
    steps of 1e-2) and a step count for the sampled engine (default 2e5).
    The deterministic run stops early once the projected residual falls
    below ``stop_tol``; divergence is a recorded outcome, not an error.
    """
    if horizon is None:
        horizon = 2000.0 if mode == "ode" else 200_000
    t_start = time.perf_counter()
    mrp = spiral_mrp()
    mu = stationary_measure(mrp)
    model = SpiralModel()
    vstar = exact_value(mrp)
    lam = 0.0
    w0 = np.zeros(1)
    config = dict(experiment="spiral", alpha=alpha, mode=mode, integrator=integrator,
                  dt=dt, horizon=horizon, beta=beta, seed=seed, stop_tol=stop_tol,
                  save_every=save_every, gamma=mrp.gamma, lam=lam)

    if mode == "ode":
        cfg = TrainConfig(lam=lam, alpha=alpha, mode="lazy-ode", dt=dt, horizon=horizon,
                          integrator=integrator, save_every=save_every, seed=seed)
        rhs = make_lazy_rhs(model, mrp, mu, lam, alpha)
        probe = lambda w: alpha * np.max(np.abs(model.value(w)))
        stop = lambda w, t: projected_td_error(model, mrp, mu, lam, alpha, w) < stop_tol
        run = integrate(rhs, w0, cfg, divergence_probe=probe, stop_when=stop)
    elif mode == "stochastic":
        cfg = TrainConfig(lam=lam, alpha=alpha, mode="stochastic", beta0=beta,
                          horizon=horizon, save_every=save_every, seed=seed)
        run = run_stochastic_td(model, mrp, mu, cfg, w0)
    else:
        raise DomainError(f"unknown mode {mode!r}")

    _attach_run_diagnostics(run, model, mrp, mu, lam, alpha, vstar)
    pe = run.diagnostics["projected_error"]
    rate, r2 = fit_exponential_rate(run.times, pe)
    report = RunReport(
        experiment="spiral",
        config=config,
        diverged=run.diverged,
        final_projected_error=float(pe[-1]),
        final_value_error=float(run.diagnostics["value_error"][-1]),
        fitted_rate=rate,
        r_squared=r2,
        displacement=float(run.diagnostics["displacement"].max()),
        extra={"diverged_at": run.diverged_at, "theta_final": float(run.final_params[0])},
    )
    report.wall_clock = time.perf_counter() - t_start
    if out_dir is not None:
        _emit(out_dir, config, run, report, include_params=True)
    return report


def _nn_setup(gamma: float, seed: int, n_units: int, n_states: int):
    """Shared network-run construction: cyclic chain, target values drawn
    i.i.d. standard normal on the grid, reward derived from them, paired
    network initialization. The net is drawn first, then the target, both
    from one seeded stream."""
    P = cyclic_chain(n_states, "backward")
    rng = np.random.default_rng(seed)
    model = ReluNet(n_units, np.linspace(-1, 1, n_states))
    w0 = model.init_doubled(rng)
    vstar = rng.standard_normal(n_states)
    rbar = (np.eye(n_states) - gamma * P) @ vstar
    mrp = Mrp(P=P, rbar=rbar, gamma=gamma)
    mu = stationary_measure(mrp)
    return mrp, mu, model, w0, vstar


def linearized_rates(model, w0, mrp: Mrp, mu: StationaryMeasure, lam: float) -> tuple[float, float]:
    """(fastest, slowest-nonzero) decay rates of the flow linearized at w0.

    Real parts of the eigenvalues of J^T Gamma (gamma P_lam - I) J; the
    scaling drops out, so one spectrum serves every alpha.
    """
    J = model.jacobian(w0)
    _, P_lam = td_resolvent(mrp, lam)
    A = J.T @ (mu.mu[:, None] * (mrp.gamma * P_lam - np.eye(mrp.d))) @ J
    re = np.linalg.eigvals(A).real
    fast = float(-re.min())
    nonzero = -re[re < -1e-12 * max(fast, 1.0)]
    slow = float(nonzero.min()) if nonzero.size else fast
    return fast, slow


def run_nn(
    regime: str,
    gamma: float = 0.9,
    seed: int | None = None,
    alpha: float | None = None,
    n_units: int | None = None,
    n_states: int | None = None,
    lam: float = 0.0,
    mode: str = "ode",
    dt: float | None = None,
    horizon: float | None = None,
    beta: float = NN_BETA,
    time_factor: float = 2.5,
    stability_factor: float = 1.5,
    stop_tol: float = 1e-7,
    out_dir: str | Path | None = None,
) -> RunReport:
    """Train a paired-initialization ReLU net on a cyclic chain, lazily scaled.

    regime "over": wide net, full-rank Jacobian, exponential-decay
    certificate. regime "under": narrow net, rank-deficient Jacobian,
    local-fixed-point certificate; this run stops early once the projected
    residual falls below ``stop_tol``. Step and horizon default to
    ``stability_factor`` over the fastest linearized rate and
    ``time_factor`` over the slowest, so runs resolve their own dynamics.
    Certificates are computed on the averaged ("ode") engine; mode
    "stochastic" runs the sampled algorithm at the reference constant step
    size instead (horizon then counts steps, default 1e5) and reports the
    same series without certificates.
    """
    if regime not in ("over", "under"):
        raise DomainError(f"regime must be 'over' or 'under', got {regime!r}")
    if mode not in ("ode", "stochastic"):
        raise DomainError(f"mode must be 'ode' or 'stochastic', got {mode!r}")
    defaults = OVER_DEFAULTS if regime == "over" else UNDER_DEFAULTS
    n_units = defaults["n_units"] if n_units is None else n_units
    n_states = defaults["n_states"] if n_states is None else n_states
    alpha = defaults["alpha"] if alpha is None else alpha
    seed = defaults["seed"] if seed is None else seed

    t_start = time.perf_counter()
    mrp, mu, model, w0, vstar = _nn_setup(gamma, seed, n_units, n_states)

    if mode == "stochastic":
        steps = int(horizon) if horizon is not None else 100_000
        cfg = TrainConfig(lam=lam, alpha=alpha, mode="stochastic", beta0=beta,
                          horizon=steps, save_every=max(1, steps // 400), seed=seed)
        config = dict(experiment=f"nn-{regime}", mode=mode, gamma=gamma, seed=seed,
                      alpha=alpha, n_units=n_units, n_states=n_states, lam=lam,
                      beta=beta, horizon=steps, save_every=cfg.save_every)
        run = run_stochastic_td(model, mrp, mu, cfg, w0)
        _attach_run_diagnostics(run, model, mrp, mu, lam, alpha, vstar)
        pe = run.diagnostics["projected_error"]
        fitted, r2 = fit_exponential_rate(run.times, pe)
        report = RunReport(
            experiment=f"nn-{regime}",
            config=config,
            diverged=run.diverged,
            final_projected_error=float(pe[-1]),
            final_value_error=float(run.diagnostics["value_error"][-1]),
            fitted_rate=fitted,
            r_squared=r2,
            displacement=float(run.diagnostics["displacement"].max()),
            extra={"rank": rank_profile(model, w0).rank},
        )
        report.wall_clock = time.perf_counter() - t_start
        if out_dir is not None:
            _emit(out_dir, config, run, report, include_params=False)
        return report

    fast, slow = linearized_rates(model, w0, mrp, mu, lam)
    if dt is None:
        dt = stability_factor / fast
    if horizon is None:
        if regime == "over":
            horizon = time_factor / slow
        else:
            # generous: the rank-deficient path can crawl far below the rate
            # of its linearization; the projected-residual stop bounds the
            # actual cost, the step cap bounds the worst case
            horizon = min(2000.0 / slow, 150_000 * dt)
    n_steps = max(1, int(round(horizon / dt)))
    save_every = max(1, n_steps // 400)
    config = dict(experiment=f"nn-{regime}", mode=mode, gamma=gamma, seed=seed,
                  alpha=alpha, n_units=n_units, n_states=n_states, lam=lam, dt=dt,
                  horizon=horizon, stop_tol=stop_tol, beta=beta, save_every=save_every)

    cfg = TrainConfig(lam=lam, alpha=alpha, mode="lazy-ode", dt=dt, horizon=horizon,
                      save_every=save_every, seed=seed)
    rhs = make_lazy_rhs(model, mrp, mu, lam, alpha)
    probe = lambda w: alpha * np.max(np.abs(model.value(w)))
    stop = None
    if regime == "under":
        stop = lambda w, t: projected_td_error(model, mrp, mu, lam, alpha, w) < stop_tol
    run = integrate(rhs, w0, cfg, divergence_probe=probe, stop_when=stop)
    _attach_run_diagnostics(run, model, mrp, mu, lam, alpha, vstar)

    certificate = None
    extra = {"rate_fast": fast, "rate_slow": slow,
             "rank": rank_profile(model, w0).rank}
    if regime == "over":
        geometry = LazyGeometry.from_model(model, w0, mrp, mu, rng=0)
        cert = overparametrized_certificate(geometry, model, run, alpha)
        certificate = cert.to_dict()
        fitted, r2 = cert.fitted_rate, cert.r_squared
        extra["kappa"] = geometry.kappa
        extra["rate_bound"] = geometry.rate_bound
        try:
            extra["metric_drift_max"] = float(np.max(metric_drift(geometry, model, run)))
        except RankCollapse as exc:
            extra["metric_drift_max"] = None
            extra["metric_drift_note"] = str(exc)
    else:
        cert = underparametrized_certificate(model, mrp, mu, lam, [alpha], [run])
        certificate = cert.to_dict()
        fitted, r2 = fit_exponential_rate(run.times, run.diagnostics["projected_error"])

    report = RunReport(
        experiment=f"nn-{regime}",
        config=config,
        diverged=run.diverged,
        final_projected_error=float(run.diagnostics["projected_error"][-1]),
        final_value_error=float(run.diagnostics["value_error"][-1]),
        fitted_rate=fitted,
        r_squared=r2,
        displacement=float(run.diagnostics["displacement"].max()),
        certificate=certificate,
        extra=extra,
    )
    report.wall_clock = time.perf_counter() - t_start
    if out_dir is not None:
        _emit(out_dir, config, run, report, include_params=False)
    return report


def run_sweep(
    kind: str,
    grid: list[float],
    base: dict | None = None,
    out_dir: str | Path | None = None,
    workers: int = 1,
) -> RunReport:
    """Grid of network runs: "gamma" sweeps the discount at fixed scaling,
    "alpha" sweeps the scaling at fixed discount (displacement check).

    Runs are independent and may execute concurrently; results are merged
    by grid value so the outcome does not depend on the worker count.
    Individual divergences are recorded and the sweep continues.
    """
    if kind not in ("gamma", "alpha"):
        raise DomainError(f"sweep kind must be 'gamma' or 'alpha', got {kind!r}")
    if not grid:
        raise DomainError("sweep grid must be nonempty")
    base = dict(base or {})
    base.setdefault("regime", "over")
    t_start = time.perf_counter()

    def one(value: float) -> RunReport:
        kw = dict(base)
        regime = kw.pop("regime")
        if kind == "gamma":
            kw["gamma"] = value
        else:
            kw["alpha"] = value
        if out_dir is not None:
            kw["out_dir"] = Path(out_dir) / f"run_{value:g}"
        return run_nn(regime, **kw)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, grid))
    else:
        results = [one(v) for v in grid]
    by_value = dict(zip(grid, results))
    ordered = sorted(by_value)

    rows = []
    for v in ordered:
        rep = by_value[v]
        cert = rep.certificate or {}
        rows.append({
            "grid_value": v,
            "diverged": rep.diverged,
            "final_projected_error": rep.final_projected_error,
            "final_value_error": rep.final_value_error,
            "fitted_rate": rep.fitted_rate,
            "r_squared": rep.r_squared,
            "displacement": rep.displacement,
            "envelope_ok": cert.get("envelope_ok"),
        })

    certificate: dict
    if kind == "gamma":
        rates = [r["fitted_rate"] for r in rows]
        usable = all(r is not None for r in rates)
        monotone = usable and all(rates[i] >= rates[i + 1] - 1e-12 for i in range(len(rates) - 1))
        certificate = {"kind": "rate-monotonicity", "rates_by_gamma": rates,
                       "nonincreasing_in_gamma": bool(monotone), "passed": bool(monotone)}
    else:
        disp = [r["displacement"] for r in rows]
        ok = not any(r["diverged"] for r in rows) and all(d and d > 0 for d in disp)
        slope = float(np.polyfit(np.log(ordered), np.log(disp), 1)[0]) if ok else float("nan")
        certificate = {"kind": "displacement-scaling", "displacements": disp,
                       "slope": slope, "passed": bool(ok and slope <= -0.8)}

    config = dict(experiment=f"{kind}-sweep", grid=list(grid), base=base, workers=workers)
    report = RunReport(
        experiment=f"{kind}-sweep",
        config=config,
        diverged=any(r["diverged"] for r in rows),
        certificate=certificate,
        extra={"rows": rows},
    )
    report.wall_clock = time.perf_counter() - t_start
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        header = ",".join(rows[0].keys())
        lines = [header]
        for r in rows:
            lines.append(",".join(_csv_cell(r[k]) for k in rows[0]))
        (out / "summary.csv").write_text("\n".join(lines) + "\n")
        (out / "config.json").write_text(json.dumps(_jsonable(config), indent=2, sort_keys=True))
        report.manifest = sorted(["summary.csv", "config.json", "report.json"]
                                 + [f"run_{v:g}/report.json" for v in ordered])
        (out / "report.json").write_text(report.to_json())
    return report


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def run_meanfield(
    n_particles: int = 200,
    n_states: int = 5,
    gamma: float = 0.9,
    seed: int = 7,
    width: float = 0.35,
    center_low: float = -1.2,
    center_high: float = 1.2,
    dt: float = 0.1,
    horizon: float = 1500.0,
    r0: float = 8.0,
    grid_points: int = 9,
    resolution: float = 0.4,
    eps: float = 1e-5,
    out_dir: str | Path | None = None,
) -> RunReport:
    """Particle run with radial-bump features on a small cyclic chain.

    Integrates the exactly averaged particle system from a paired random
    initialization, then reports the fixed-point diagnostics: maximal
    particle speed, backup residual, distance to the exact value function,
    the support-coverage surrogate, and the calibrated optimality
    implication. There is no reference experiment to match here; all run
    parameters are package defaults, chosen so the run settles within the
    horizon.
    """
    t_start = time.perf_counter()
    states = np.linspace(-1, 1, n_states)
    P = cyclic_chain(n_states, "backward")
    rng = np.random.default_rng(seed)
    vstar = rng.standard_normal(n_states)
    mrp = Mrp(P=P, rbar=(np.eye(n_states) - gamma * P) @ vstar, gamma=gamma)
    mu = stationary_measure(mrp)
    features = GaussianBumpFeatures(states, width=width)
    ensemble = doubled_ensemble(
        n_particles,
        lambda count, r: r.uniform(center_low, center_high, size=(count, 1)),
        rng=rng,
    )
    config = dict(experiment="meanfield", n_particles=n_particles, n_states=n_states,
                  gamma=gamma, seed=seed, feature_kind="gaussian-bump", width=width,
                  center_low=center_low, center_high=center_high, dt=dt,
                  horizon=horizon, r0=r0, grid_points=grid_points,
                  resolution=resolution, eps=eps)

    save_every = max(1, int(round(horizon / dt)) // 40)
    history = integrate_ensemble(ensemble, features, mrp, mu, dt=dt, horizon=horizon,
                                 save_every=save_every)
    theta_grid = np.linspace(-1.1, 1.1, grid_points)
    separation = [separation_check(s, r0=r0, wbar_grid=theta_grid, resolution=resolution)
                  for s in history.snapshots]
    # gap/velocity constant of the tangent reduction at the terminal state
    cal = linearized_gap_bound(history.final, features, mrp, mu)
    universal = features.universal_for_states(states[:, None])
    final_report = fixed_point_optimality(
        history.final, features, mrp, mu, eps=eps,
        separation=separation[-1], features_universal=universal, gap_constant=cal,
    )
    gaps = history.diagnostics["optimality_gap"]
    tail = gaps[len(gaps) // 2:]
    tail_monotone = bool(np.all(np.diff(tail) <= 1e-12))

    profile_grid = np.linspace(center_low, center_high, 33)
    g_vals = g_profile(history.final, features, mrp, mu, profile_grid)
    h_vals = h1_profile(history.final, np.linspace(center_low - 0.5, center_high + 0.5, 13))

    # trajectory-style record of the diagnostics for the CSV
    run = Trajectory(
        times=history.times,
        params=np.zeros((len(history.times), 0)),
        diagnostics={
            "velocity_norm": history.diagnostics["velocity_norm"],
            "bellman_residual": history.diagnostics["bellman_residual"],
            "optimality_gap": history.diagnostics["optimality_gap"],
            "separation_passed": np.array([float(s.passed) for s in separation]),
        },
    )

    report = RunReport(
        experiment="meanfield",
        config=config,
        diverged=False,
        final_projected_error=None,
        final_value_error=float(gaps[-1]),
        certificate={
            "optimality": final_report.to_dict(),
            "separation_final": separation[-1].to_dict(),
            "gap_constant": cal,
            "gap_tail_nonincreasing": tail_monotone,
        },
        extra={
            "velocity_final": float(history.diagnostics["velocity_norm"][-1]),
            "bellman_final": float(history.diagnostics["bellman_residual"][-1]),
        },
    )
    report.wall_clock = time.perf_counter() - t_start
    if out_dir is not None:
        extra_files = {
            "snapshot_initial.csv": _snapshot_csv(history.snapshots[0]),
            "snapshot_final.csv": _snapshot_csv(history.final),
            "g_profile.csv": _profile_csv("wbar,g", profile_grid, g_vals),
            "h1_profile.csv": _profile_csv(
                "bin_center,h1",
                0.5 * (np.linspace(center_low - 0.5, center_high + 0.5, 13)[:-1]
                       + np.linspace(center_low - 0.5, center_high + 0.5, 13)[1:]),
                h_vals,
            ),
        }
        _emit(out_dir, config, run, report, include_params=False, extra_files=extra_files)
    return report


def _snapshot_csv(ensemble) -> str:
    k = ensemble.wbar.shape[1]
    header = "i,omega0," + ",".join(f"wbar_{j + 1}" for j in range(k))
    lines = [header]
    for i in range(ensemble.n):
        cells = [str(i), repr(float(ensemble.omega0[i]))]
        cells += [repr(float(x)) for x in ensemble.wbar[i]]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _profile_csv(header: str, xs, ys) -> str:
    lines = [header]
    for x, y in zip(np.asarray(xs).ravel(), np.asarray(ys).ravel()):
        lines.append(f"{repr(float(x))},{repr(float(y))}")
    return "\n".join(lines) + "\n"


def run_from_config(config: ExperimentConfig) -> RunReport:
    """Dispatch a serialized experiment description to its runner."""
    params = dict(config.params)
    if config.seed is not None:
        params.setdefault("seed", config.seed)
    out = config.out_dir
    if config.experiment == "spiral":
        return run_spiral(out_dir=out, **params)
    if config.experiment == "nn-over":
        return run_nn("over", out_dir=out, **params)
    if config.experiment == "nn-under":
        return run_nn("under", out_dir=out, **params)
    if config.experiment == "meanfield":
        return run_meanfield(out_dir=out, **params)
    if config.experiment == "alpha-sweep":
        params.pop("seed", None)
        return run_sweep("alpha", out_dir=out, **params)
    if config.experiment == "gamma-sweep":
        params.pop("seed", None)
        return run_sweep("gamma", out_dir=out, **params)
    raise DomainError(f"unknown experiment {config.experiment!r}")
