"""Diagnostics for lazily scaled training runs.

The central object is the geometry the model induces on value space at
initialization: the pseudo-inverse metric of the Jacobian outer product,
the norm it defines, its equivalence constant against the stationary
weighted norm, and the radius/threshold constants that the convergence
guarantees are stated in. Certificates then check those guarantees on
completed trajectories: exponential Lyapunov decay with a full-rank
Jacobian, convergence to a local fixed point with an error bound decaying
like 1/alpha otherwise, displacement scaling, and drift of the metric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import Trajectory, TrainConfig, integrate, make_lazy_rhs
from .errors import (
    InitNotZero,
    NotOverParametrized,
    NotUnderParametrized,
    RankCollapse,
)
from .models import ValueModel, rank_profile
from .mrp import (
    Mrp,
    StationaryMeasure,
    exact_value,
    mu_norm,
    mu_projection,
    td_resolvent,
)

RANK_CUTOFF = 1e-10


def estimate_jacobian_lipschitz(
    model: ValueModel,
    w0: np.ndarray,
    radius: float = 1.0,
    n_pairs: int = 200,
    rng: np.random.Generator | int = 0,
) -> float:
    """Sampled lower bound on the Lipschitz constant of the Jacobian map.

    Maximizes ||J(u) - J(v)|| / ||u - v|| over random pairs in a ball around
    w0. A sampled maximum can only underestimate the true constant; callers
    may override with a known value.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    w0 = np.asarray(w0, dtype=float)
    p = w0.size

    def draw():
        x = rng.standard_normal(p)
        x /= np.linalg.norm(x)
        return w0 + radius * rng.random() ** (1.0 / p) * x

    best = 0.0
    for _ in range(n_pairs):
        u, v = draw(), draw()
        gap = np.linalg.norm(u - v)
        if gap < 1e-12:
            continue
        ratio = np.linalg.norm(model.jacobian(u) - model.jacobian(v), ord=2) / gap
        best = max(best, ratio)
    return best


@dataclass(frozen=True)
class LazyGeometry:
    """Initialization geometry of a model on a fixed chain.

    ``g0`` is the pseudo-inverse of J0 J0^T, the metric the model pushes
    forward onto value space at the anchor point; ``norm0`` is the norm it
    induces. ``kappa`` is the equivalence constant between that norm and
    the stationary weighted norm on the span of J0. ``radius_bound`` and
    ``alpha_threshold`` are the initialization-size bound and the minimal
    scaling under which the global exponential-decay guarantee applies;
    both are built from worst-case constants and are very conservative, so
    certificates report them separately from the observed decay.
    """

    j0: np.ndarray
    g0: np.ndarray
    span: np.ndarray              # (d, rank) orthonormal basis of the column span
    singular_values: np.ndarray   # nonzero singular values, descending
    rank: int
    sigma_min: float
    sigma_max: float
    kappa: float
    lipschitz_dv: float
    radius_bound: float
    alpha_threshold: float
    mu: StationaryMeasure
    gamma: float
    vstar: np.ndarray

    @classmethod
    def from_model(
        cls,
        model: ValueModel,
        w0: np.ndarray,
        mrp: Mrp,
        mu: StationaryMeasure,
        lipschitz_dv: float | None = None,
        rng: np.random.Generator | int = 0,
    ) -> "LazyGeometry":
        J0 = model.jacobian(w0)
        U, S, _ = np.linalg.svd(J0, full_matrices=False)
        smax = float(S[0]) if S.size else 0.0
        rank = int(np.sum(S > RANK_CUTOFF * smax)) if smax > 0 else 0
        Ur, Sr = U[:, :rank], S[:rank]
        g0 = (Ur / Sr**2) @ Ur.T
        # Generalized extreme eigenvalues of the weighted norm against the
        # induced one on the span: ratios r(f) = <f,f>_mu / <f,f>_0.
        C = (Sr[:, None] * (Ur.T @ (mu.mu[:, None] * Ur))) * Sr[None, :]
        ratios = np.linalg.eigvalsh((C + C.T) / 2.0)
        kappa = float(np.sqrt(max(ratios[-1], 1.0 / ratios[0])))
        if lipschitz_dv is None:
            lipschitz_dv = estimate_jacobian_lipschitz(model, w0, rng=rng)
        sigma_min = float(Sr[-1]) if rank else 0.0
        if lipschitz_dv > 0 and rank:
            radius_bound = (1.0 - mrp.gamma) ** 2 * sigma_min**2 / (
                192.0 * kappa**2 * lipschitz_dv * smax
            )
        else:
            radius_bound = np.inf
        vstar = exact_value(mrp)
        geom = cls(
            j0=J0,
            g0=g0,
            span=Ur,
            singular_values=Sr,
            rank=rank,
            sigma_min=sigma_min,
            sigma_max=smax,
            kappa=kappa,
            lipschitz_dv=float(lipschitz_dv),
            radius_bound=float(radius_bound),
            alpha_threshold=0.0,
            mu=mu,
            gamma=mrp.gamma,
            vstar=vstar,
        )
        alpha_threshold = geom.norm0(vstar) / radius_bound if np.isfinite(radius_bound) else 0.0
        object.__setattr__(geom, "alpha_threshold", float(alpha_threshold))
        return geom

    def norm0(self, f: np.ndarray) -> float:
        """Norm of f in the initialization metric.

        When the model is rank deficient this is a pseudo-norm: only the
        component of f inside the span contributes (use ``in_span`` to
        detect that situation).
        """
        f = np.asarray(f, dtype=float)
        return float(np.sqrt(max(f @ self.g0 @ f, 0.0)))

    def in_span(self, f: np.ndarray, tol: float = 1e-8) -> bool:
        f = np.asarray(f, dtype=float)
        resid = f - self.span @ (self.span.T @ f)
        scale = np.linalg.norm(f)
        return bool(np.linalg.norm(resid) <= tol * max(scale, 1.0))

    def lyapunov(self, f: np.ndarray, vstar: np.ndarray | None = None) -> float:
        """Squared distance to the target in the initialization norm."""
        target = self.vstar if vstar is None else vstar
        return self.norm0(np.asarray(f, dtype=float) - target) ** 2

    @property
    def rate_bound(self) -> float:
        """Guaranteed exponential decay rate of the Lyapunov value."""
        return (1.0 - self.gamma) / (2.0 * self.kappa**2)


def projected_td_error(
    model: ValueModel,
    mrp: Mrp,
    mu: StationaryMeasure,
    lam: float,
    alpha: float,
    w: np.ndarray,
) -> float:
    """Weighted norm of the backup residual projected on the current tangent space.

    Vanishes exactly at stationary points of the (scaled) averaged dynamics,
    which makes it the certificate of convergence to a local fixed point.
    """
    r_lam, P_lam = td_resolvent(mrp, lam)
    V = alpha * model.value(w)
    residual = r_lam + mrp.gamma * P_lam @ V - V
    proj = mu_projection(model.jacobian(w), mu, residual)
    return mu_norm(proj, mu)


def fit_exponential_rate(
    times: np.ndarray,
    values: np.ndarray,
    transient: float = 0.1,
) -> tuple[float | None, float]:
    """Least-squares decay rate of log(values) after discarding the transient.

    Returns (rate, r_squared); rate is None when fewer than three positive
    samples remain. Callers decide what r_squared is acceptable.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    start = int(np.floor(transient * len(times)))
    t, v = times[start:], values[start:]
    keep = v > 0
    t, v = t[keep], v[keep]
    if t.size < 3 or np.ptp(t) == 0:
        return None, 0.0
    logv = np.log(v)
    slope, intercept = np.polyfit(t, logv, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((logv - pred) ** 2))
    ss_tot = float(np.sum((logv - logv.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(-slope), float(r2)


@dataclass
class DecayCertificate:
    """Outcome of checking the global exponential-decay guarantee on one run."""

    sigma_min_positive: bool
    init_within_radius: bool
    alpha_above_threshold: bool
    rate_bound: float
    envelope_margin: float
    envelope_ok: bool
    fitted_rate: float | None
    r_squared: float
    clean_exponential: bool
    rate_exceeds_bound: bool
    displacement: float
    passed: bool

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        if out["fitted_rate"] is None:
            out["fitted_rate"] = "no clean exponential"
        return out

    @property
    def theoretical_preconditions(self) -> bool:
        return self.sigma_min_positive and self.init_within_radius and self.alpha_above_threshold


def overparametrized_certificate(
    geometry: LazyGeometry,
    model: ValueModel,
    run: Trajectory,
    alpha: float,
    envelope_slack: float = 0.05,
    r2_min: float = 0.95,
    transient: float = 0.1,
) -> DecayCertificate:
    """Check the exponential Lyapunov envelope on an over-parametrized run.

    Passing requires the Lyapunov series to stay below its guaranteed
    envelope (with the stated slack) at every saved time and to decay as a
    clean single exponential. The worst-case preconditions (initialization
    radius, scaling threshold) are reported but do not gate the pass, since
    they are loose by orders of magnitude at desk scale.
    """
    if geometry.rank < geometry.j0.shape[0]:
        raise NotOverParametrized(
            f"rank {geometry.rank} < {geometry.j0.shape[0]} states; decay certificate undefined"
        )
    U = np.array([
        geometry.lyapunov(alpha * model.value(w)) for w in run.params
    ])
    run.diagnostics["lyapunov"] = U
    rate = geometry.rate_bound
    envelope = U[0] * np.exp(-rate * run.times)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(envelope > 0, U / envelope, np.inf)
    margin = float(np.max(ratios))
    envelope_ok = bool(margin <= 1.0 + envelope_slack) and not run.diverged

    fitted, r2 = fit_exponential_rate(run.times, U, transient=transient)
    clean = fitted is not None and r2 >= r2_min
    init_v = model.value(run.params[0])
    displacement = float(np.max(np.linalg.norm(run.params - run.params[0], axis=1)))
    return DecayCertificate(
        sigma_min_positive=geometry.sigma_min > 0,
        init_within_radius=geometry.norm0(init_v) < geometry.radius_bound,
        alpha_above_threshold=alpha > geometry.alpha_threshold,
        rate_bound=rate,
        envelope_margin=margin,
        envelope_ok=envelope_ok,
        fitted_rate=fitted if clean else None,
        r_squared=r2,
        clean_exponential=clean,
        rate_exceeds_bound=bool(clean and fitted >= rate),
        displacement=displacement,
        passed=bool(envelope_ok and clean),
    )


@dataclass
class FixedPointCertificate:
    """Outcome of checking local-fixed-point convergence over a scaling grid."""

    alphas: list[float]
    diverged: list[bool]
    projected_errors: list[float]
    converged: list[bool]
    value_errors: list[float]
    bound_base: float
    excesses: list[float]
    envelope_constant: float
    envelope_ok: bool
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def underparametrized_certificate(
    model: ValueModel,
    mrp: Mrp,
    mu: StationaryMeasure,
    lam: float,
    alphas: Sequence[float],
    runs: Sequence[Trajectory],
    proj_tol: float = 1e-6,
) -> FixedPointCertificate:
    """Check fixed-point convergence and the 1/alpha excess-error envelope.

    For each run the projected backup residual at the final iterate must
    fall below ``proj_tol``. The excess of the final value error over
    (1 - lam gamma)/(1 - gamma) times the best-in-tangent-space error must
    fit under C/alpha with the single constant C anchored at the smallest
    scaling in the grid; anchoring keeps the envelope test non-vacuous.
    """
    if len(alphas) != len(runs) or not alphas:
        raise ValueError("need one run per scaling value")
    w_init = runs[0].params[0]
    profile = rank_profile(model, w_init)
    if profile.overparametrized:
        raise NotUnderParametrized("Jacobian has full row rank at initialization")
    v_init = model.value(w_init)
    if np.max(np.abs(v_init)) > 1e-10:
        raise InitNotZero("initial value vector must vanish")

    vstar = exact_value(mrp)
    factor = (1.0 - lam * mrp.gamma) / (1.0 - mrp.gamma)
    best_linear = mu_projection(model.jacobian(w_init), mu, vstar)
    base = factor * mu_norm(best_linear - vstar, mu)

    order = np.argsort(alphas)
    diverged, proj_errors, value_errors, excesses, converged = [], [], [], [], []
    for a, run in zip(alphas, runs):
        diverged.append(bool(run.diverged))
        if run.diverged:
            proj_errors.append(float("inf"))
            value_errors.append(float("inf"))
            excesses.append(float("inf"))
            converged.append(False)
            continue
        w = run.final_params
        pe = projected_td_error(model, mrp, mu, lam, a, w)
        err = mu_norm(a * model.value(w) - vstar, mu)
        proj_errors.append(pe)
        value_errors.append(err)
        excesses.append(err - base)
        converged.append(pe <= proj_tol)

    a_min = float(alphas[order[0]])
    C = max(excesses[order[0]] * a_min, 1e-12)
    envelope_ok = np.isfinite(C) and all(
        exc <= C / a + 1e-12 for a, exc in zip(alphas, excesses)
    )
    return FixedPointCertificate(
        alphas=[float(a) for a in alphas],
        diverged=diverged,
        projected_errors=proj_errors,
        converged=converged,
        value_errors=value_errors,
        bound_base=float(base),
        excesses=excesses,
        envelope_constant=float(C),
        envelope_ok=bool(envelope_ok),
        passed=bool(all(converged) and envelope_ok),
    )


@dataclass
class DisplacementReport:
    """Peak parameter displacement per scaling value, with its log-log slope."""

    alphas: list[float]
    displacements: list[float]
    diverged: list[bool]
    slope: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def displacement_scaling(
    model: ValueModel,
    mrp: Mrp,
    mu: StationaryMeasure,
    lam: float,
    alphas: Sequence[float],
    config: TrainConfig,
    w0: np.ndarray,
    slope_bound: float = -0.8,
) -> DisplacementReport:
    """Integrate the scaled flow per alpha and fit how far parameters travel.

    The same time grid is used for every alpha, so in the exactly linear
    case the displacements are proportional to 1/alpha and the fitted
    log-log slope is -1 up to integrator error.
    """
    displacements, diverged = [], []
    for a in alphas:
        rhs = make_lazy_rhs(model, mrp, mu, lam, a)
        probe = lambda w, _a=a: _a * np.max(np.abs(model.value(w)))
        run = integrate(rhs, w0, config, divergence_probe=probe)
        diverged.append(bool(run.diverged))
        displacements.append(float(np.max(np.linalg.norm(run.params - run.params[0], axis=1))))
    ok = not any(diverged) and all(d > 0 for d in displacements)
    slope = float("nan")
    if ok:
        slope = float(np.polyfit(np.log(np.asarray(alphas, dtype=float)),
                                 np.log(np.asarray(displacements)), 1)[0])
    return DisplacementReport(
        alphas=[float(a) for a in alphas],
        displacements=displacements,
        diverged=diverged,
        slope=slope,
        passed=bool(ok and slope <= slope_bound),
    )


def metric_drift(geometry: LazyGeometry, model: ValueModel, run: Trajectory) -> np.ndarray:
    """Relative drift of the pushforward metric along a run.

    Returns, per saved time, the operator norm of g0 (J_w J_w^T) - I
    restricted to the initial span. The lazy regime keeps this below
    (1 - gamma)/4; a rank drop along the way raises RankCollapse since the
    comparison is then meaningless.
    """
    Ur = geometry.span
    drifts = np.empty(len(run.times))
    for i, w in enumerate(run.params):
        Jw = model.jacobian(w)
        sv = np.linalg.svd(Jw, compute_uv=False)
        rank = int(np.sum(sv > RANK_CUTOFF * sv[0])) if sv[0] > 0 else 0
        if rank < geometry.rank:
            raise RankCollapse(f"rank dropped from {geometry.rank} to {rank} at t={run.times[i]:g}")
        M = Ur.T @ (geometry.g0 @ (Jw @ Jw.T) - np.eye(geometry.j0.shape[0])) @ Ur
        drifts[i] = np.linalg.norm(M, ord=2)
    return drifts
