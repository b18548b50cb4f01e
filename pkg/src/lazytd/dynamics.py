"""Training engines: sampled TD(lambda) with eligibility traces, the averaged
deterministic flow, and its lazily scaled variant, plus the fixed-step
integrators that drive them.

Time conventions: deterministic runs are parametrized by the time variable
of the scaled flow itself; sampled runs report cumulative step size as time,
so that constant-step runs line up with the averaged flow they track.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import Diverged, DomainError, NonFiniteState
from .models import ValueModel
from .mrp import Mrp, StationaryMeasure, td_resolvent

MODES = ("stochastic", "averaged-ode", "lazy-ode")
INTEGRATORS = ("euler", "rk4")
TRACE_MODES = ("recursive", "windowed")


@dataclass
class TrainConfig:
    """Knobs shared by all engines; see field comments for units."""

    lam: float = 0.0                 # trace parameter in [0, 1)
    alpha: float = 1.0               # lazy scaling factor, >= 1
    mode: str = "lazy-ode"
    beta0: float = 1e-3              # step size (constant unless t0 is set)
    t0: float | None = None          # decaying schedule beta0 / (1 + t/t0)
    horizon: float = 1000.0          # step count (stochastic) or end time (ode)
    integrator: str = "rk4"
    dt: float = 1e-2                 # ode step
    save_every: int = 100            # record state every this many steps
    divergence_threshold: float = 1e8
    seed: int = 0
    trace_mode: str = "recursive"
    trace_window: int = 100          # only used by the windowed trace

    def __post_init__(self):
        if not 0.0 <= self.lam < 1.0:
            raise DomainError(f"lam must lie in [0,1), got {self.lam}")
        if self.alpha < 1.0:
            raise DomainError(f"alpha must be >= 1, got {self.alpha}")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")
        if self.integrator not in INTEGRATORS:
            raise DomainError(f"integrator must be one of {INTEGRATORS}")
        if self.trace_mode not in TRACE_MODES:
            raise DomainError(f"trace_mode must be one of {TRACE_MODES}")
        if self.dt <= 0:
            raise DomainError("dt must be positive")
        if self.divergence_threshold <= 0:
            raise DomainError("divergence_threshold must be positive")
        if self.beta0 <= 0:
            raise DomainError("beta0 must be positive")
        if self.save_every < 1:
            raise DomainError("save_every must be >= 1")

    def beta(self, t: float) -> float:
        """Step size at (cumulative) time t; constant or harmonically decaying."""
        if self.t0 is None:
            return self.beta0
        return self.beta0 / (1.0 + t / self.t0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    """Saved states of one run plus whatever per-time diagnostics were attached."""

    times: np.ndarray
    params: np.ndarray               # (n_saved, p), all finite
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)
    diverged: bool = False
    diverged_at: float | None = None

    @property
    def final_params(self) -> np.ndarray:
        return self.params[-1]

    def to_csv(self, path: str | Path, include_params: bool = True) -> None:
        """One row per saved time: time, parameter components, diagnostics."""
        keys = sorted(self.diagnostics)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["time"]
            if include_params:
                header += [f"w{j}" for j in range(self.params.shape[1])]
            header += keys
            writer.writerow(header)
            for i, t in enumerate(self.times):
                row = [repr(float(t))]
                if include_params:
                    row += [repr(float(x)) for x in self.params[i]]
                row += [repr(float(self.diagnostics[k][i])) for k in keys]
                writer.writerow(row)


def sample_chain(mrp: Mrp, mu: StationaryMeasure, steps: int, rng: np.random.Generator | int) -> np.ndarray:
    """Sample a state path: s0 from the stationary measure, then the chain."""
    if steps < 1:
        raise DomainError("steps must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    cum = np.cumsum(mrp.P, axis=1)
    cum[:, -1] = 1.0
    draws = rng.random(steps)
    path = np.empty(steps, dtype=np.int64)
    path[0] = int(np.searchsorted(np.cumsum(mu.mu), draws[0], side="right"))
    for t in range(1, steps):
        path[t] = int(np.searchsorted(cum[path[t - 1]], draws[t], side="right"))
    return path


def stochastic_td_step(
    model: ValueModel,
    w: np.ndarray,
    z: np.ndarray,
    s: int,
    s_next: int,
    reward: float,
    beta: float,
    gamma: float,
    config: TrainConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """One sampled TD(lambda) update with the recursive eligibility trace.

    delta uses the alpha-scaled model and the parameter step carries the
    matching 1/alpha factor, so alpha = 1 is the plain unscaled update.
    """
    alpha, lam = config.alpha, config.lam
    V = model.value(w)
    if not np.all(np.isfinite(V)) or alpha * np.max(np.abs(V)) > config.divergence_threshold:
        raise Diverged(f"scaled value norm exceeded {config.divergence_threshold:g}")
    J = model.jacobian(w)
    delta = reward + gamma * alpha * V[s_next] - alpha * V[s]
    z_new = gamma * lam * z + J[s]
    w_new = w + beta * delta * z_new / alpha
    if np.max(np.abs(w_new)) > config.divergence_threshold:
        raise Diverged(f"parameter norm exceeded {config.divergence_threshold:g}")
    return w_new, z_new


def run_stochastic_td(
    model: ValueModel,
    mrp: Mrp,
    mu: StationaryMeasure,
    config: TrainConfig,
    w0: np.ndarray,
) -> Trajectory:
    """Run sampled TD(lambda) for config.horizon steps along one chain path.

    The recursive trace accumulates gradients as they were at sampling time;
    the windowed mode instead re-evaluates the gradients of the last
    ``trace_window`` visited states at the current parameters, which is the
    literal definition truncated to finite memory. Both agree to first order
    in the step size.
    """
    steps = int(config.horizon)
    rng = np.random.default_rng(config.seed)
    path = sample_chain(mrp, mu, steps + 1, rng)
    R = mrp.pair_reward()
    gamma, lam, alpha = mrp.gamma, config.lam, config.alpha

    w = np.asarray(w0, dtype=float).copy()
    z = np.zeros(model.p)
    window: list[int] = []
    times, saved = [0.0], [w.copy()]
    t_now = 0.0
    diverged, diverged_at = False, None
    for k in range(steps):
        s, s_next = int(path[k]), int(path[k + 1])
        beta = config.beta(t_now)
        try:
            # blowup raises Diverged below; let the arithmetic overflow quietly
            with np.errstate(over="ignore", invalid="ignore"):
                if config.trace_mode == "recursive":
                    w_new, z = stochastic_td_step(model, w, z, s, s_next,
                                                  R[s, s_next], beta, gamma, config)
                else:
                    window.append(s)
                    if len(window) > config.trace_window:
                        window.pop(0)
                    V = model.value(w)
                    if (not np.all(np.isfinite(V))
                            or alpha * np.max(np.abs(V)) > config.divergence_threshold):
                        raise Diverged("scaled value norm exceeded the divergence threshold")
                    J = model.jacobian(w)
                    decay = (gamma * lam) ** np.arange(len(window) - 1, -1, -1)
                    z = decay @ J[np.asarray(window)]
                    delta = R[s, s_next] + gamma * alpha * V[s_next] - alpha * V[s]
                    w_new = w + beta * delta * z / alpha
                    if np.max(np.abs(w_new)) > config.divergence_threshold:
                        raise Diverged("parameter norm exceeded the divergence threshold")
        except Diverged:
            diverged, diverged_at = True, t_now
            _maybe_record(times, saved, t_now, w, model, alpha, config)
            break
        if not np.all(np.isfinite(w_new)):
            if np.max(np.abs(w)) > 1e-3 * config.divergence_threshold:
                diverged, diverged_at = True, t_now
                _maybe_record(times, saved, t_now, w, model, alpha, config)
                break
            raise NonFiniteState(f"non-finite parameters at step {k}")
        w = w_new
        t_now += beta
        if (k + 1) % config.save_every == 0 or k == steps - 1:
            with np.errstate(over="ignore", invalid="ignore"):
                probe = alpha * np.max(np.abs(model.value(w)))
            if not np.isfinite(probe) or probe > config.divergence_threshold:
                diverged, diverged_at = True, t_now
                break
            times.append(t_now)
            saved.append(w.copy())
    return Trajectory(
        times=np.asarray(times),
        params=np.asarray(saved),
        diverged=diverged,
        diverged_at=diverged_at,
    )


def _maybe_record(times, saved, t_now, w, model, alpha, config) -> None:
    """Record a terminal state only while it is still within the thresholds,
    so trajectories never carry states whose value has already blown up."""
    if t_now <= times[-1]:
        return
    with np.errstate(over="ignore", invalid="ignore"):
        probe = alpha * np.max(np.abs(model.value(w)))
    if np.isfinite(probe) and probe <= config.divergence_threshold:
        times.append(t_now)
        saved.append(w.copy())


def averaged_rhs(model: ValueModel, mrp: Mrp, mu: StationaryMeasure, lam: float, w: np.ndarray) -> np.ndarray:
    """Drift of the averaged deterministic dynamics: J^T Gamma (T V - V)."""
    return lazy_rhs(model, mrp, mu, lam, 1.0, w)


def lazy_rhs(model: ValueModel, mrp: Mrp, mu: StationaryMeasure, lam: float, alpha: float, w: np.ndarray) -> np.ndarray:
    """Drift of the scaled dynamics: (1/alpha) J^T Gamma (T(alpha V) - alpha V)."""
    return make_lazy_rhs(model, mrp, mu, lam, alpha)(w)


def make_lazy_rhs(model: ValueModel, mrp: Mrp, mu: StationaryMeasure, lam: float, alpha: float):
    """Closure over the resolvent pieces of the backup operator.

    The returned callable evaluates the scaled drift without redoing the
    linear solves, which is what the integrators want.
    """
    if alpha < 1.0:
        raise DomainError(f"alpha must be >= 1, got {alpha}")
    r_lam, P_lam = td_resolvent(mrp, lam)
    gP = mrp.gamma * P_lam
    muv = mu.mu
    fused = getattr(model, "value_and_jacobian", None)

    if fused is not None:
        def rhs(w: np.ndarray) -> np.ndarray:
            value, J = fused(w)
            V = alpha * value
            td = r_lam + gP @ V - V
            return J.T @ (muv * td) / alpha
    else:
        def rhs(w: np.ndarray) -> np.ndarray:
            V = alpha * model.value(w)
            td = r_lam + gP @ V - V
            return model.jacobian(w).T @ (muv * td) / alpha

    return rhs


def integrate(
    rhs,
    w0: np.ndarray,
    config: TrainConfig,
    divergence_probe=None,
    stop_when=None,
) -> Trajectory:
    """Fixed-step integration of dw/dt = rhs(w) up to config.horizon.

    The run halts with the diverged flag as soon as the max-norm of the
    state, or of the optional probe (typically the scaled value vector),
    exceeds the divergence threshold; only finite states are recorded. A
    non-finite state reached from an already-large one (within three orders
    of magnitude of the threshold) counts as divergence, since a single
    explosive step can overshoot straight past the threshold; otherwise it
    raises NonFiniteState. ``stop_when(w, t)`` is consulted at save points
    for early termination.
    """
    w = np.asarray(w0, dtype=float).copy()
    dt = config.dt
    n_steps = int(round(config.horizon / dt))
    thresh = config.divergence_threshold
    use_rk4 = config.integrator == "rk4"

    times, saved = [0.0], [w.copy()]
    diverged, diverged_at = False, None
    t = 0.0
    last_mag = _magnitude(w, divergence_probe)
    for k in range(n_steps):
        # blowup is detected and classified below; let the step overflow quietly
        with np.errstate(over="ignore", invalid="ignore"):
            if use_rk4:
                k1 = rhs(w)
                k2 = rhs(w + 0.5 * dt * k1)
                k3 = rhs(w + 0.5 * dt * k2)
                k4 = rhs(w + dt * k3)
                w_new = w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            else:
                w_new = w + dt * rhs(w)
        t = (k + 1) * dt
        if not np.all(np.isfinite(w_new)):
            if last_mag > 1e-3 * thresh:
                diverged, diverged_at = True, t
                break
            raise NonFiniteState(f"non-finite state at t={t:g}")
        mag = _magnitude(w_new, divergence_probe)
        if not np.isfinite(mag) or mag > thresh:
            diverged, diverged_at = True, t
            break
        w = w_new
        last_mag = mag
        if (k + 1) % config.save_every == 0 or k == n_steps - 1:
            times.append(t)
            saved.append(w.copy())
            if stop_when is not None and stop_when(w, t):
                break
    return Trajectory(
        times=np.asarray(times),
        params=np.asarray(saved),
        diverged=diverged,
        diverged_at=diverged_at,
    )


def _magnitude(w: np.ndarray, probe) -> float:
    mag = float(np.max(np.abs(w)))
    if probe is not None:
        with np.errstate(over="ignore", invalid="ignore"):
            mag = max(mag, float(probe(w)))
    return mag
