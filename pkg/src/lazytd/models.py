"""Differentiable value-function approximators with analytic Jacobians.

Four families are shipped: plain linear models, the 3-state spiral manifold
used in the classical divergence experiment, single-hidden-layer ReLU
networks with paired (sign-flipped) initialization, and the affine tangent
model of any base model at an anchor point.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError, OddWidth

SPIRAL_A = np.array([10.0, -7.0, -3.0])
SPIRAL_B = np.array([2.3094, -9.815, 7.5056])
SPIRAL_GROWTH = 0.01
SPIRAL_FREQUENCY = 0.866


class ValueModel(ABC):
    """Parametric family w -> V_w with value vector and Jacobian over states."""

    d: int
    p: int

    @abstractmethod
    def value(self, w: np.ndarray) -> np.ndarray:
        """Value vector over the d states, shape (d,)."""

    @abstractmethod
    def jacobian(self, w: np.ndarray) -> np.ndarray:
        """Derivative of the value vector in the parameters, shape (d, p)."""


class LinearModel(ValueModel):
    def __init__(self, features: np.ndarray):
        self.features = np.asarray(features, dtype=float)
        if self.features.ndim != 2:
            raise DimensionMismatch("feature matrix must be d x p")
        self.d, self.p = self.features.shape

    def value(self, w):
        return self.features @ np.asarray(w, dtype=float)

    def jacobian(self, w):
        return self.features


class SpiralModel(ValueModel):
    """One-parameter spiral manifold in R^3.

    value(theta) = exp(g theta) (a cos(f theta) - b sin(f theta)) + shift.

    With the default shift = -a the model vanishes at theta = 0 and the
    target value vector -a sits at the spiral's center (theta -> -inf). The
    slow outward growth rate g and winding frequency f are tuned so that,
    on the matching 3-state cyclic chain, the unscaled dynamics follow the
    spiral outward.
    """

    d = 3
    p = 1

    def __init__(self, a=SPIRAL_A, b=SPIRAL_B, growth=SPIRAL_GROWTH,
                 frequency=SPIRAL_FREQUENCY, shift=None):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.growth = float(growth)
        self.frequency = float(frequency)
        self.shift = -self.a if shift is None else np.asarray(shift, dtype=float)

    def value(self, w):
        th = float(np.asarray(w).reshape(()))
        g, f = self.growth, self.frequency
        return np.exp(g * th) * (self.a * np.cos(f * th) - self.b * np.sin(f * th)) + self.shift

    def jacobian(self, w):
        # d/dth [e^{g th}(a cos - b sin)] = e^{g th}[(g a - f b) cos - (g b + f a) sin]
        th = float(np.asarray(w).reshape(()))
        g, f = self.growth, self.frequency
        col = np.exp(g * th) * (
            (g * self.a - f * self.b) * np.cos(f * th)
            - (g * self.b + f * self.a) * np.sin(f * th)
        )
        return col[:, None]


class ReluNet(ValueModel):
    """Width-normalized single-hidden-layer ReLU network on fixed input points.

    value(w)(s) = (1/N) sum_i a_i max(0, b_i . s - c_i), with parameters
    packed as w = [a_1..a_N, b_11..b_Nm, c_1..c_N]. The derivative of the
    hinge at its kink is taken to be 0, which keeps the Jacobian bounded;
    the Jacobian is therefore discontinuous across kink crossings and the
    smoothness assumed by the convergence theory holds only piecewise.
    """

    def __init__(self, n_units: int, states: np.ndarray):
        states = np.asarray(states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        self.states = states
        self.n_units = int(n_units)
        self.d, self.m = states.shape
        self.p = self.n_units * (self.m + 2)

    def unpack(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.p,):
            raise DimensionMismatch(f"expected parameter vector of length {self.p}")
        N, m = self.n_units, self.m
        return w[:N], w[N:N + N * m].reshape(N, m), w[N + N * m:]

    def pack(self, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
        return np.concatenate([np.ravel(a), np.ravel(b), np.ravel(c)])

    def _pre(self, b, c):
        return self.states @ b.T - c[None, :]  # (d, N)

    def value(self, w):
        a, b, c = self.unpack(w)
        return np.maximum(self._pre(b, c), 0.0) @ a / self.n_units

    def jacobian(self, w):
        return self.value_and_jacobian(w)[1]

    def value_and_jacobian(self, w):
        """Value and Jacobian off one activation pass (the hot path for the
        integrators, which evaluate both at every stage)."""
        a, b, c = self.unpack(w)
        pre = self._pre(b, c)
        act = np.maximum(pre, 0.0)
        value = act @ a / self.n_units
        ind = (pre > 0.0).astype(float)
        scaled = ind * (a[None, :] / self.n_units)    # (d, N)
        N, m, d = self.n_units, self.m, self.d
        J = np.empty((d, self.p))
        J[:, :N] = act / self.n_units
        J[:, N:N + N * m] = (scaled[:, :, None] * self.states[:, None, :]).reshape(d, N * m)
        J[:, N + N * m:] = -scaled
        return value, J

    def init_doubled(self, rng: np.random.Generator | int) -> np.ndarray:
        """Paired Gaussian initialization forcing value(w0) = 0.

        The first half of the units draws a ~ N(0,1), each input weight
        ~ N(0, (1/sqrt(m))^2) and bias ~ N(0,1); the second half copies the
        input weights and biases and negates the output weights, so the two
        halves cancel exactly at every input.
        """
        if self.n_units % 2 != 0:
            raise OddWidth(f"doubled initialization needs even width, got {self.n_units}")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        half = self.n_units // 2
        a = rng.standard_normal(half)
        b = rng.standard_normal((half, self.m)) / np.sqrt(self.m)
        c = rng.standard_normal(half)
        return self.pack(
            np.concatenate([a, -a]),
            np.vstack([b, b]),
            np.concatenate([c, c]),
        )


class TangentModel(ValueModel):
    """Affine model tangent to ``base`` at the anchor ``w0``.

    value(w) = V_{w0} + J_{w0} (w - w0) exactly, with constant Jacobian.
    """

    def __init__(self, base: ValueModel, w0: np.ndarray):
        self.base = base
        self.w0 = np.asarray(w0, dtype=float)
        self.v0 = base.value(self.w0)
        self.j0 = base.jacobian(self.w0)
        self.d, self.p = self.j0.shape

    def value(self, w):
        return self.v0 + self.j0 @ (np.asarray(w, dtype=float) - self.w0)

    def jacobian(self, w):
        return self.j0


def finite_difference_jacobian(model: ValueModel, w: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of model.value, the reference every analytic
    Jacobian is checked against."""
    w = np.asarray(w, dtype=float)
    cols = []
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = step
        cols.append((model.value(w + e) - model.value(w - e)) / (2.0 * step))
    return np.column_stack(cols)


@dataclass(frozen=True)
class RankProfile:
    """Singular-value summary of a model Jacobian at one parameter point."""

    singular_values: np.ndarray
    rank: int
    sigma_min: float
    sigma_max: float
    overparametrized: bool

    @property
    def underparametrized(self) -> bool:
        return not self.overparametrized


def rank_profile(model: ValueModel, w: np.ndarray, cutoff: float = 1e-10) -> RankProfile:
    """Classify a model as over- or under-parametrized at ``w``.

    rank counts singular values above ``cutoff`` times the largest one;
    over-parametrized means the Jacobian spans all d state directions.
    """
    sv = np.linalg.svd(model.jacobian(w), compute_uv=False)
    smax = float(sv[0]) if sv.size else 0.0
    rank = int(np.sum(sv > cutoff * smax)) if smax > 0 else 0
    smin = float(sv[rank - 1]) if rank > 0 else 0.0
    return RankProfile(
        singular_values=sv,
        rank=rank,
        sigma_min=smin,
        sigma_max=smax,
        overparametrized=(rank == model.d),
    )


def model_from_spec(spec: dict) -> ValueModel:
    """Build a model from a configuration block.

    kind "linear" needs `features` (row-major list plus `d`); "spiral"
    accepts optional `a`, `b`, `growth`, `frequency`, `shift`; "relu" needs
    `n_units` and `states`; "tangent-of" wraps a nested `base` spec at
    `anchor` (defaulting to zero parameters).
    """
    kind = spec.get("kind")
    if kind == "linear":
        d = int(spec["d"])
        return LinearModel(np.asarray(spec["features"], dtype=float).reshape(d, -1))
    if kind == "spiral":
        kw = {k: spec[k] for k in ("a", "b", "growth", "frequency", "shift") if k in spec}
        return SpiralModel(**kw)
    if kind == "relu":
        return ReluNet(int(spec["n_units"]), np.asarray(spec["states"], dtype=float))
    if kind == "tangent-of":
        base = model_from_spec(spec["base"])
        anchor = np.asarray(spec.get("anchor", np.zeros(base.p)), dtype=float)
        return TangentModel(base, anchor)
    raise DomainError(f"unknown model kind {kind!r}")
