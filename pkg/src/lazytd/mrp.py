"""Finite Markov reward processes and the associated evaluation operators.

Everything here is exact, dense linear algebra at desk scale: stationary
measures, value functions, the weighted inner product they induce, the
multi-step bootstrapped backup operator in closed (resolvent) form, and
weighted projections onto model tangent spaces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainError,
    FullSupportViolation,
    NonErgodic,
    SolveFailure,
)

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Mrp:
    """A finite Markov reward process (transition matrix, rewards, discount).

    Rewards are carried as the state-conditional expectation ``rbar``; an
    optional pairwise ``reward_table`` r(s, s') may be supplied instead, in
    which case ``rbar`` is derived from it row by row.
    """

    P: np.ndarray
    rbar: np.ndarray | None
    gamma: float
    reward_table: np.ndarray | None = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        object.__setattr__(self, "P", P)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DimensionMismatch(f"transition matrix must be square, got {P.shape}")
        d = P.shape[0]
        if np.any(P < 0):
            raise DomainError("transition matrix has negative entries")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise DomainError("transition matrix rows must sum to 1")
        if not 0.0 < self.gamma < 1.0:
            raise DomainError(f"discount factor must lie in (0,1), got {self.gamma}")
        if self.reward_table is not None:
            R = np.asarray(self.reward_table, dtype=float)
            if R.shape != (d, d):
                raise DimensionMismatch("reward table must be d x d")
            object.__setattr__(self, "reward_table", R)
            object.__setattr__(self, "rbar", (P * R).sum(axis=1))
        elif self.rbar is None:
            raise DomainError("either rbar or reward_table must be given")
        else:
            rbar = np.asarray(self.rbar, dtype=float)
            if rbar.shape != (d,):
                raise DimensionMismatch("expected reward vector must have length d")
            object.__setattr__(self, "rbar", rbar)

    @property
    def d(self) -> int:
        return self.P.shape[0]

    def pair_reward(self) -> np.ndarray:
        """Pairwise reward r(s, s') as a d x d table.

        When no table was supplied the reward is deterministic given the
        departure state, r(s, s') = rbar(s).
        """
        if self.reward_table is not None:
            return self.reward_table
        return np.repeat(self.rbar[:, None], self.d, axis=1)


@dataclass(frozen=True)
class StationaryMeasure:
    """Invariant distribution of the chain and the diagonal weighting it induces."""

    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))

    @property
    def Gamma(self) -> np.ndarray:
        return np.diag(self.mu)

    @property
    def d(self) -> int:
        return self.mu.shape[0]


def stationary_measure(mrp: Mrp, tol: float = 1e-12, max_iters: int = 10**6) -> StationaryMeasure:
    """Invariant distribution of ``mrp.P`` by power iteration.

    Raises NonErgodic when the iteration does not settle within ``max_iters``
    and FullSupportViolation when the computed measure has an entry at or
    below 1e-14 (the full-support requirement all weighted norms rely on).
    """
    P = mrp.P
    mu = np.full(mrp.d, 1.0 / mrp.d)
    for _ in range(max_iters):
        nxt = mu @ P
        if np.abs(nxt - mu).sum() < tol:
            mu = nxt
            break
        mu = nxt
    else:
        raise NonErgodic(f"power iteration did not converge within {max_iters} sweeps")
    # Extra sweeps flush out transient mass that stalls just above the
    # convergence tolerance (e.g. on a chain with an absorbing class), so a
    # support violation actually shows up as a near-zero entry.
    for _ in range(256):
        mu = mu @ P
    mu = mu / mu.sum()
    if mu.min() <= 1e-14:
        raise FullSupportViolation("stationary measure lost full support")
    return StationaryMeasure(mu=mu)


def exact_value(mrp: Mrp) -> np.ndarray:
    """Value function solving (I - gamma P) V = rbar."""
    A = np.eye(mrp.d) - mrp.gamma * mrp.P
    try:
        v = np.linalg.solve(A, mrp.rbar)
    except np.linalg.LinAlgError as exc:  # unreachable for a valid chain
        raise SolveFailure("value-function system is singular") from exc
    resid = np.max(np.abs(A @ v - mrp.rbar))
    if resid > 1e-10:
        raise SolveFailure(f"value-function residual {resid:.3e} too large")
    return v


def _mu_vector(mu) -> np.ndarray:
    return mu.mu if isinstance(mu, StationaryMeasure) else np.asarray(mu, dtype=float)


def mu_inner(a: np.ndarray, b: np.ndarray, mu) -> float:
    """Inner product sum_s a(s) b(s) mu(s)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = _mu_vector(mu)
    if a.shape != b.shape or a.shape != m.shape:
        raise DimensionMismatch(f"shapes {a.shape}, {b.shape}, {m.shape} do not match")
    return float(np.sum(a * b * m))


def mu_norm(a: np.ndarray, mu) -> float:
    return float(np.sqrt(max(mu_inner(a, a, mu), 0.0)))


def contraction_modulus(gamma: float, lam: float) -> float:
    """Contraction factor gamma (1 - lambda) / (1 - gamma lambda) of the backup operator."""
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must lie in (0,1), got {gamma}")
    if not 0.0 <= lam < 1.0:
        raise DomainError(f"lambda must lie in [0,1), got {lam}")
    return gamma * (1.0 - lam) / (1.0 - gamma * lam)


def td_resolvent(mrp: Mrp, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form pieces of the multi-step backup operator.

    Returns (r_lam, P_lam) with  T V = r_lam + gamma P_lam V,  where

        r_lam = (I - lam gamma P)^{-1} rbar
        P_lam = (1 - lam) P (I - lam gamma P)^{-1}.

    Both follow from resumming the defining double series: summing the
    geometric tail over trajectory length m at fixed horizon t turns the
    reward part into a resolvent applied to rbar, and the bootstrap part
    into the stated polynomial in P (which commutes with its resolvent).
    """
    if not 0.0 <= lam < 1.0:
        raise DomainError(f"lambda must lie in [0,1), got {lam}")
    d = mrp.d
    A = np.eye(d) - lam * mrp.gamma * mrp.P
    try:
        r_lam = np.linalg.solve(A, mrp.rbar)
        P_lam = (1.0 - lam) * np.linalg.solve(A, mrp.P)
    except np.linalg.LinAlgError as exc:  # impossible for lam gamma < 1
        raise SolveFailure("backup resolvent is singular") from exc
    return r_lam, P_lam


def td_operator(mrp: Mrp, lam: float, V: np.ndarray) -> np.ndarray:
    """Apply the multi-step backup operator to a value vector in closed form."""
    r_lam, P_lam = td_resolvent(mrp, lam)
    return r_lam + mrp.gamma * P_lam @ np.asarray(V, dtype=float)


def mu_projection(J: np.ndarray, mu, W: np.ndarray, cutoff: float = 1e-10) -> np.ndarray:
    """Weighted orthogonal projection of W onto the column space of J.

    Minimizes the mu-weighted distance; implemented as an ordinary least
    squares problem after scaling rows by sqrt(mu), with singular values
    below ``cutoff`` times the largest treated as zero (rank-deficient J is
    fine).
    """
    J = np.asarray(J, dtype=float)
    W = np.asarray(W, dtype=float)
    root = np.sqrt(_mu_vector(mu))
    A = J * root[:, None]
    y = W * root
    coef, *_ = np.linalg.lstsq(A, y, rcond=cutoff)
    return J @ coef


def cyclic_chain(d: int, orientation: str = "backward") -> np.ndarray:
    """Lazy cyclic random walk: stay with probability 1/2, else shift by one.

    ``orientation`` picks the shift direction. The two matrices are each
    other's transposes; "backward" is the orientation under which the
    3-state divergence experiment reproduces its reference reward vector
    (checked in the tests).
    """
    if d < 2:
        raise DomainError("cyclic chain needs at least 2 states")
    S = np.zeros((d, d))
    for i in range(d):
        S[i, (i + 1) % d] = 1.0
    P = (S + np.eye(d)) / 2.0
    if orientation == "forward":
        return P
    if orientation == "backward":
        return P.T.copy()
    raise DomainError(f"unknown orientation {orientation!r}")


def random_chain(d: int, rng: np.random.Generator) -> np.ndarray:
    """Random row-stochastic matrix with strictly positive entries."""
    P = rng.uniform(0.1, 1.0, size=(d, d))
    return P / P.sum(axis=1, keepdims=True)


def save_mrp(mrp: Mrp, path: str | Path) -> None:
    payload = {
        "d": mrp.d,
        "P": mrp.P.ravel().tolist(),
        "rbar": mrp.rbar.tolist(),
        "gamma": mrp.gamma,
    }
    if mrp.reward_table is not None:
        payload["reward_table"] = mrp.reward_table.ravel().tolist()
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def load_mrp(path: str | Path) -> Mrp:
    """Read an MRP specification file (JSON; P and reward table row-major).

    A file may carry ``seed`` instead of ``P`` to request a randomly
    generated chain of size ``d``.
    """
    payload = json.loads(Path(path).read_text())
    d = int(payload["d"])
    if "P" in payload:
        P = np.asarray(payload["P"], dtype=float).reshape(d, d)
    elif "seed" in payload:
        P = random_chain(d, np.random.default_rng(int(payload["seed"])))
    else:
        raise DomainError("MRP file needs either 'P' or 'seed'")
    table = payload.get("reward_table")
    if table is not None:
        return Mrp(
            P=P,
            rbar=None,
            gamma=float(payload["gamma"]),
            reward_table=np.asarray(table, dtype=float).reshape(d, d),
        )
    rbar = np.asarray(payload["rbar"], dtype=float)
    return Mrp(P=P, rbar=rbar, gamma=float(payload["gamma"]))
