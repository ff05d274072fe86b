"""Drift vector fields with certified one-sided constants.

Every model carries constants (c1f, c2f, c3f, c4f, r_mono, c_growth,
n_growth) certifying, on sampled pairs:

* one-sided dissipativity   <F(b)-F(a), b-a>  <=  min(c1f - c2f u, c3f u),
  u = |b-a|^2;
* eventual strict monotonicity  <F(b)-F(a), b-a> <= -c4f u  whenever
  |a|, |b| >= r_mono;
* polynomial growth |F(x)| <= c_growth (1+|x|)^n_growth, same bound for the
  Jacobian norm.

The constants feed the pathwise contraction bounds, the absorbing-ball sizing
and the cluster-distance checks; they are deliberately conservative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractViolationError

__all__ = ["DriftConstants", "DriftModel", "DiffusionMatrix", "make_drift", "drift_names"]


@dataclass(frozen=True)
class DriftConstants:
    c1f: float
    c2f: float
    c3f: float
    c4f: float
    r_mono: float
    c_growth: float
    n_growth: int

    def __post_init__(self):
        for name in ("c1f", "c2f", "c3f", "c4f", "r_mono", "c_growth"):
            if not getattr(self, name) > 0:
                raise ContractViolationError(f"drift constant {name} must be positive")
        if self.n_growth < 1:
            raise ContractViolationError("n_growth must be >= 1")

    @property
    def c_bound(self) -> float:
        """Deterministic bound on pairwise distances of invariant-measure atoms."""
        return self.c1f / self.c2f


@dataclass(frozen=True)
class DriftModel:
    """Vector field with Jacobian and certified constants.

    ``evaluate`` and ``jacobian`` accept batched inputs (..., d);
    ``jacobian_apply(x, v)`` computes DF(x) v without materializing the
    matrix, which is the hot path of the variational flow.
    """

    name: str
    dim: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    constants: DriftConstants
    params: dict
    jacobian_apply: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    bounded_jacobian: bool = False
    jac_norm_bound: Callable[[float], float] | None = None

    def apply_jacobian(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.jacobian_apply is not None:
            return self.jacobian_apply(x, v)
        return np.einsum("...ij,...j->...i", self.jacobian(x), v)

    def jacobian_norm_on_ball(self, r: float) -> float:
        """Upper bound on |DF| over the ball |x| <= r (stiffness estimate)."""
        if self.jac_norm_bound is not None:
            return self.jac_norm_bound(r)
        c = self.constants
        return c.c_growth * (1.0 + r) ** c.n_growth


@dataclass(frozen=True)
class DiffusionMatrix:
    """Invertible noise intensity matrix with cached inverse and norms."""

    sigma: np.ndarray
    sigma_inv: np.ndarray
    op_norm: float
    inv_op_norm: float

    def __post_init__(self):
        d = self.sigma.shape[0]
        resid = self.sigma @ self.sigma_inv - np.eye(d)
        if np.linalg.norm(resid, 2) > 1e-10:
            raise ContractViolationError("sigma_inv is not an inverse of sigma to 1e-10")

    @classmethod
    def from_matrix(cls, sigma) -> "DiffusionMatrix":
        sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
        if sigma.shape[0] != sigma.shape[1]:
            raise ContractViolationError("sigma must be square")
        try:
            inv = np.linalg.inv(sigma)
        except np.linalg.LinAlgError as exc:
            raise ContractViolationError("sigma must be invertible") from exc
        return cls(
            sigma=sigma,
            sigma_inv=inv,
            op_norm=float(np.linalg.norm(sigma, 2)),
            inv_op_norm=float(np.linalg.norm(inv, 2)),
        )

    @classmethod
    def isotropic(cls, kappa: float, d: int) -> "DiffusionMatrix":
        if kappa <= 0:
            raise ContractViolationError("kappa must be positive")
        return cls.from_matrix(kappa * np.eye(d))

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]


# --------------------------------------------------------------------------
# registry


def _sq_norm(x: np.ndarray) -> np.ndarray:
    return np.sum(x * x, axis=-1, keepdims=True)


def _example_sec5(dim: int) -> DriftModel:
    # F(x) = x - x|x|^2.  With u = |b-a|^2 the cubic part obeys
    # <b|b|^2 - a|a|^2, b-a> >= max(u^2/4, (|a|^2+|b|^2) u / 2), so
    # <F(b)-F(a), b-a> <= u - u^2/4 <= 4 - u (c1f=4, c2f=1), <= u (c3f=1),
    # and <= -(r^2-1) u outside the ball of radius r = sqrt(2) (c4f=1).
    def evaluate(x):
        return x * (1.0 - _sq_norm(x))

    def jacobian(x):
        d = x.shape[-1]
        eye = np.eye(d)
        outer = x[..., :, None] * x[..., None, :]
        return eye * (1.0 - _sq_norm(x))[..., None] - 2.0 * outer

    def jacobian_apply(x, v):
        return v * (1.0 - _sq_norm(x)) - 2.0 * x * np.sum(x * v, axis=-1, keepdims=True)

    constants = DriftConstants(
        c1f=4.0, c2f=1.0, c3f=1.0, c4f=1.0, r_mono=math.sqrt(2.0), c_growth=3.0, n_growth=3
    )
    return DriftModel(
        name="example_sec5",
        dim=dim,
        evaluate=evaluate,
        jacobian=jacobian,
        constants=constants,
        params={},
        jacobian_apply=jacobian_apply,
        jac_norm_bound=lambda r: 1.0 + 3.0 * r * r,
    )


def _cubic(dim: int) -> DriftModel:
    # F(x) = -x|x|^2: globally monotone-decreasing cubic, one stable point at 0.
    def evaluate(x):
        return -x * _sq_norm(x)

    def jacobian(x):
        d = x.shape[-1]
        outer = x[..., :, None] * x[..., None, :]
        return -np.eye(d) * _sq_norm(x)[..., None] - 2.0 * outer

    def jacobian_apply(x, v):
        return -v * _sq_norm(x) - 2.0 * x * np.sum(x * v, axis=-1, keepdims=True)

    constants = DriftConstants(
        c1f=1.0, c2f=1.0, c3f=1.0, c4f=1.0, r_mono=1.0, c_growth=3.0, n_growth=3
    )
    return DriftModel(
        name="cubic",
        dim=dim,
        evaluate=evaluate,
        jacobian=jacobian,
        constants=constants,
        params={},
        jacobian_apply=jacobian_apply,
        jac_norm_bound=lambda r: 3.0 * r * r,
    )


def _linear(dim: int, matrix=None, rate: float | None = None) -> DriftModel:
    if matrix is None:
        a = -(1.0 if rate is None else float(rate)) * np.eye(dim)
    else:
        a = np.asarray(matrix, dtype=np.float64)
        if a.shape != (dim, dim):
            raise ContractViolationError(f"linear drift matrix must be {dim}x{dim}")
    sym_top = float(np.linalg.eigvalsh(0.5 * (a + a.T)).max())
    if sym_top >= 0:
        raise ContractViolationError(
            "linear drift requires a negative-definite symmetric part "
            f"(max symmetric eigenvalue {sym_top:.3g})"
        )
    op = float(np.linalg.norm(a, 2))

    def evaluate(x):
        return x @ a.T

    def jacobian(x):
        return np.broadcast_to(a, x.shape[:-1] + (dim, dim)).copy()

    def jacobian_apply(x, v):
        return v @ a.T

    constants = DriftConstants(
        c1f=1e-6,
        c2f=-sym_top,
        c3f=1e-6,
        c4f=-sym_top,
        r_mono=1.0,
        c_growth=max(op, 1e-6),
        n_growth=1,
    )
    return DriftModel(
        name="linear",
        dim=dim,
        evaluate=evaluate,
        jacobian=jacobian,
        constants=constants,
        params={"matrix": a.tolist()},
        jacobian_apply=jacobian_apply,
        bounded_jacobian=True,
        jac_norm_bound=lambda r: op,
    )


def _ou(dim: int, rate: float = 1.0) -> DriftModel:
    model = _linear(dim, rate=rate)
    return DriftModel(
        name="ou",
        dim=dim,
        evaluate=model.evaluate,
        jacobian=model.jacobian,
        constants=model.constants,
        params={"rate": rate},
        jacobian_apply=model.jacobian_apply,
        bounded_jacobian=True,
        jac_norm_bound=model.jac_norm_bound,
    )


_REGISTRY = {
    "example_sec5": _example_sec5,
    "cubic": _cubic,
    "linear": _linear,
    "ou": _ou,
}


def drift_names() -> list[str]:
    return sorted(_REGISTRY)


def make_drift(name: str, dim: int, **params) -> DriftModel:
    if name not in _REGISTRY:
        raise ContractViolationError(f"unknown drift {name!r}; known: {drift_names()}")
    if dim < 1:
        raise ContractViolationError("dimension must be >= 1")
    return _REGISTRY[name](dim, **params)
