"""Black-box objective handles and the closed-form test functions.

Every objective in the package is wrapped in an :class:`ObjectiveHandle`.
Cost-like functions (``quadratic_k``, ``rastrigin``, pendulum tasks) are
minimized; the bimodal function is reward-like and flagged ``sense="max"``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgument

# exp(-700) is still a normal double; anything beyond underflows to zero anyway
_EXP_CLAMP = 700.0


def _as_vector(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidArgument(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


def _readonly(x) -> Optional[np.ndarray]:
    if x is None:
        return None
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ObjectiveHandle:
    """A deterministic scalar function of a d-vector plus optional metadata.

    ``fn(x, seed)`` computes the value. ``batch_fn``, when given, maps an
    ``(n, d)`` array to ``n`` values and must agree bit-for-bit with ``fn``;
    it only exists so grids and optimizers can avoid Python-level loops.
    """

    dimension: int
    fn: Callable[[np.ndarray, int], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    known_optimum: Optional[np.ndarray] = None
    batch_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    deterministic: bool = True
    sense: str = "min"
    name: str = "objective"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 1:
            raise InvalidArgument("dimension must be positive")
        if self.sense not in ("min", "max"):
            raise InvalidArgument(f"sense must be 'min' or 'max', got {self.sense!r}")
        object.__setattr__(self, "known_optimum", _readonly(self.known_optimum))
        if self.known_optimum is not None and self.known_optimum.shape != (self.dimension,):
            raise InvalidArgument("known_optimum has the wrong dimension")

    def _check(self, x) -> np.ndarray:
        x = _as_vector(x)
        if x.shape[0] != self.dimension:
            raise InvalidArgument(
                f"{self.name}: expected dimension {self.dimension}, got {x.shape[0]}")
        return x

    def evaluate(self, x, seed: int = 0) -> float:
        return float(self.fn(self._check(x), seed))

    def __call__(self, x, seed: int = 0) -> float:
        return self.evaluate(x, seed)

    def evaluate_many(self, xs, seeds=None) -> np.ndarray:
        """Evaluate each row of ``xs``; ``seeds`` is one seed per row."""
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 2 or xs.shape[1] != self.dimension:
            raise InvalidArgument(
                f"{self.name}: expected shape (n, {self.dimension}), got {xs.shape}")
        if self.batch_fn is not None and (self.deterministic or seeds is None):
            return np.asarray(self.batch_fn(xs), dtype=float)
        if seeds is None:
            seeds = [0] * len(xs)
        return np.array([self.fn(x, int(s)) for x, s in zip(xs, seeds)], dtype=float)


@dataclass(frozen=True)
class QuadraticKSpec:
    """Parameters of ||x[:k]||^2 + eps * ||x[k:]||^2."""

    d: int
    k: int
    eps: float = 0.0

    def __post_init__(self):
        if self.d < 1:
            raise InvalidArgument("d must be positive")
        if not 1 <= self.k <= self.d:
            raise InvalidArgument(f"k must lie in [1, d]; got k={self.k}, d={self.d}")
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise InvalidArgument("eps must be a finite nonnegative number")

    def hessian_diagonal(self) -> np.ndarray:
        diag = np.full(self.d, 2.0 * self.eps)
        diag[: self.k] = 2.0
        return diag

    def condition_number(self) -> float:
        """Closed-form kappa: 1/eps for 0 < k < d, 1 for k = d."""
        if self.k == self.d:
            return 1.0
        return math.inf if self.eps == 0 else 1.0 / self.eps


def quadratic_k_eval(x, spec: QuadraticKSpec) -> float:
    x = _as_vector(x)
    if x.shape[0] != spec.d:
        raise InvalidArgument(f"expected dimension {spec.d}, got {x.shape[0]}")
    return float(_quadratic_k_batch(x[None, :], spec)[0])


def _quadratic_k_batch(xs: np.ndarray, spec: QuadraticKSpec) -> np.ndarray:
    head, tail = xs[:, : spec.k], xs[:, spec.k:]
    return np.einsum("ij,ij->i", head, head) + spec.eps * np.einsum("ij,ij->i", tail, tail)


def rastrigin_eval(x) -> float:
    x = _as_vector(x)
    if x.size < 1:
        raise InvalidArgument("rastrigin needs d >= 1")
    return float(_rastrigin_batch(x[None, :])[0])


def _rastrigin_batch(xs: np.ndarray) -> np.ndarray:
    return 10.0 * xs.shape[1] + np.sum(xs * xs - 10.0 * np.cos(2.0 * np.pi * xs), axis=1)


def _gauss(sq_norm):
    half = 0.5 * np.asarray(sq_norm, dtype=float)
    return np.where(half < _EXP_CLAMP, np.exp(-np.minimum(half, _EXP_CLAMP)), 0.0)


def bimodal_terms(x) -> tuple[float, float]:
    """The two mode contributions: exp(-|x-1|^2/2) and 0.8 exp(-|x+1|^2/2)."""
    x = _as_vector(x)
    a = x - 1.0
    b = x + 1.0
    return float(_gauss(np.dot(a, a))), float(0.8 * _gauss(np.dot(b, b)))


def bimodal_eval(x) -> float:
    return float(_bimodal_batch(_as_vector(x)[None, :])[0])


def _bimodal_batch(xs: np.ndarray) -> np.ndarray:
    a = xs - 1.0
    b = xs + 1.0
    return (_gauss(np.einsum("ij,ij->i", a, a))
            + 0.8 * _gauss(np.einsum("ij,ij->i", b, b)))


def make_objective(kind: str, **params) -> ObjectiveHandle:
    """Build a handle for ``quadratic_k`` (d, k, eps), ``rastrigin`` (d) or ``bimodal`` (d)."""
    if kind == "quadratic_k":
        try:
            spec = QuadraticKSpec(int(params["d"]), int(params["k"]), float(params.get("eps", 0.0)))
        except KeyError as exc:
            raise InvalidArgument(f"quadratic_k requires parameter {exc}") from None
        diag = spec.hessian_diagonal()
        return ObjectiveHandle(
            dimension=spec.d,
            fn=lambda x, seed=0: quadratic_k_eval(x, spec),
            gradient=lambda x: diag * np.asarray(x, dtype=float),
            hessian=lambda x: np.diag(diag),
            known_optimum=np.zeros(spec.d),
            batch_fn=lambda xs: _quadratic_k_batch(xs, spec),
            name="quadratic_k",
            params={"d": spec.d, "k": spec.k, "eps": spec.eps},
        )
    if kind in ("rastrigin", "bimodal"):
        try:
            d = int(params["d"])
        except KeyError:
            raise InvalidArgument(f"{kind} requires parameter 'd'") from None
        if d < 1:
            raise InvalidArgument("d must be positive")
        if kind == "rastrigin":
            return ObjectiveHandle(
                dimension=d,
                fn=lambda x, seed=0: rastrigin_eval(x),
                gradient=lambda x: 2.0 * x + 20.0 * np.pi * np.sin(2.0 * np.pi * x),
                hessian=lambda x: np.diag(2.0 + 40.0 * np.pi ** 2 * np.cos(2.0 * np.pi * x)),
                known_optimum=np.zeros(d),
                batch_fn=_rastrigin_batch,
                name="rastrigin",
                params={"d": d},
            )
        return ObjectiveHandle(
            dimension=d,
            fn=lambda x, seed=0: bimodal_eval(x),
            known_optimum=np.ones(d),
            batch_fn=_bimodal_batch,
            sense="max",
            name="bimodal",
            params={"d": d},
        )
    raise InvalidArgument(f"unknown objective kind {kind!r}")
