"""Hessians, eigenvalues, conditioning and separability."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import InvalidArgument, NumericFailure, UndefinedResult
from .objectives import ObjectiveHandle

PENDULUM_FD_STEP = 1e-4
ANALYTIC_FD_STEP = 1e-5
RANK_TOL = 1e-10

_PROBE_CHUNK = 4096


class Conditioning(NamedTuple):
    kappa: float
    indefinite: bool


def _probe_values(f: ObjectiveHandle, probes: np.ndarray, workers: int = 1) -> np.ndarray:
    # fixed chunk boundaries keep results independent of the worker count
    chunks = [probes[i:i + _PROBE_CHUNK] for i in range(0, len(probes), _PROBE_CHUNK)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(f.evaluate_many, chunks))
    else:
        parts = [f.evaluate_many(c) for c in chunks]
    values = np.concatenate(parts)
    if not np.all(np.isfinite(values)):
        raise NumericFailure(f"{f.name}: non-finite value at a finite-difference probe")
    return values


def numeric_hessian(f: ObjectiveHandle, x, h: float = ANALYTIC_FD_STEP, workers: int = 1) -> np.ndarray:
    """Second-order central-difference Hessian, symmetrized.

    Diagonal entries use ``f(x+h e_i) - 2 f(x) + f(x-h e_i)``; off-diagonal
    entries the four-point stencil with step ``h`` along both axes.
    """
    if not h > 0:
        raise InvalidArgument("finite-difference step must be positive")
    x = np.asarray(x, dtype=float)
    d = f.dimension
    if x.shape != (d,):
        raise InvalidArgument(f"expected a point of dimension {d}, got shape {x.shape}")
    eye = h * np.eye(d)
    iu, ju = np.triu_indices(d, k=1)
    probes = np.concatenate([
        x[None, :],
        x + eye,
        x - eye,
        x + eye[iu] + eye[ju],
        x + eye[iu] - eye[ju],
        x - eye[iu] + eye[ju],
        x - eye[iu] - eye[ju],
    ])
    vals = _probe_values(f, probes, workers)
    f0 = vals[0]
    fp, fm = vals[1:d + 1], vals[d + 1:2 * d + 1]
    m = len(iu)
    pp, pm, mp, mm = (vals[2 * d + 1 + q * m: 2 * d + 1 + (q + 1) * m] for q in range(4))
    hess = np.zeros((d, d))
    hess[np.arange(d), np.arange(d)] = (fp - 2.0 * f0 + fm) / (h * h)
    off = (pp - pm - mp + mm) / (4.0 * h * h)
    hess[iu, ju] = off
    hess[ju, iu] = off
    return 0.5 * (hess + hess.T)


def jacobi_eigen(m, tol: float = 1e-14, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps rotate away every off-diagonal pair until the largest off-diagonal
    magnitude falls below ``tol * ||m||_F``. Returns ``(eigenvalues, V)`` with
    eigenvalues ascending and ``m ~= V diag(eigenvalues) V^T``.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgument("jacobi_eigen needs a square matrix")
    n = a.shape[0]
    scale = np.linalg.norm(a)
    if not np.isfinite(scale):
        raise NumericFailure("matrix contains non-finite entries")
    if np.abs(a - a.T).max(initial=0.0) > 1e-9 * max(scale, 1e-300):
        raise InvalidArgument("jacobi_eigen needs a symmetric matrix")
    # work on a unit-scale copy so tiny or huge matrices do not under/overflow
    peak = np.abs(a).max(initial=0.0)
    if peak == 0.0:
        return np.zeros(n), np.eye(n)
    a = 0.5 * (a + a.T) / peak
    v = np.eye(n)
    threshold = tol * np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.abs(a - np.diag(np.diag(a))).max(initial=0.0)
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= threshold * 1e-3:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        off = np.abs(a - np.diag(np.diag(a))).max(initial=0.0)
        if off > threshold:
            raise NumericFailure(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    eig = np.diag(a) * peak
    order = np.argsort(eig, kind="stable")
    return eig[order], v[:, order]


def condition_number(eigenvalues, rank_tol: float = RANK_TOL) -> Conditioning:
    """|lambda|_max / |lambda|_min, infinite when the smallest is numerically zero."""
    eig = np.asarray(eigenvalues, dtype=float).ravel()
    if eig.size == 0:
        raise InvalidArgument("need at least one eigenvalue")
    mags = np.abs(eig)
    big, small = mags.max(), mags.min()
    if big == 0.0:
        raise UndefinedResult("condition number of the zero matrix is undefined")
    indefinite = bool(eig.min() < 0.0 < eig.max())
    if small <= rank_tol * big:
        return Conditioning(math.inf, indefinite)
    return Conditioning(float(big / small), indefinite)


def separability_index(m) -> float:
    """Share of squared Frobenius mass sitting off the diagonal."""
    m = np.asarray(m, dtype=float)
    peak = np.abs(m).max(initial=0.0)
    if peak == 0.0:
        raise UndefinedResult("separability of the zero matrix is undefined")
    m = m / peak
    total = float(np.sum(m * m))
    diag = np.diag(m)
    return (total - float(diag @ diag)) / total


def _check_orthogonal(u: np.ndarray, v: np.ndarray) -> None:
    if abs(float(u @ v)) > 1e-10 * max(float(np.linalg.norm(u) * np.linalg.norm(v)), 1.0):
        raise InvalidArgument("slice basis vectors are not orthogonal")


def slice_restriction_matrix(u, v, k: int) -> np.ndarray:
    """Gram matrix of the basis vectors truncated to their first ``k`` coordinates."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise InvalidArgument("basis vectors must be 1-D with equal length")
    if not 1 <= k <= u.size:
        raise InvalidArgument(f"k must lie in [1, {u.size}]")
    _check_orthogonal(u, v)
    uk, vk = u[:k], v[:k]
    uv = float(uk @ vk)
    return np.array([[float(uk @ uk), uv], [uv, float(vk @ vk)]])


def plane_objective(f: ObjectiveHandle, center, u, v) -> ObjectiveHandle:
    """Restriction ``p -> f(center + p[0] u + p[1] v)`` as a 2-D handle."""
    center = np.asarray(center, dtype=float)
    basis = np.stack([np.asarray(u, dtype=float), np.asarray(v, dtype=float)])

    def batch(ps):
        return f.evaluate_many(center + np.asarray(ps, dtype=float) @ basis)

    return ObjectiveHandle(
        dimension=2,
        fn=lambda p, seed=0: float(batch(np.asarray(p, dtype=float)[None, :])[0]),
        batch_fn=batch,
        name=f"{f.name}|plane",
    )


def slice_condition_number(f: ObjectiveHandle, center, u, v, h: float = ANALYTIC_FD_STEP,
                           rank_tol: float = RANK_TOL) -> Conditioning:
    """Conditioning of the 2x2 Hessian of ``f`` restricted to the slice plane."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_orthogonal(u, v)
    hess = numeric_hessian(plane_objective(f, center, u, v), np.zeros(2), h)
    return condition_number(np.linalg.eigvalsh(hess), rank_tol)


@dataclass
class HessianReport:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    kappa: float
    indefinite: bool
    separability_index: float

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def kappa_infinite(self) -> bool:
        return math.isinf(self.kappa)

    def to_dict(self, include_matrix: bool = False) -> dict:
        out = {
            "dimension": self.dimension,
            "eigenvalues": [float(e) for e in self.eigenvalues],
            "kappa": "inf" if self.kappa_infinite else float(self.kappa),
            "indefinite": bool(self.indefinite),
            "separability_index": float(self.separability_index),
        }
        if include_matrix:
            out["matrix"] = self.matrix.tolist()
        return out

    def to_json(self, include_matrix: bool = False) -> str:
        return json.dumps(self.to_dict(include_matrix), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "HessianReport":
        kappa = math.inf if data["kappa"] == "inf" else float(data["kappa"])
        matrix = data.get("matrix")
        if matrix is None:
            matrix = np.full((data["dimension"], data["dimension"]), np.nan)
        return cls(
            matrix=np.asarray(matrix, dtype=float),
            eigenvalues=np.asarray(data["eigenvalues"], dtype=float),
            kappa=kappa,
            indefinite=bool(data["indefinite"]),
            separability_index=float(data["separability_index"]),
        )


def hessian_report(f: ObjectiveHandle, x, h: float = ANALYTIC_FD_STEP,
                   rank_tol: float = RANK_TOL, workers: int = 1,
                   matrix: Optional[np.ndarray] = None) -> HessianReport:
    """Numeric Hessian at ``x`` (or the supplied ``matrix``) with its spectrum."""
    hess = numeric_hessian(f, x, h, workers) if matrix is None else np.asarray(matrix, dtype=float)
    eig, _ = jacobi_eigen(hess)
    cond = condition_number(eig, rank_tol)
    return HessianReport(
        matrix=hess,
        eigenvalues=eig,
        kappa=cond.kappa,
        indefinite=cond.indefinite,
        separability_index=separability_index(hess),
    )
