"""Closed-form fitting of granulated invariant models.

The granulated objective accumulates, over granules k, the squared
invariant residual (v_k^T (F_k - Y_k))^2 plus gamma * ||params||^2 per
granule, so the regularizer totals gamma * m. Because each granule's
invariant matrix is the rank-one outer product v_k v_k^T, the normal
equations only need the compressed quantities

    u_k = X_k^T v_k   (linear)   or   q_k = K_k^T v_k   (kernel),
    s_k = v_k^T 1,    t_k = v_k^T Y_k,

and the system matrix is a sum of outer products plus gamma*m*I. The
full V-matrix is never materialized here; `fit_vsvm` keeps the dense
reference construction for cross-checks, and `fit_lssvm` is the
identity-weighted degenerate mode (singleton granules, unit predicates,
so its effective regularizer is gamma * l).
"""

import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .dataset import Dataset, ScalingParams
from .errors import DataError, NumericError
from .granulation import Granulation
from .invariants import GranuleInvariant
from .kernels import KernelSpec, gram_block
from .serialize import dump_document, load_document

KERNEL_SYSTEM_ROW_CAP = 15_000
VSVM_ROW_CAP = 10_000
_PSD_CHECK_LIMIT = 1_500
_FD_STEP = 1e-6
_B_DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class FitDiagnostics:
    """Health metrics recorded with every fit."""

    objective_value: float
    gradient_norm: float
    system_condition_hint: float
    wall_time: float
    bias_fallback: bool = False


@dataclass(frozen=True)
class LinearModel:
    """f(x) = w^T x + b, with the two half-solutions it was built from."""

    w: np.ndarray
    b: float
    w_b: np.ndarray
    w_c: np.ndarray
    gamma: float
    m: int
    seed: int
    scaling: ScalingParams

    def __post_init__(self):
        for name in ("w", "w_b", "w_c"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite entries in {name}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not math.isfinite(self.b):
            raise NumericError("non-finite bias")
        recon = self.w_b - self.b * self.w_c
        scale = 1.0 + float(np.max(np.abs(recon)))
        if float(np.max(np.abs(self.w - recon))) > 1e-12 * scale:
            raise NumericError("w does not match w_b - b*w_c")


@dataclass(frozen=True)
class KernelModel:
    """f(x) = A^T K(training_points, x) + c."""

    A: np.ndarray
    c: float
    A_b: np.ndarray
    A_c: np.ndarray
    training_points: np.ndarray
    kernel: KernelSpec
    gamma: float
    m: int
    seed: int
    scaling: ScalingParams

    def __post_init__(self):
        for name in ("A", "A_b", "A_c"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite entries in {name}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        points = np.asarray(self.training_points, dtype=np.float64).copy()
        points.flags.writeable = False
        object.__setattr__(self, "training_points", points)
        if self.A.shape[0] != points.shape[0]:
            raise DataError("coefficient length does not match stored training rows")
        if not math.isfinite(self.c):
            raise NumericError("non-finite bias")
        recon = self.A_b - self.c * self.A_c
        scale = 1.0 + float(np.max(np.abs(recon)))
        if float(np.max(np.abs(self.A - recon))) > 1e-12 * scale:
            raise NumericError("A does not match A_b - c*A_c")


def _factor_solve(M: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky solve with one refinement step; returns (z, condition hint).

    The hint is the squared ratio of the extreme Cholesky diagonal
    entries, a cheap lower bound on the 2-norm condition number.
    """
    M = np.asarray(M, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if not np.all(np.isfinite(M)) or not np.all(np.isfinite(rhs)):
        raise NumericError("non-finite entries in the linear system")
    try:
        factor = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(f"Cholesky factorization failed: {exc}") from None
    z = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    z += scipy.linalg.cho_solve(factor, rhs - M @ z, check_finite=False)
    diag = np.diag(factor[0])
    return z, float((diag.max() / diag.min()) ** 2)


def solve_spd(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve M z = rhs for a symmetric positive definite M.

    One Cholesky factorization is shared across all right-hand sides
    (rhs may be a vector or a column-stacked matrix), followed by a
    single iterative-refinement step to push the residual down to
    machine level.
    """
    return _factor_solve(M, rhs)[0]


def _check_alignment(granulation: Granulation, invariants: list[GranuleInvariant]) -> None:
    if len(invariants) != granulation.m:
        raise DataError("one GranuleInvariant per granule required")
    for k, inv in enumerate(invariants):
        if inv.granule_index != k:
            raise DataError(f"invariant {k} carries granule_index {inv.granule_index}")
        if inv.v.shape[0] != granulation.granule_members[k].size:
            raise DataError(f"invariant {k} length does not match its granule")


def _accumulations(
    design: np.ndarray,
    labels: np.ndarray,
    granulation: Granulation,
    invariants: list[GranuleInvariant],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-granule compressed quantities, in granule-index order.

    Returns (P, s, t) where row k of P is design_k^T v_k, s_k = sum(v_k),
    t_k = v_k^T Y_k.
    """
    m = granulation.m
    P = np.empty((m, design.shape[1]), dtype=np.float64)
    s = np.empty(m, dtype=np.float64)
    t = np.empty(m, dtype=np.float64)
    for k, members in enumerate(granulation.granule_members):
        v = invariants[k].v
        P[k] = v @ design[members]
        s[k] = v.sum()
        t[k] = invariants[k].target
    return P, s, t


def _solve_accumulated(
    P: np.ndarray, s: np.ndarray, t: np.ndarray, gamma_eff: float
) -> tuple[np.ndarray, np.ndarray, float, bool, float]:
    """Shared closed form: half-solutions, bias, fallback flag, cond hint."""
    dim = P.shape[1]
    M = P.T @ P
    M[np.diag_indices(dim)] += gamma_eff
    rhs = np.column_stack([P.T @ t, P.T @ s])
    half, cond = _factor_solve(M, rhs)
    p_b, p_c = half[:, 0], half[:, 1]
    sP = s @ P
    numerator = float(s @ t - sP @ p_b)
    denominator = float(s @ s - sP @ p_c)
    fallback = abs(denominator) < _B_DEGENERACY_TOL * (1.0 + abs(numerator))
    bias = 0.0 if fallback else numerator / denominator
    return p_b, p_c, bias, fallback, cond


def _rank_one_objective(
    P: np.ndarray, s: np.ndarray, t: np.ndarray, gamma_eff: float, p: np.ndarray, bias: float
) -> float:
    resid = P @ p + bias * s - t
    return float(resid @ resid + gamma_eff * (p @ p))


def _rank_one_fd_gradient_norm(
    P: np.ndarray, s: np.ndarray, t: np.ndarray, gamma_eff: float, p: np.ndarray, bias: float
) -> float:
    """Central finite differences of the accumulated objective, vectorized.

    Perturbing coordinate i of p shifts the residual vector by h*P[:, i],
    so all coordinate perturbations evaluate in one pass (column-chunked
    to bound memory).
    """
    h = _FD_STEP
    base = P @ p
    resid = base + bias * s - t
    p_sq = float(p @ p)
    grad = np.empty(p.shape[0] + 1, dtype=np.float64)
    chunk = max(1, min(p.shape[0], 4096))
    for start in range(0, p.shape[0], chunk):
        cols = P[:, start : start + chunk]
        plus = ((resid[:, None] + h * cols) ** 2).sum(axis=0)
        minus = ((resid[:, None] - h * cols) ** 2).sum(axis=0)
        reg_plus = gamma_eff * (p_sq + 2.0 * h * p[start : start + chunk] + h * h)
        reg_minus = gamma_eff * (p_sq - 2.0 * h * p[start : start + chunk] + h * h)
        grad[start : start + chunk] = ((plus + reg_plus) - (minus + reg_minus)) / (2.0 * h)
    up = base + (bias + h) * s - t
    down = base + (bias - h) * s - t
    grad[-1] = float((up @ up - down @ down) / (2.0 * h))
    return float(np.linalg.norm(grad))


def _dense_fd_gradient_norm(objective, params: np.ndarray, bias: float) -> float:
    """Plain per-coordinate central differences for the dense reference modes."""
    h = _FD_STEP
    theta = np.append(params, bias)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = h
        grad[i] = (objective(theta + step) - objective(theta - step)) / (2.0 * h)
    return float(np.linalg.norm(grad))


def _identity_scaling(n: int) -> ScalingParams:
    return ScalingParams(np.zeros(n), np.ones(n))


def fit_linear_lugsi(
    data: Dataset,
    granulation: Granulation,
    invariants: list[GranuleInvariant],
    gamma: float,
    scaling: ScalingParams | None = None,
) -> tuple[LinearModel, FitDiagnostics]:
    """Closed-form linear fit from per-granule rank-one invariants.

    Solves (sum_k u_k u_k^T + gamma*m*I) applied to the two right-hand
    sides sum_k t_k u_k and sum_k s_k u_k, then recovers the bias from
    the accumulated bias stationarity equation. A near-zero bias
    denominator falls back to b = 0 with the diagnostics flag set.
    """
    started = time.perf_counter()
    if not gamma > 0.0:
        raise DataError("gamma must be positive")
    if granulation.assignments.shape[0] != data.l:
        raise DataError("granulation does not match the dataset")
    _check_alignment(granulation, invariants)

    P, s, t = _accumulations(data.features, data.labels, granulation, invariants)
    gamma_eff = gamma * granulation.m
    w_b, w_c, b, fallback, cond = _solve_accumulated(P, s, t, gamma_eff)
    w = w_b - b * w_c
    model = LinearModel(
        w=w,
        b=b,
        w_b=w_b,
        w_c=w_c,
        gamma=gamma,
        m=granulation.m,
        seed=granulation.seed,
        scaling=scaling if scaling is not None else _identity_scaling(data.n),
    )
    diagnostics = FitDiagnostics(
        objective_value=_rank_one_objective(P, s, t, gamma_eff, w, b),
        gradient_norm=_rank_one_fd_gradient_norm(P, s, t, gamma_eff, w, b),
        system_condition_hint=cond,
        wall_time=time.perf_counter() - started,
        bias_fallback=fallback,
    )
    return model, diagnostics


def fit_kernel_lugsi(
    data: Dataset,
    granulation: Granulation,
    invariants: list[GranuleInvariant],
    kernel: KernelSpec,
    gamma: float,
    scaling: ScalingParams | None = None,
    max_system_rows: int = KERNEL_SYSTEM_ROW_CAP,
) -> tuple[KernelModel, FitDiagnostics]:
    """Kernel-space analogue of the linear fit.

    The compressed vectors are q_k = K_k^T v_k against the full training
    set, so the system is l x l regardless of the granule count; the row
    cap guards the quadratic memory.
    """
    started = time.perf_counter()
    if not gamma > 0.0:
        raise DataError("gamma must be positive")
    if granulation.assignments.shape[0] != data.l:
        raise DataError("granulation does not match the dataset")
    _check_alignment(granulation, invariants)
    if data.l > max_system_rows:
        raise DataError(
            f"kernel system is {data.l}x{data.l}, above the cap {max_system_rows}; "
            "raise max_system_rows explicitly if you really want this"
        )

    K = gram_block(kernel, data.features, data.features)
    P, s, t = _accumulations(K, data.labels, granulation, invariants)
    gamma_eff = gamma * granulation.m
    A_b, A_c, c, fallback, cond = _solve_accumulated(P, s, t, gamma_eff)
    A = A_b - c * A_c
    model = KernelModel(
        A=A,
        c=c,
        A_b=A_b,
        A_c=A_c,
        training_points=data.features,
        kernel=kernel,
        gamma=gamma,
        m=granulation.m,
        seed=granulation.seed,
        scaling=scaling if scaling is not None else _identity_scaling(data.n),
    )
    diagnostics = FitDiagnostics(
        objective_value=_rank_one_objective(P, s, t, gamma_eff, A, c),
        gradient_norm=_rank_one_fd_gradient_norm(P, s, t, gamma_eff, A, c),
        system_condition_hint=cond,
        wall_time=time.perf_counter() - started,
        bias_fallback=fallback,
    )
    return model, diagnostics


def fit_lssvm(
    data: Dataset,
    gamma: float,
    kernel: KernelSpec | None = None,
    scaling: ScalingParams | None = None,
    seed: int = 0,
    max_system_rows: int = KERNEL_SYSTEM_ROW_CAP,
) -> tuple[LinearModel | KernelModel, FitDiagnostics]:
    """Identity-weighted least-squares fit (unit predicates, singleton granules).

    Equivalent by construction to the granulated fit with m = l and every
    v entry forced to 1, so the effective regularizer is gamma * l; it is
    computed directly from the design matrix for speed. A kernel spec
    switches to the kernel parameterization.
    """
    started = time.perf_counter()
    if not gamma > 0.0:
        raise DataError("gamma must be positive")
    labels = data.labels.astype(np.float64)
    ones = np.ones(data.l)
    gamma_eff = gamma * data.l
    if kernel is None:
        design = data.features
    else:
        if data.l > max_system_rows:
            raise DataError(
                f"kernel system is {data.l}x{data.l}, above the cap {max_system_rows}"
            )
        design = gram_block(kernel, data.features, data.features)
    # singleton granules with unit predicates: P rows are the design rows
    p_b, p_c, bias, fallback, cond = _solve_accumulated(design, ones, labels, gamma_eff)
    params = p_b - bias * p_c
    scaling = scaling if scaling is not None else _identity_scaling(data.n)
    if kernel is None:
        model: LinearModel | KernelModel = LinearModel(
            w=params, b=bias, w_b=p_b, w_c=p_c,
            gamma=gamma, m=data.l, seed=seed, scaling=scaling,
        )
    else:
        model = KernelModel(
            A=params, c=bias, A_b=p_b, A_c=p_c,
            training_points=data.features, kernel=kernel,
            gamma=gamma, m=data.l, seed=seed, scaling=scaling,
        )
    diagnostics = FitDiagnostics(
        objective_value=_rank_one_objective(design, ones, labels, gamma_eff, params, bias),
        gradient_norm=_rank_one_fd_gradient_norm(design, ones, labels, gamma_eff, params, bias),
        system_condition_hint=cond,
        wall_time=time.perf_counter() - started,
        bias_fallback=fallback,
    )
    return model, diagnostics


def fit_vsvm(
    data: Dataset,
    V: np.ndarray,
    gamma: float,
    kernel: KernelSpec | None = None,
    scaling: ScalingParams | None = None,
    seed: int = 0,
    max_rows: int = VSVM_ROW_CAP,
) -> tuple[LinearModel | KernelModel, FitDiagnostics]:
    """Dense reference fit weighting residuals by a full V-matrix.

    Minimizes (F - Y)^T V (F - Y) + gamma * ||params||^2 with no rank-one
    shortcut; kept for equivalence cross-checks and small problems.
    """
    started = time.perf_counter()
    if not gamma > 0.0:
        raise DataError("gamma must be positive")
    if data.l > max_rows:
        raise DataError(f"V-matrix mode refuses l={data.l} rows (cap {max_rows})")
    V = np.asarray(V, dtype=np.float64)
    if V.shape != (data.l, data.l):
        raise DataError("V must be an l x l matrix")
    scale = 1.0 + float(np.max(np.abs(V)))
    if float(np.max(np.abs(V - V.T))) > 1e-12 * scale:
        raise DataError("V must be symmetric")
    if data.l <= _PSD_CHECK_LIMIT:
        smallest = float(scipy.linalg.eigvalsh(V, subset_by_index=(0, 0))[0])
        if smallest < -1e-8:
            raise DataError(f"V is not positive semidefinite (eigenvalue {smallest:.3e})")

    labels = data.labels.astype(np.float64)
    ones = np.ones(data.l)
    if kernel is None:
        design = data.features
    else:
        design = gram_block(kernel, data.features, data.features)
    VD = V @ design
    M = design.T @ VD
    M[np.diag_indices(M.shape[0])] += gamma
    rhs = np.column_stack([design.T @ (V @ labels), design.T @ (V @ ones)])
    half, cond = _factor_solve(M, rhs)
    p_b, p_c = half[:, 0], half[:, 1]
    oV = ones @ V
    numerator = float(oV @ labels - (oV @ design) @ p_b)
    denominator = float(oV @ ones - (oV @ design) @ p_c)
    fallback = abs(denominator) < _B_DEGENERACY_TOL * (1.0 + abs(numerator))
    bias = 0.0 if fallback else numerator / denominator
    params = p_b - bias * p_c

    def objective(theta: np.ndarray) -> float:
        resid = design @ theta[:-1] + theta[-1] - labels
        return float(resid @ (V @ resid) + gamma * (theta[:-1] @ theta[:-1]))

    scaling = scaling if scaling is not None else _identity_scaling(data.n)
    if kernel is None:
        model: LinearModel | KernelModel = LinearModel(
            w=params, b=bias, w_b=p_b, w_c=p_c,
            gamma=gamma, m=1, seed=seed, scaling=scaling,
        )
    else:
        model = KernelModel(
            A=params, c=bias, A_b=p_b, A_c=p_c,
            training_points=data.features, kernel=kernel,
            gamma=gamma, m=1, seed=seed, scaling=scaling,
        )
    diagnostics = FitDiagnostics(
        objective_value=objective(np.append(params, bias)),
        gradient_norm=_dense_fd_gradient_norm(objective, params, bias),
        system_condition_hint=cond,
        wall_time=time.perf_counter() - started,
        bias_fallback=fallback,
    )
    return model, diagnostics


def decision_values(model: LinearModel | KernelModel, points: np.ndarray) -> np.ndarray:
    """f(x) for a batch of already-scaled points."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DataError("points must be a 2-d matrix")
    if isinstance(model, LinearModel):
        if points.shape[1] != model.w.shape[0]:
            raise DataError(
                f"dimension mismatch: points have {points.shape[1]} features, "
                f"model expects {model.w.shape[0]}"
            )
        return points @ model.w + model.b
    if points.shape[1] != model.training_points.shape[1]:
        raise DataError(
            f"dimension mismatch: points have {points.shape[1]} features, "
            f"model expects {model.training_points.shape[1]}"
        )
    return gram_block(model.kernel, points, model.training_points) @ model.A + model.c


def decision_value(model: LinearModel | KernelModel, point) -> float:
    """f(x) for one already-scaled point."""
    point = np.asarray(point, dtype=np.float64)
    if point.ndim != 1:
        raise DataError("point must be a vector")
    return float(decision_values(model, point[None, :])[0])


def predict_labels(model: LinearModel | KernelModel, points: np.ndarray) -> np.ndarray:
    """Label 1 iff f(x) >= 0.5 (the step function is 1 at 0)."""
    return (decision_values(model, points) >= 0.5).astype(np.int64)


def predict_label(model: LinearModel | KernelModel, point) -> int:
    return int(decision_value(model, point) >= 0.5)


_FORMAT_VERSION = 1


def model_document(model: LinearModel | KernelModel) -> dict:
    """Serializable description of a fitted model (versioned)."""
    doc: dict = {"format_version": _FORMAT_VERSION}
    if isinstance(model, LinearModel):
        doc["model_kind"] = "linear"
        doc["kernel"] = None
    else:
        doc["model_kind"] = "kernel"
        doc["kernel"] = {
            "kind": model.kernel.kind,
            "delta": model.kernel.delta,
            "cro_gamma": model.kernel.cro_gamma,
        }
    doc["gamma"] = model.gamma
    doc["m"] = model.m
    doc["seed"] = model.seed
    doc["scaling"] = {
        "minimum": model.scaling.minimum,
        "maximum": model.scaling.maximum,
    }
    if isinstance(model, LinearModel):
        doc["w"] = model.w
        doc["b"] = model.b
        doc["w_b"] = model.w_b
        doc["w_c"] = model.w_c
    else:
        doc["A"] = model.A
        doc["c"] = model.c
        doc["A_b"] = model.A_b
        doc["A_c"] = model.A_c
        doc["training_points"] = model.training_points
    return doc


def save_model(model: LinearModel | KernelModel, path) -> None:
    Path(path).write_text(dump_document(model_document(model)), encoding="utf-8")


def load_model(path) -> LinearModel | KernelModel:
    """Rebuild a model from its serialized document (bitwise round-trip)."""
    doc = load_document(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != _FORMAT_VERSION:
        raise DataError(f"unsupported model format version {doc.get('format_version')!r}")
    scaling = ScalingParams(
        np.asarray(doc["scaling"]["minimum"], dtype=np.float64),
        np.asarray(doc["scaling"]["maximum"], dtype=np.float64),
    )
    if doc["model_kind"] == "linear":
        return LinearModel(
            w=np.asarray(doc["w"], dtype=np.float64),
            b=float(doc["b"]),
            w_b=np.asarray(doc["w_b"], dtype=np.float64),
            w_c=np.asarray(doc["w_c"], dtype=np.float64),
            gamma=float(doc["gamma"]),
            m=int(doc["m"]),
            seed=int(doc["seed"]),
            scaling=scaling,
        )
    if doc["model_kind"] == "kernel":
        spec = KernelSpec(
            kind=doc["kernel"]["kind"],
            delta=float(doc["kernel"]["delta"]),
            cro_gamma=float(doc["kernel"]["cro_gamma"]),
        )
        return KernelModel(
            A=np.asarray(doc["A"], dtype=np.float64),
            c=float(doc["c"]),
            A_b=np.asarray(doc["A_b"], dtype=np.float64),
            A_c=np.asarray(doc["A_c"], dtype=np.float64),
            training_points=np.asarray(doc["training_points"], dtype=np.float64),
            kernel=spec,
            gamma=float(doc["gamma"]),
            m=int(doc["m"]),
            seed=int(doc["seed"]),
            scaling=scaling,
        )
    raise DataError(f"unknown model kind {doc['model_kind']!r}")
