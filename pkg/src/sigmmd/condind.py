"""Conditional embeddings and the Hilbert-Schmidt conditional-independence
criterion for stochastic processes.

All statistics operate on double-centered signature-kernel Gram matrices of
the full-horizon paths. The conditional criterion is the three-trace
estimator

    H_hat = 1/m^2 { tr(Kx Ky) - 2 tr(Kx A Ky) + tr(Kx A Ky A) },
    A = Kz (Kz + eps I)^-2 Kz,

with every K double-centered; it vanishes in population iff X and Y are
conditionally independent given Z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ValidationError
from .paths import Ensemble, Path
from .sigkernel import DEFAULT_REFINEMENT, first_order_gram


@dataclass(frozen=True)
class CiStatistic:
    """Conditional-dependence statistic with its calibration.

    In permutation mode p_value is the add-one permutation p-value. In
    threshold mode it degenerates to 1.0 (statistic below the removal
    threshold, treated as independent) or 0.0.
    """

    h_value: float
    epsilon: float
    p_value: float

    def to_dict(self) -> dict:
        return {
            "h_value": float(self.h_value),
            "epsilon": float(self.epsilon),
            "p_value": float(self.p_value),
        }


def _center(K: np.ndarray) -> np.ndarray:
    # HKH with H = I - 11'/m, computed without forming H
    row = K.mean(axis=0, keepdims=True)
    col = K.mean(axis=1, keepdims=True)
    return K - row - col + K.mean()


def conditional_kme_weights(X: Ensemble, x_query: Path, lam: float) -> np.ndarray:
    """Coefficients of the conditional-embedding estimate at a query path.

    Returns alpha = (K^xx + m lam I)^-1 k^x, the weights of the estimated
    conditional embedding in the span of the sample feature maps.
    """
    if not lam > 0:
        raise ValidationError(f"lam must be positive, got {lam}")
    query = Ensemble(x_query.times, x_query.values[None])
    K = first_order_gram(X, X)
    k = first_order_gram(X, query)[:, 0]
    m = X.n_samples
    try:
        return np.linalg.solve(K + m * lam * np.eye(m), k)
    except np.linalg.LinAlgError as exc:
        raise NumericError("regularized Gram solve failed") from exc


def hsic_criterion(
    X: Ensemble, Y: Ensemble, refinement: int = DEFAULT_REFINEMENT
) -> float:
    """Unconditional dependence statistic tr(Kx~ Ky~)/m^2."""
    if X.n_samples != Y.n_samples:
        raise ValidationError("ensembles must share the sample count")
    Kx = _center(first_order_gram(X, X, refinement=refinement))
    Ky = _center(first_order_gram(Y, Y, refinement=refinement))
    m = X.n_samples
    return float(np.sum(Kx * Ky.T) / m**2)


def _hs_stat(Kx: np.ndarray, Ky: np.ndarray, Kz: np.ndarray, epsilon: float) -> float:
    """Three-trace conditional criterion on centered Gram matrices."""
    m = Kx.shape[0]
    B = np.linalg.solve(Kz + epsilon * np.eye(m), Kz)
    A = B.T @ B  # Kz (Kz + eps I)^-2 Kz
    KxA = Kx @ A
    t1 = np.sum(Kx * Ky.T)
    t2 = np.sum(KxA * Ky.T)
    t3 = np.sum((KxA @ Ky) * A.T)
    return float((t1 - 2.0 * t2 + t3) / m**2)


def hs_conditional_criterion(
    X: Ensemble,
    Y: Ensemble,
    Z: Ensemble,
    epsilon: float,
    refinement: int = DEFAULT_REFINEMENT,
    product_kernel: bool = False,
) -> float:
    """Estimate the conditional-dependence measure of X and Y given Z.

    product_kernel multiplies the Y and Z Grams entrywise so the middle
    factor represents the joint (Y, Z); the default keeps the plain Y Gram,
    matching the displayed form of the estimator.
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if not (X.n_samples == Y.n_samples == Z.n_samples):
        raise ValidationError("ensembles must share the sample count")
    Kx = first_order_gram(X, X, refinement=refinement)
    Ky = first_order_gram(Y, Y, refinement=refinement)
    Kz = first_order_gram(Z, Z, refinement=refinement)
    if product_kernel:
        Ky = Ky * Kz
    return _hs_stat(_center(Kx), _center(Ky), _center(Kz), epsilon)


def ci_test(
    X: Ensemble,
    Y: Ensemble,
    Z: Ensemble | None,
    epsilon: float = 1e-3,
    permutations: int = 199,
    seed: int = 0,
    mode: str = "permutation",
    alpha: float | None = None,
    refinement: int = DEFAULT_REFINEMENT,
    product_kernel: bool = False,
) -> CiStatistic:
    """Conditional-independence test of X vs Y given Z (Z=None: marginal).

    Permutation mode relabels the X samples only, which breaks all
    dependence of X on (Y, Z) while preserving both marginals. Threshold
    mode compares the statistic to alpha directly and encodes the decision
    in a degenerate p-value.
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if X.n_samples != Y.n_samples or (Z is not None and Z.n_samples != X.n_samples):
        raise ValidationError("ensembles must share the sample count")
    m = X.n_samples
    Kx = _center(first_order_gram(X, X, refinement=refinement))
    Ky = first_order_gram(Y, Y, refinement=refinement)
    if Z is not None:
        Kz_raw = first_order_gram(Z, Z, refinement=refinement)
        if product_kernel:
            Ky = Ky * Kz_raw
        Kz = _center(Kz_raw)
    Ky = _center(Ky)

    def stat(Kx_c: np.ndarray) -> float:
        if Z is None:
            return float(np.sum(Kx_c * Ky.T) / m**2)
        return _hs_stat(Kx_c, Ky, Kz, epsilon)

    h = stat(Kx)
    if mode == "threshold":
        if alpha is None:
            raise ValidationError("threshold mode requires alpha")
        return CiStatistic(h_value=h, epsilon=float(epsilon), p_value=1.0 if h < alpha else 0.0)
    if mode != "permutation":
        raise ValidationError(f"mode must be permutation or threshold, got {mode!r}")
    if int(permutations) != permutations or permutations < 19:
        raise ValidationError(f"permutations must be an integer >= 19, got {permutations}")
    null = np.empty(int(permutations))
    for r in range(int(permutations)):
        rng = np.random.default_rng([int(seed), r])
        pi = rng.permutation(m)
        null[r] = stat(Kx[np.ix_(pi, pi)])
    p = (1.0 + int(np.sum(null >= h))) / (1.0 + permutations)
    return CiStatistic(h_value=h, epsilon=float(epsilon), p_value=float(p))
