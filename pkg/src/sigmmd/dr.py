"""Distribution regression on stochastic processes.

Each training input is a bag of sample paths standing in for one process;
the kernel between processes is a Gaussian of the (clipped) biased squared
MMD at the configured order, K(X, Y) = exp(-max(D2, 0)/sigma). Fitting is
plain kernel ridge regression on that kernel.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericError, ValidationError
from .higherorder import (
    HigherOrderConfig,
    mmd_squared_from_terminals,
    terminal_grams,
)
from .paths import Ensemble, require_same_grid
from .sigkernel import first_order_gram


@dataclass(frozen=True)
class Bag:
    """One labelled process, represented by an ensemble of sample paths."""

    ensemble: Ensemble
    label: float

    def __post_init__(self):
        if not np.isfinite(self.label):
            raise ValidationError("bag label must be finite")

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.ensemble.times.tobytes())
        h.update(self.ensemble.values.tobytes())
        h.update(repr(float(self.label)).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class DrModel:
    """Fitted kernel ridge regressor over bags."""

    alpha: np.ndarray
    sigma: float
    ridge: float
    order: int
    train_mmd_matrix: np.ndarray
    fingerprints: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "alpha": [float(a) for a in self.alpha],
            "sigma": float(self.sigma),
            "ridge": float(self.ridge),
            "order": int(self.order),
            "train_mmd_matrix": [[float(v) for v in row] for row in self.train_mmd_matrix],
            "fingerprints": list(self.fingerprints),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DrModel":
        return cls(
            alpha=np.asarray(d["alpha"], dtype=np.float64),
            sigma=float(d["sigma"]),
            ridge=float(d["ridge"]),
            order=int(d["order"]),
            train_mmd_matrix=np.asarray(d["train_mmd_matrix"], dtype=np.float64),
            fingerprints=tuple(d["fingerprints"]),
        )


def _check_grid_compat(ensembles: Sequence[Ensemble]) -> None:
    for e in ensembles[1:]:
        require_same_grid(ensembles[0], e)


def _pair_mmd_squared(
    ex: Ensemble,
    ey: Ensemble,
    cfg: HigherOrderConfig,
    Gxx,
    Gyy,
) -> float:
    """Biased squared MMD between two bags, reusing precomputed self-Grams."""
    full = cfg.order > 1
    Gxy = first_order_gram(ex, ey, full=full, refinement=cfg.refinement)
    if cfg.order == 1:
        return mmd_squared_from_terminals(Gxx, Gxy, Gyy, "biased")
    Kxx, Kxy, Kyy = terminal_grams(Gxx, Gxy, Gyy, cfg, times=ex.times)
    return mmd_squared_from_terminals(Kxx, Kxy, Kyy, "biased")


def _self_grams(ensembles: Sequence[Ensemble], cfg: HigherOrderConfig) -> list:
    full = cfg.order > 1
    return [first_order_gram(e, e, full=full, refinement=cfg.refinement) for e in ensembles]


def mmd_matrix(ensembles: Sequence[Ensemble], cfg: HigherOrderConfig) -> np.ndarray:
    """Symmetric matrix of pairwise biased squared MMD estimates.

    The diagonal is exactly zero: the biased estimator vanishes on two
    identical bags. Self Gram fields are computed once per bag; memory for
    order >= 2 grows as bags * m^2 * P^2.
    """
    _check_grid_compat(ensembles)
    B = len(ensembles)
    selfs = _self_grams(ensembles, cfg)
    D2 = np.zeros((B, B))
    for a in range(B):
        for b in range(a + 1, B):
            v = _pair_mmd_squared(ensembles[a], ensembles[b], cfg, selfs[a], selfs[b])
            D2[a, b] = D2[b, a] = v
    return D2


def process_kernel_matrix(
    bags: Sequence[Bag], cfg: HigherOrderConfig, sigma: float
) -> np.ndarray:
    """Gaussian-of-MMD kernel matrix, entry exp(-max(D2_ab, 0)/sigma)."""
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    D2 = mmd_matrix([b.ensemble for b in bags], cfg)
    return np.exp(-np.maximum(D2, 0.0) / sigma)


def _kernel_from_d2(D2: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-np.maximum(D2, 0.0) / sigma)


def _solve_krr(K: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    try:
        fac = cho_factor(K + ridge * np.eye(len(y)), lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError("ridge system is not positive definite") from exc
    return cho_solve(fac, y, check_finite=False)


def fit_krr(
    bags: Sequence[Bag], cfg: HigherOrderConfig, sigma: float, ridge: float
) -> DrModel:
    """Fit kernel ridge regression over bags: alpha = (K + ridge I)^-1 y."""
    if len(bags) < 2:
        raise ValidationError("need at least 2 bags to fit")
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    if not ridge > 0:
        raise ValidationError(f"ridge must be positive, got {ridge}")
    D2 = mmd_matrix([b.ensemble for b in bags], cfg)
    K = _kernel_from_d2(D2, sigma)
    y = np.array([b.label for b in bags])
    alpha = _solve_krr(K, y, ridge)
    return DrModel(
        alpha=alpha,
        sigma=float(sigma),
        ridge=float(ridge),
        order=cfg.order,
        train_mmd_matrix=D2,
        fingerprints=tuple(b.fingerprint() for b in bags),
    )


def predict(
    model: DrModel,
    train_bags: Sequence[Bag],
    new_ensemble: Ensemble,
    cfg: HigherOrderConfig,
) -> float:
    """Predict the label of a new bag: sum_a alpha_a exp(-D2(X_a, new)/sigma)."""
    if len(train_bags) != len(model.alpha):
        raise ValidationError("train bags do not match the fitted model")
    fps = tuple(b.fingerprint() for b in train_bags)
    if fps != model.fingerprints:
        raise ValidationError("train bag fingerprints do not match the fitted model")
    if cfg.order != model.order:
        raise ValidationError("cfg.order differs from the fitted model order")
    ensembles = [b.ensemble for b in train_bags]
    _check_grid_compat(ensembles + [new_ensemble])
    selfs = _self_grams(ensembles, cfg)
    new_self = _self_grams([new_ensemble], cfg)[0]
    d2 = np.array(
        [
            _pair_mmd_squared(e, new_ensemble, cfg, Ga, new_self)
            for e, Ga in zip(ensembles, selfs)
        ]
    )
    k = np.exp(-np.maximum(d2, 0.0) / model.sigma)
    return float(model.alpha @ k)


@dataclass(frozen=True)
class CvResult:
    """Winner of a cross-validation grid search, with all candidate scores."""

    order: int
    sigma: float
    ridge: float
    score: float
    scores: dict

    def to_dict(self) -> dict:
        return {
            "order": int(self.order),
            "sigma": float(self.sigma),
            "ridge": float(self.ridge),
            "score": float(self.score),
            "scores": {
                f"order={o},sigma={s:g},ridge={r:g}": float(v)
                for (o, s, r), v in sorted(self.scores.items())
            },
        }


def cv_grid_search(
    bags: Sequence[Bag],
    orders: Sequence[int],
    sigmas: Sequence[float],
    ridges: Sequence[float],
    folds: int,
    seed: int = 0,
    lam: float = 1e-3,
    refinement: int = 2,
    lift_time_scale: float = 0.0,
) -> CvResult:
    """Pick (order, sigma, ridge) by K-fold cross-validated MSE.

    Fold assignment is a seeded permutation dealt round-robin. The pairwise
    MMD matrix is computed once per order and shared by every (sigma, ridge)
    candidate and fold. Ties break toward the smaller (order, sigma, ridge).
    """
    if int(folds) != folds or folds < 2:
        raise ValidationError(f"folds must be an integer >= 2, got {folds}")
    if len(bags) < folds:
        raise ValidationError(f"need at least {folds} bags for {folds}-fold CV")
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(bags), dtype=np.int64)
    assignment[rng.permutation(len(bags))] = np.arange(len(bags)) % int(folds)
    y = np.array([b.label for b in bags])

    best = None
    scores: dict = {}
    for order in sorted(set(int(o) for o in orders)):
        cfg = HigherOrderConfig(
            order=order, lam=lam, refinement=refinement, lift_time_scale=lift_time_scale
        )
        D2 = mmd_matrix([b.ensemble for b in bags], cfg)
        for sigma in sorted(set(float(s) for s in sigmas)):
            K = _kernel_from_d2(D2, sigma)
            for ridge in sorted(set(float(r) for r in ridges)):
                fold_mse = []
                for f in range(int(folds)):
                    val = assignment == f
                    trn = ~val
                    alpha = _solve_krr(K[np.ix_(trn, trn)], y[trn], ridge)
                    pred = K[np.ix_(val, trn)] @ alpha
                    fold_mse.append(float(np.mean((pred - y[val]) ** 2)))
                mean = float(np.mean(fold_mse))
                scores[(order, sigma, ridge)] = mean
                if best is None or mean < best[0]:
                    best = (mean, order, sigma, ridge)
    mean, order, sigma, ridge = best
    return CvResult(order=order, sigma=sigma, ridge=ridge, score=mean, scores=scores)
