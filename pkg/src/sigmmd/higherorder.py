"""Higher-order Gram recursion and MMD estimators.

The k-th order construction lifts each sample path to the path of its
ridge-estimated conditional kernel mean embeddings (one RKHS point per grid
time), then evaluates the signature kernel between lifted paths. Pairwise
inner products of the lifted paths never materialize RKHS elements: they are
assembled from prefix Gram fields via

    <x~_s, y~_t>  ~=  k_s^x' (K_ss^xx + m lam I)^-1 K_TT^xy (K_tt^yy + n lam I)^-1 k_t^y

and the lifted-level PDE runs on their mixed second differences. Iterating
the lift k-1 times on first-order Gram fields yields the k-th order Gram and
the associated MMD estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _pde
from .errors import NumericError, ValidationError
from .paths import Ensemble, require_same_grid
from .sigkernel import DEFAULT_REFINEMENT, GramField, first_order_gram


@dataclass(frozen=True)
class HigherOrderConfig:
    """Hyperparameters of the higher-order construction.

    order: depth of the embedding tower (1 = plain signature MMD).
    lam: Tikhonov regularizer of the conditional-embedding solves.
    refinement: dyadic PDE grid refinements (2^refinement sub-cells per axis).
    lift_time_scale: when positive, the lifted paths are time-augmented by
        adding scale*t_p * scale*t_q to their pairwise inner products. The
        signature kernel is reparametrization invariant, so without this the
        lifted level cannot see *when* conditional laws change, only that
        they do; leave at 0.0 for the bare construction.
    """

    order: int = 1
    lam: float = 1e-3
    refinement: int = DEFAULT_REFINEMENT
    lift_time_scale: float = 0.0

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValidationError(f"order must be an integer >= 1, got {self.order}")
        if not self.lam > 0:
            raise ValidationError(f"lam must be positive, got {self.lam}")
        if int(self.refinement) != self.refinement or self.refinement < 1:
            raise ValidationError(f"refinement must be an integer >= 1, got {self.refinement}")
        if self.lift_time_scale < 0:
            raise ValidationError("lift_time_scale must be nonnegative")


@dataclass(frozen=True)
class MmdEstimate:
    """Squared MMD estimate; the unbiased variant may be negative."""

    order: int
    value_squared: float
    variant: str

    def __post_init__(self):
        if self.variant not in ("biased", "unbiased"):
            raise ValidationError(f"variant must be biased or unbiased, got {self.variant}")

    @property
    def value(self) -> float:
        """The MMD estimate itself, sqrt of the clipped squared estimator."""
        return float(np.sqrt(max(self.value_squared, 0.0)))


def _ridge_smoothers(G: GramField, lam: float) -> np.ndarray:
    """B[p] = (K_pp + m lam I)^-1 K_pp for every diagonal time slice."""
    m = G.g.shape[0]
    P = G.g.shape[2]
    ident = np.eye(m)
    B = np.empty((P, m, m))
    for p in range(P):
        K = G.g[:, :, p, p]
        try:
            fac = cho_factor(K + m * lam * ident, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"regularized Gram block at slice {p} is not SPD") from exc
        B[p] = cho_solve(fac, K, check_finite=False)
    return B


def _pred_inner_from_smoothers(Bx: np.ndarray, By: np.ndarray, Ktt: np.ndarray) -> np.ndarray:
    """M[i,j,p,q] = (Bx[p]^T Ktt By[q])[i,j], batched into two GEMMs."""
    P, m, _ = Bx.shape
    Q, n, _ = By.shape
    # C[q] = Ktt @ By[q]
    C = np.matmul(Ktt[None], By)                      # (Q, m, n)
    # out[p, i, q, j] = sum_k Bx[p, k, i] * C[q, k, j]
    out = np.tensordot(Bx, C, axes=([1], [1]))        # (P, m, Q, n)
    return np.ascontiguousarray(out.transpose(1, 3, 0, 2))


def inner_prod_pred_kme(
    Gxx: GramField, Gxy: GramField, Gyy: GramField, lam: float
) -> np.ndarray:
    """Pairwise inner products of predictive-embedding paths.

    Output M[i, j, p, q] estimates the inner product between the conditional
    embedding of X given the prefix of x^i up to s_p and that of Y given the
    prefix of y^j up to t_q. Diagonal prefix blocks of Gxx/Gyy supply the
    regularized solves; the terminal slice of Gxy supplies the middle factor.
    """
    if not lam > 0:
        raise ValidationError(f"lam must be positive, got {lam}")
    m, n, P, Q = Gxy.g.shape
    if Gxx.g.shape != (m, m, P, P) or Gyy.g.shape != (n, n, Q, Q):
        raise ValidationError(
            f"inconsistent Gram fields: {Gxx.g.shape}, {Gxy.g.shape}, {Gyy.g.shape}"
        )
    Bx = _ridge_smoothers(Gxx, lam)
    By = Bx if Gyy is Gxx else _ridge_smoothers(Gyy, lam)
    return _pred_inner_from_smoothers(Bx, By, Gxy.g[:, :, -1, -1])


def _lift_times(M: np.ndarray, times: np.ndarray, scale: float) -> np.ndarray:
    tt = np.multiply.outer(scale * times, scale * times)
    return M + tt[None, None, :, :]


def _second_difference(M: np.ndarray) -> np.ndarray:
    return M[:, :, 1:, 1:] + M[:, :, :-1, :-1] - M[:, :, 1:, :-1] - M[:, :, :-1, 1:]


def higher_order_gram(
    Gxx: GramField,
    Gxy: GramField,
    Gyy: GramField,
    lam: float,
    full: bool = True,
    refinement: int = DEFAULT_REFINEMENT,
    times: np.ndarray | None = None,
    lift_time_scale: float = 0.0,
):
    """One lifting step: order-k Gram fields in, order-(k+1) Gram out.

    Builds the predictive-embedding inner products, takes their mixed second
    difference (increment inner products of the lifted paths) and solves one
    PDE per sample pair. Returns a GramField when full=True, otherwise the
    terminal (m, n) Gram matrix.
    """
    M = inner_prod_pred_kme(Gxx, Gxy, Gyy, lam)
    if lift_time_scale > 0:
        if times is None:
            raise ValidationError("lift_time_scale > 0 requires the time grid")
        M = _lift_times(M, np.asarray(times, dtype=np.float64), lift_time_scale)
    m, n, P, Q = M.shape
    Minc = _second_difference(M).reshape(m * n, P - 1, Q - 1)
    out = _pde.solve_batch(Minc, refinement, full)
    if not np.all(np.isfinite(out)):
        raise NumericError("lifted PDE solution diverged")
    if full:
        return GramField(out.reshape(m, n, P, Q))
    return out.reshape(m, n)


def terminal_grams(
    Gxx: GramField,
    Gxy: GramField,
    Gyy: GramField,
    cfg: HigherOrderConfig,
    times: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Order-cfg.order terminal Gram matrices from first-order Gram fields.

    Runs the lifting recursion cfg.order - 1 times. The ridge smoothers of
    the XX and YY fields are shared by all three lifted Grams per iteration.
    """
    for step in range(cfg.order - 1):
        last = step == cfg.order - 2
        Bx = _ridge_smoothers(Gxx, cfg.lam)
        By = Bx if Gyy is Gxx else _ridge_smoothers(Gyy, cfg.lam)
        new = []
        for Gmid, B1, B2 in (
            (Gxx, Bx, Bx),
            (Gxy, Bx, By),
            (Gyy, By, By),
        ):
            M = _pred_inner_from_smoothers(B1, B2, Gmid.g[:, :, -1, -1])
            if cfg.lift_time_scale > 0:
                if times is None:
                    raise ValidationError("lift_time_scale > 0 requires the time grid")
                M = _lift_times(M, np.asarray(times, dtype=np.float64), cfg.lift_time_scale)
            m, n, P, Q = M.shape
            Minc = _second_difference(M).reshape(m * n, P - 1, Q - 1)
            out = _pde.solve_batch(Minc, cfg.refinement, not last)
            if not np.all(np.isfinite(out)):
                raise NumericError("lifted PDE solution diverged")
            new.append(out.reshape(m, n) if last else GramField(out.reshape(m, n, P, Q)))
        Gxx, Gxy, Gyy = new
    if isinstance(Gxx, GramField):
        return Gxx.terminal(), Gxy.terminal(), Gyy.terminal()
    return Gxx, Gxy, Gyy


def mmd_squared_from_terminals(
    Kxx: np.ndarray, Kxy: np.ndarray, Kyy: np.ndarray, variant: str
) -> float:
    m, n = Kxy.shape
    if variant == "biased":
        xx = Kxx.mean()
        yy = Kyy.mean()
    elif variant == "unbiased":
        if m < 2 or n < 2:
            raise ValidationError("unbiased estimator needs at least 2 samples per side")
        xx = (Kxx.sum() - np.trace(Kxx)) / (m * (m - 1))
        yy = (Kyy.sum() - np.trace(Kyy)) / (n * (n - 1))
    else:
        raise ValidationError(f"variant must be biased or unbiased, got {variant}")
    return float(xx - 2.0 * Kxy.mean() + yy)


def higher_order_mmd(
    X: Ensemble,
    Y: Ensemble,
    cfg: HigherOrderConfig,
    variant: str = "unbiased",
) -> MmdEstimate:
    """Estimate the squared order-cfg.order MMD between two ensembles.

    Order 1 is the classical signature-kernel MMD; higher orders run the
    lifting recursion on full first-order Gram fields. Cost O(d m^2 P^2) for
    the first-order fields plus O((order-1) m^3 P^2) per lift.
    """
    require_same_grid(X, Y)
    if variant == "unbiased" and (X.n_samples < 2 or Y.n_samples < 2):
        raise ValidationError("unbiased estimator needs at least 2 samples per side")
    full = cfg.order > 1
    Gxx = first_order_gram(X, X, full=full, refinement=cfg.refinement)
    Gxy = first_order_gram(X, Y, full=full, refinement=cfg.refinement)
    Gyy = first_order_gram(Y, Y, full=full, refinement=cfg.refinement)
    if cfg.order == 1:
        Kxx, Kxy, Kyy = Gxx, Gxy, Gyy
    else:
        Kxx, Kxy, Kyy = terminal_grams(Gxx, Gxy, Gyy, cfg, times=X.times)
    value = mmd_squared_from_terminals(Kxx, Kxy, Kyy, variant)
    return MmdEstimate(order=cfg.order, value_squared=value, variant=variant)
