"""Signature kernel via the Goursat PDE, Gram fields, and baseline kernels.

The signature kernel of two piecewise-linear paths is the terminal value of
the hyperbolic PDE d2u/dsdt = <dx_s, dy_t> u with unit boundary conditions.
first_order_gram evaluates it on every pair of sample paths and, optionally,
on every pair of path prefixes (the Gram field feeding the higher-order
recursion). truncated_sig_kernel is an independent oracle computing the same
quantity from exact truncated signatures in the tensor algebra.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from . import _pde
from .errors import NumericError, ValidationError
from .paths import Ensemble, Path, require_same_grid

DEFAULT_REFINEMENT = 2


def _check_refinement(refinement: int) -> int:
    if int(refinement) != refinement or refinement < 1:
        raise ValidationError(f"refinement must be a positive integer, got {refinement}")
    return int(refinement)


@dataclass(frozen=True)
class PdeGrid:
    """PDE solution values on the original grid nodes.

    u[p, q] is the signature kernel of the length-(p+1) and length-(q+1)
    prefixes; the first row and column are the unit boundary.
    """

    u: np.ndarray
    refinement: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.u)):
            raise NumericError("PDE solution contains non-finite entries")

    @property
    def terminal(self) -> float:
        return float(self.u[-1, -1])


@dataclass(frozen=True)
class GramField:
    """g[i, j, p, q] = k_S(x^i restricted to s_p, y^j restricted to t_q).

    The p/q axes run over grid points, so g[:, :, 0, :] == g[:, :, :, 0] == 1
    (single-point prefixes) and g[:, :, -1, -1] is the ordinary Gram matrix.
    """

    g: np.ndarray

    def __post_init__(self):
        if self.g.ndim != 4:
            raise ValidationError(f"Gram field must be 4-d, got shape {self.g.shape}")

    @property
    def shape(self) -> tuple:
        return self.g.shape

    def terminal(self) -> np.ndarray:
        return self.g[:, :, -1, -1]

    def subset(self, rows, cols) -> "GramField":
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        return GramField(self.g[np.ix_(rows, cols)])


def pde_solve(M: np.ndarray, full: bool = False, refinement: int = DEFAULT_REFINEMENT):
    """Solve one signature-kernel PDE from its increment inner products.

    M has shape (P-1, Q-1) with M[p, q] = <x_{s_{p+1}} - x_{s_p},
    y_{t_{q+1}} - y_{t_q}>. Returns the terminal kernel value, or the whole
    PdeGrid when full=True.
    """
    refinement = _check_refinement(refinement)
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValidationError(f"M must be 2-d, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError("M contains non-finite entries")
    out = _pde.solve_batch(M[None], refinement, full)
    if full:
        return PdeGrid(out[0], refinement)
    val = float(out[0])
    if not np.isfinite(val):
        raise NumericError("PDE solution diverged")
    return val


def _increment_products(X: Ensemble, Y: Ensemble) -> np.ndarray:
    # second mixed difference of <x^i_{s_p}, y^j_{t_q}> equals the
    # increment inner products <x_{s_{p+1}}-x_{s_p}, y_{t_{q+1}}-y_{t_q}>
    ip = np.einsum("ipk,jqk->ijpq", X.values, Y.values)
    return ip[:, :, 1:, 1:] + ip[:, :, :-1, :-1] - ip[:, :, 1:, :-1] - ip[:, :, :-1, 1:]


def first_order_gram(
    X: Ensemble,
    Y: Ensemble,
    full: bool = False,
    refinement: int = DEFAULT_REFINEMENT,
):
    """Signature-kernel Gram between two ensembles.

    Returns the (m, n) matrix of terminal kernel values, or the full
    GramField over all prefix pairs when full=True. Cost O(d m n P^2).
    """
    refinement = _check_refinement(refinement)
    require_same_grid(X, Y)
    m, n = X.n_samples, Y.n_samples
    P = X.n_points
    M = _increment_products(X, Y).reshape(m * n, P - 1, P - 1)
    out = _pde.solve_batch(M, refinement, full)
    if not np.all(np.isfinite(out)):
        raise NumericError("PDE solution diverged; rescale the paths")
    if full:
        return GramField(out.reshape(m, n, P, P))
    return out.reshape(m, n)


# ---------------------------------------------------------------------------
# Truncated-signature oracle
# ---------------------------------------------------------------------------

def _truncated_signature(values: np.ndarray, level: int) -> list[np.ndarray]:
    """Exact truncated signature of a piecewise-linear path.

    Returns one flattened array per tensor level: the signature of each
    linear segment is the tensor exponential of its increment, and segments
    combine by truncated tensor-algebra multiplication (Chen's relation).
    """
    d = values.shape[1]
    sig = [np.ones(1)] + [np.zeros(d ** k) for k in range(1, level + 1)]
    sig_is_unit = True
    for inc in np.diff(values, axis=0):
        seg = [np.ones(1)]
        term = np.ones(1)
        fact = 1.0
        for k in range(1, level + 1):
            term = np.multiply.outer(term, inc).ravel()
            fact *= k
            seg.append(term / fact)
        if sig_is_unit:
            sig = seg
            sig_is_unit = False
        else:
            sig = [
                sum(np.multiply.outer(sig[i], seg[k - i]).ravel() for i in range(k + 1))
                for k in range(level + 1)
            ]
    return sig


def truncated_sig_kernel(x: Path, y: Path, level: int) -> float:
    """Sum of signature inner products up to the given tensor level.

    Exact for piecewise-linear paths; serves as the independent oracle for
    pde_solve. Cost grows as d^level, so keep level modest in high dimension.
    """
    if int(level) != level or level < 0:
        raise ValidationError(f"level must be a nonnegative integer, got {level}")
    if x.dim != y.dim:
        raise ValidationError("paths must share the state dimension")
    sx = _truncated_signature(x.values, int(level))
    sy = _truncated_signature(y.values, int(level))
    return float(sum(np.dot(a, b) for a, b in zip(sx, sy)))


# ---------------------------------------------------------------------------
# Static baseline kernels on flattened paths
# ---------------------------------------------------------------------------

def static_kernel_gram(X: Ensemble, Y: Ensemble, kind: str, gamma: float) -> np.ndarray:
    """RBF or Matern-3/2 Gram on paths flattened to plain vectors.

    rbf:      exp(-||x - y||^2 / gamma^2)
    matern32: (1 + sqrt(3) ||x - y|| / gamma^2) exp(-sqrt(3) ||x - y|| / gamma^2)

    Values are flattened in time order; times are not part of the feature.
    """
    if not gamma > 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    require_same_grid(X, Y)
    xf = X.values.reshape(X.n_samples, -1)
    yf = Y.values.reshape(Y.n_samples, -1)
    sq = (
        np.sum(xf * xf, axis=1)[:, None]
        + np.sum(yf * yf, axis=1)[None, :]
        - 2.0 * xf @ yf.T
    )
    sq = np.maximum(sq, 0.0)
    if kind == "rbf":
        return np.exp(-sq / gamma**2)
    if kind == "matern32":
        r = np.sqrt(3.0) * np.sqrt(sq) / gamma**2
        return (1.0 + r) * np.exp(-r)
    raise ValidationError(f"unknown static kernel kind {kind!r}")


# ---------------------------------------------------------------------------
# Gram-field caching (binary and CSV dumps with an index header)
# ---------------------------------------------------------------------------

_MAGIC = b"SIGGRAM1"


def save_gram_field(field: GramField, path: str, fmt: str = "bin") -> None:
    m, n, P, Q = field.g.shape
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<4q", m, n, P, Q))
            fh.write(np.ascontiguousarray(field.g).tobytes())
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{m},{n},{P},{Q}\n")
            for v in field.g.ravel():
                fh.write(repr(float(v)) + "\n")
    else:
        raise ValidationError(f"unknown gram dump format {fmt!r}")


def load_gram_field(path: str) -> GramField:
    with open(path, "rb") as fh:
        head = fh.read(len(_MAGIC))
        if head == _MAGIC:
            m, n, P, Q = struct.unpack("<4q", fh.read(32))
            data = np.frombuffer(fh.read(), dtype=np.float64)
            if data.size != m * n * P * Q:
                raise ValidationError(f"{path}: truncated gram dump")
            return GramField(data.reshape(m, n, P, Q).copy())
    with open(path, "r", encoding="utf-8") as fh:
        txt = io.StringIO(fh.read())
    try:
        m, n, P, Q = (int(v) for v in txt.readline().split(","))
        data = np.array([float(line) for line in txt if line.strip()])
    except ValueError as exc:
        raise ValidationError(f"{path}: malformed gram dump: {exc}") from exc
    if data.size != m * n * P * Q:
        raise ValidationError(f"{path}: truncated gram dump")
    return GramField(data.reshape(m, n, P, Q))
