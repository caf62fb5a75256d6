"""Seeded generators for the synthetic processes used in tests and experiments.

Every generator is a pure function of its arguments: the same inputs always
produce the same Ensemble, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericError, ValidationError
from .paths import Ensemble

FIG3_TIMES = np.array([0.0, 1.0, 2.0])


def gen_fig3(n: float | None, m: int, seed: int) -> Ensemble:
    """Branching processes on the grid (0, 1, 2) with matched terminal laws.

    n = None gives the late-branching process: the path stays at 0 until
    t=1, then moves to +1 or -1 with equal probability. A finite n >= 1
    gives the early-branching family: at t=1 the path moves to +1/n or -1/n
    with equal probability and the terminal value follows the sign of that
    first move. As n grows the two laws merge while the information
    structures stay apart: the early-branching path is deterministic after
    t=1. The branch signs depend on (m, seed) only, so draws with different
    n are coupled.
    """
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=m)
    vals = np.zeros((m, 3, 1))
    vals[:, 2, 0] = signs
    if n is not None:
        if not n >= 1:
            raise ValidationError(f"branch parameter n must be >= 1, got {n}")
        vals[:, 1, 0] = signs / float(n)
    return Ensemble(FIG3_TIMES, vals)


def gen_brownian(d: int, m: int, grid: Sequence[float], seed: int) -> Ensemble:
    """Standard d-dimensional Brownian motion started at 0."""
    grid = np.asarray(grid, dtype=np.float64)
    if d < 1 or m < 1:
        raise ValidationError("d and m must be >= 1")
    rng = np.random.default_rng(seed)
    dt = np.diff(grid)
    if np.any(dt <= 0):
        raise ValidationError("grid must be strictly increasing")
    inc = rng.standard_normal((m, len(dt), d)) * np.sqrt(dt)[None, :, None]
    vals = np.concatenate([np.zeros((m, 1, d)), np.cumsum(inc, axis=1)], axis=1)
    return Ensemble(grid, vals)


def gen_fbm(h: float, d: int, m: int, grid: Sequence[float], seed: int) -> Ensemble:
    """Exact fractional Brownian motion via covariance factorization.

    The Gaussian vector on the grid has covariance
    C(s, t) = (s^2h + t^2h - |s - t|^2h)/2 per coordinate, coordinates
    independent. Grid times must be nonnegative; a leading t=0 point maps to
    the exact starting value 0.
    """
    if not 0.0 < h < 1.0:
        raise ValidationError(f"Hurst exponent must be in (0, 1), got {h}")
    if d < 1 or m < 1:
        raise ValidationError("d and m must be >= 1")
    grid = np.asarray(grid, dtype=np.float64)
    if np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValidationError("grid must be strictly increasing and nonnegative")
    pos = grid[grid > 0]
    C = 0.5 * (
        pos[:, None] ** (2 * h)
        + pos[None, :] ** (2 * h)
        - np.abs(pos[:, None] - pos[None, :]) ** (2 * h)
    )
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise NumericError("fBm covariance factorization failed") from exc
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((m, len(pos), d))
    vals = np.zeros((m, len(grid), d))
    vals[:, grid > 0, :] = np.einsum("pq,iqk->ipk", L, z)
    return Ensemble(grid, vals)


def gen_spring_system(
    adjacency: np.ndarray,
    m_episodes: int,
    steps: int,
    seed: int,
    stiffness: float = 20.0,
    rest_length_range: tuple[float, float] = (20.0, 120.0),
    dt: float = 0.05,
    force_std: float = 40.0,
    init_box: float = 200.0,
) -> list[Ensemble]:
    """Bodies in the plane coupled by linear springs, one Ensemble per body.

    Per episode: random initial positions, zero initial velocity, then
    semi-implicit Euler with spring forces between connected bodies plus an
    independent random force on every body at every step. Rest lengths are
    sampled once per edge and shared across episodes.
    """
    A = np.asarray(adjacency)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("adjacency must be square")
    if not np.array_equal(A, A.T):
        raise ValidationError("adjacency must be symmetric")
    if np.any(np.diag(A) != 0):
        raise ValidationError("adjacency must have no self-loops")
    if m_episodes < 1 or steps < 1:
        raise ValidationError("m_episodes and steps must be >= 1")
    N = A.shape[0]
    rng = np.random.default_rng(seed)
    edges = [(i, j) for i in range(N) for j in range(i + 1, N) if A[i, j]]
    rest = {e: rng.uniform(*rest_length_range) for e in edges}

    times = np.arange(steps + 1) * dt
    traj = np.empty((N, m_episodes, steps + 1, 2))
    for ep in range(m_episodes):
        pos = rng.uniform(0.0, init_box, size=(N, 2))
        vel = np.zeros((N, 2))
        traj[:, ep, 0, :] = pos
        for t in range(steps):
            force = rng.normal(0.0, force_std, size=(N, 2))
            for (i, j) in edges:
                delta = pos[i] - pos[j]
                dist = np.hypot(delta[0], delta[1])
                if dist > 1e-12:
                    f = -stiffness * (dist - rest[(i, j)]) * delta / dist
                    force[i] += f
                    force[j] -= f
            vel = vel + dt * force
            pos = pos + dt * vel
            traj[:, ep, t + 1, :] = pos
    return [Ensemble(times, traj[b]) for b in range(N)]


@dataclass(frozen=True)
class GenSpec:
    """Declarative description of a dataset, used by the CLI gen command."""

    kind: str
    m: int
    seed: int
    grid: tuple[float, ...] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("fig3_left", "fig3_right", "brownian", "fbm", "spring_system"):
            raise ValidationError(f"unknown generator kind {self.kind!r}")
        if self.m < 1:
            raise ValidationError(f"m must be >= 1, got {self.m}")


def generate(spec: GenSpec):
    """Produce the Ensemble(s) described by a GenSpec."""
    p = spec.params
    if spec.kind == "fig3_left":
        if "n" not in p:
            raise ValidationError("fig3_left requires a branch parameter n")
        return gen_fig3(float(p["n"]), spec.m, spec.seed)
    if spec.kind == "fig3_right":
        return gen_fig3(None, spec.m, spec.seed)
    if spec.grid is None and spec.kind in ("brownian", "fbm"):
        raise ValidationError(f"{spec.kind} requires a time grid")
    if spec.kind == "brownian":
        return gen_brownian(int(p.get("d", 1)), spec.m, np.asarray(spec.grid), spec.seed)
    if spec.kind == "fbm":
        if "h" not in p:
            raise ValidationError("fbm requires a Hurst exponent h")
        return gen_fbm(float(p["h"]), int(p.get("d", 1)), spec.m, np.asarray(spec.grid), spec.seed)
    adjacency = np.asarray(p["adjacency"]) if "adjacency" in p else None
    if adjacency is None:
        raise ValidationError("spring_system requires an adjacency matrix")
    return gen_spring_system(
        adjacency,
        spec.m,
        int(p.get("steps", 20)),
        spec.seed,
        stiffness=float(p.get("stiffness", 20.0)),
        rest_length_range=tuple(p.get("rest_length_range", (20.0, 120.0))),
        dt=float(p.get("dt", 0.05)),
        force_std=float(p.get("force_std", 40.0)),
        init_box=float(p.get("init_box", 200.0)),
    )
