"""kPC skeleton: causal structure over observed processes via kernel CI tests.

Starts from the complete undirected graph and prunes edges level by level.
Level 0 (optional, default on) removes marginally independent pairs with the
unconditional HSIC statistic; level l >= 1 removes an edge (i, j) as soon as
some size-l conditioning set drawn from the current neighbors of i or j
drives the conditional criterion below the removal threshold alpha.

Per-variable Gram matrices are computed once; conditioning sets reuse them
through entrywise Gram products (the tensor-product kernel on the joint of
the conditioning processes), so no PDE is ever re-solved during the search.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .condind import CiStatistic, _center, _hs_stat
from .errors import ValidationError
from .paths import Ensemble
from .sigkernel import DEFAULT_REFINEMENT, first_order_gram


@dataclass
class CausalGraph:
    """Undirected skeleton with the evidence that produced it.

    edges hold the surviving pairs (i < j). separating_sets maps each removed
    pair to the first conditioning set that removed it. stats records every
    CI statistic computed, keyed by (pair, conditioning set).
    """

    n_vars: int
    edges: set[tuple[int, int]] = field(default_factory=set)
    separating_sets: dict[tuple[int, int], tuple[int, ...]] = field(default_factory=dict)
    stats: dict[tuple[tuple[int, int], tuple[int, ...]], CiStatistic] = field(
        default_factory=dict
    )

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def to_dict(self) -> dict:
        return {
            "n_vars": self.n_vars,
            "edges": [[int(a), int(b)] for a, b in sorted(self.edges)],
            "separating_sets": {
                f"{a}-{b}": [int(z) for z in zs]
                for (a, b), zs in sorted(self.separating_sets.items())
            },
            "stats": {
                f"{a}-{b}|{','.join(str(z) for z in zs)}": st.to_dict()
                for ((a, b), zs), st in sorted(self.stats.items())
            },
        }

    def to_edge_csv(self) -> str:
        lines = ["i,j"]
        lines += [f"{a},{b}" for a, b in sorted(self.edges)]
        return "\n".join(lines) + "\n"


def kpc_skeleton(
    ensembles: Sequence[Ensemble],
    epsilon: float,
    alpha: float,
    max_cond_size: int,
    seed: int = 0,
    marginal_level0: bool = True,
    refinement: int = DEFAULT_REFINEMENT,
) -> CausalGraph:
    """Skeleton phase of kPC over the given process ensembles.

    An edge is removed when a conditioning statistic falls below alpha
    (threshold rule); removals are batched between levels and the
    enumeration of conditioning sets is lexicographic, so the output is a
    deterministic function of the inputs. Raising alpha weakly removes more
    edges.
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if int(max_cond_size) != max_cond_size or max_cond_size < 0:
        raise ValidationError(f"max_cond_size must be a nonnegative integer, got {max_cond_size}")
    N = len(ensembles)
    if N < 1:
        raise ValidationError("at least one ensemble is required")
    m = ensembles[0].n_samples
    for e in ensembles[1:]:
        if e.n_samples != m:
            raise ValidationError("all variables must have the same sample count")

    graph = CausalGraph(n_vars=N, edges={(i, j) for i in range(N) for j in range(i + 1, N)})
    if N == 1:
        return graph

    grams = [first_order_gram(e, e, refinement=refinement) for e in ensembles]
    centered = [_center(K) for K in grams]

    def joint_centered(gset: tuple[int, ...]) -> np.ndarray:
        K = grams[gset[0]].copy()
        for z in gset[1:]:
            K *= grams[z]
        return _center(K)

    if marginal_level0:
        removals = []
        for i, j in sorted(graph.edges):
            h = float(np.sum(centered[i] * centered[j].T) / m**2)
            st = CiStatistic(h_value=h, epsilon=float(epsilon), p_value=1.0 if h < alpha else 0.0)
            graph.stats[((i, j), ())] = st
            if h < alpha:
                removals.append(((i, j), ()))
        for pair, sep in removals:
            graph.edges.discard(pair)
            graph.separating_sets[pair] = sep

    for level in range(1, int(max_cond_size) + 1):
        removals = []
        snapshot = sorted(graph.edges)
        for i, j in snapshot:
            candidates = sorted(
                (set(graph.neighbors(i)) | set(graph.neighbors(j))) - {i, j}
            )
            if len(candidates) < level:
                continue
            for zs in itertools.combinations(candidates, level):
                h = _hs_stat(centered[i], centered[j], joint_centered(zs), epsilon)
                st = CiStatistic(
                    h_value=h, epsilon=float(epsilon), p_value=1.0 if h < alpha else 0.0
                )
                graph.stats[((i, j), zs)] = st
                if h < alpha:
                    removals.append(((i, j), zs))
                    break
        for pair, sep in removals:
            graph.edges.discard(pair)
            graph.separating_sets[pair] = sep
        if not graph.edges:
            break
    return graph
