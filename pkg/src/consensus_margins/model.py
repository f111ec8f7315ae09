"""Agent dynamics, interaction graphs and the decoupled loops of a consensus network.

Each agent follows ``x_i' = A x_i + B u_i`` and applies the relative-state
protocol ``u_i = c K sum_k a_ik (x_k - x_i)``.  Diagonalising the Laplacian
splits the network into ``N - 1`` loops

    G_p(s) = (sI - A)^{-1} B c lambda_p K,   p = 2..N,

whose joint stability is equivalent to consensus.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AssumptionViolationError,
    DimensionMismatchError,
    NegativeWeightError,
    NonSquareError,
    NonzeroDiagonalError,
    NoStabilizingGainError,
)

HURWITZ_MARGIN = 1e-9
ZERO_EIG_TOL = 1e-9


def _as_matrix(value, name, dtype=float):
    arr = np.array(value, dtype=dtype)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if name == "B" else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def spectral_abscissa(M: np.ndarray) -> float:
    """Largest real part among the eigenvalues of ``M``."""
    return float(np.max(np.linalg.eigvals(M).real))


def is_hurwitz(M: np.ndarray, margin: float = HURWITZ_MARGIN) -> bool:
    return spectral_abscissa(M) < -margin


@dataclass(frozen=True)
class AgentModel:
    """Identical agent dynamics ``(A, B)`` with state feedback ``K`` and coupling gain ``c``."""

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    c: float

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        K = _as_matrix(self.K, "K")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatchError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionMismatchError(f"B has {B.shape[0]} rows, expected {n}")
        m = B.shape[1]
        if K.shape != (m, n):
            raise DimensionMismatchError(f"K has shape {K.shape}, expected {(m, n)}")
        c = float(self.c)
        if not c > 0 or not np.isfinite(c):
            raise ValueError(f"coupling gain must be positive and finite, got {self.c}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def BK(self) -> np.ndarray:
        return self.B @ self.K

    def with_coupling(self, c: float) -> "AgentModel":
        return AgentModel(self.A, self.B, self.K, c)


def _sort_spectrum(eigs: np.ndarray, scale: float) -> np.ndarray:
    eigs = np.asarray(eigs, dtype=complex).copy()
    # Round-off imaginary parts on real eigenvalues would otherwise scramble ties.
    small = np.abs(eigs.imag) <= 1e-12 * scale
    eigs[small] = eigs[small].real
    eigs[np.abs(eigs) <= 1e-13 * scale] = 0.0
    key_re = np.round(eigs.real / scale, 10)
    key_im = np.round(eigs.imag / scale, 10)
    order = np.lexsort((key_im, key_re))
    return eigs[order]


@dataclass(frozen=True)
class NetworkGraph:
    """Weighted digraph; ``a_ik > 0`` means agent i uses the state of agent k."""

    adjacency: np.ndarray
    laplacian: np.ndarray = field(init=False)
    spectrum: np.ndarray = field(init=False)

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise NonSquareError(f"adjacency must be square, got shape {adj.shape}")
        if not np.all(np.isfinite(adj)):
            raise ValueError("adjacency contains non-finite entries")
        if np.any(adj < 0):
            raise NegativeWeightError("adjacency weights must be nonnegative")
        if np.any(np.diag(adj) != 0):
            raise NonzeroDiagonalError("adjacency must have a zero diagonal (no self loops)")
        lap = np.diag(adj.sum(axis=1)) - adj
        scale = 1.0 + np.abs(lap).sum(axis=1).max(initial=0.0)
        spectrum = _sort_spectrum(np.linalg.eigvals(lap), scale) if adj.size else np.zeros(0, complex)
        for name, val in (("adjacency", adj), ("laplacian", lap), ("spectrum", spectrum)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def N(self) -> int:
        return self.adjacency.shape[0]

    @property
    def norm_inf(self) -> float:
        return float(np.abs(self.laplacian).sum(axis=1).max(initial=0.0))

    def zero_eigenvalue_count(self) -> int:
        tol = ZERO_EIG_TOL * (1.0 + self.norm_inf)
        return int(np.sum(np.abs(self.spectrum) <= tol))


def build_laplacian(adjacency) -> NetworkGraph:
    """Validate an adjacency matrix and return the graph with its Laplacian and sorted spectrum."""
    return NetworkGraph(adjacency)


def graph_from_laplacian(laplacian) -> NetworkGraph:
    """Recover the adjacency from a Laplacian (off-diagonals negated) and rebuild the graph."""
    lap = np.array(laplacian, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise NonSquareError(f"laplacian must be square, got shape {lap.shape}")
    scale = max(1.0, float(np.abs(lap).max(initial=0.0)))
    if np.any(np.abs(lap.sum(axis=1)) > 1e-12 * scale * lap.shape[0]):
        raise ValueError("laplacian rows must sum to zero")
    adj = -lap.copy()
    np.fill_diagonal(adj, 0.0)
    adj[np.abs(adj) == 0] = 0.0
    return NetworkGraph(adj)


def _reachable(adj: np.ndarray, root: int) -> set[int]:
    # Information flows k -> i whenever a_ik > 0.
    seen = {root}
    queue = deque([root])
    while queue:
        k = queue.popleft()
        for i in np.flatnonzero(adj[:, k] > 0):
            i = int(i)
            if i not in seen:
                seen.add(i)
                queue.append(i)
    return seen


def spanning_tree_roots(graph: NetworkGraph) -> list[int]:
    """Nodes (0-based) from which every node is reachable along directed edges."""
    N = graph.N
    return [r for r in range(N) if len(_reachable(graph.adjacency, r)) == N]


def has_directed_spanning_tree(graph: NetworkGraph) -> bool:
    return graph.N > 0 and bool(spanning_tree_roots(graph))


def is_strongly_connected(graph: NetworkGraph) -> bool:
    return graph.N > 0 and len(spanning_tree_roots(graph)) == graph.N


def is_stabilizable(A: np.ndarray, B: np.ndarray) -> bool:
    """PBH test at every eigenvalue of ``A`` that is not strictly stable."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real < -HURWITZ_MARGIN:
            continue
        pbh = np.hstack([lam * np.eye(n) - A, B.astype(complex)])
        s = np.linalg.svd(pbh, compute_uv=False)
        if np.sum(s > 1e-9 * s[0]) < n:
            return False
    return True


@dataclass(frozen=True)
class TransformedLoop:
    """The p-th decoupled loop ``(sI - A)^{-1} B c lambda_p K``."""

    p: int
    lambda_p: complex
    model: AgentModel

    @property
    def gain(self) -> complex:
        return self.model.c * complex(self.lambda_p)

    def closed_loop_matrix(self, delta=None) -> np.ndarray:
        """``A - c lambda_p B K Delta``; ``delta`` is a matrix, a Perturbation or None."""
        K = self.model.K.astype(complex)
        if delta is not None:
            K = K @ np.asarray(getattr(delta, "matrix", delta), dtype=complex)
        return self.model.A - self.gain * (self.model.B @ K)

    def spectral_abscissa(self, delta=None) -> float:
        return spectral_abscissa(self.closed_loop_matrix(delta))

    def is_hurwitz(self) -> bool:
        return self.spectral_abscissa() < -HURWITZ_MARGIN


@dataclass(frozen=True)
class AssumptionReport:
    spanning_tree: bool
    strongly_connected: bool
    ab_stabilizable: bool
    a_minus_bk_hurwitz: bool
    simple_zero_eigenvalue: bool
    loop_hurwitz: dict
    loop_abscissa: dict

    @property
    def failing_loops(self) -> list[int]:
        return [p for p, ok in self.loop_hurwitz.items() if not ok]

    @property
    def passed(self) -> bool:
        # Strong connectivity and A - BK are informational only.
        return (
            self.spanning_tree
            and self.simple_zero_eigenvalue
            and self.ab_stabilizable
            and all(self.loop_hurwitz.values())
        )

    def as_dict(self) -> dict:
        return {
            "spanning_tree": self.spanning_tree,
            "strongly_connected": self.strongly_connected,
            "AB_stabilizable": self.ab_stabilizable,
            "A_minus_BK_hurwitz": self.a_minus_bk_hurwitz,
            "simple_zero_eigenvalue": self.simple_zero_eigenvalue,
            "loop_hurwitz": {str(p): v for p, v in self.loop_hurwitz.items()},
            "loop_abscissa": {str(p): v for p, v in self.loop_abscissa.items()},
            "passed": self.passed,
        }


def _nonzero_spectrum(graph: NetworkGraph) -> list[tuple[int, complex]]:
    """Pair loop indices 2..N with the spectrum after removing the eigenvalue nearest zero."""
    if graph.N <= 1:
        return []
    spec = list(graph.spectrum)
    spec.pop(int(np.argmin(np.abs(graph.spectrum))))
    return [(p, complex(lam)) for p, lam in enumerate(spec, start=2)]


def check_assumptions(model: AgentModel, graph: NetworkGraph) -> AssumptionReport:
    loops = [TransformedLoop(p, lam, model) for p, lam in _nonzero_spectrum(graph)]
    abscissa = {lp.p: lp.spectral_abscissa() for lp in loops}
    tree = has_directed_spanning_tree(graph)
    return AssumptionReport(
        spanning_tree=tree,
        strongly_connected=is_strongly_connected(graph),
        ab_stabilizable=is_stabilizable(model.A, model.B),
        a_minus_bk_hurwitz=is_hurwitz(model.A - model.BK),
        simple_zero_eigenvalue=graph.N == 0 or graph.zero_eigenvalue_count() == 1,
        loop_hurwitz={p: a < -HURWITZ_MARGIN for p, a in abscissa.items()},
        loop_abscissa=abscissa,
    )


def max_coupling_gain(
    model: AgentModel,
    graph: NetworkGraph,
    c_max: float = 10.0,
    tol: float = 1e-4,
    resolution: int = 2000,
) -> float:
    """Upper end of the first window of coupling gains that stabilises every loop.

    The interval ``(0, c_max]`` is scanned on ``resolution`` points; the first loss
    of stability after the window opens is then bisected down to ``tol``.  The
    returned value is the stable side of the final bracket.
    """
    lams = [lam for _, lam in _nonzero_spectrum(graph)]
    if not lams:
        return float(c_max)
    BK = model.BK

    def stable(c):
        return all(is_hurwitz(model.A - c * lam * BK) for lam in lams)

    grid = np.linspace(c_max / resolution, c_max, resolution)
    flags = [stable(c) for c in grid]
    if not any(flags):
        raise NoStabilizingGainError(f"no coupling gain in (0, {c_max}] stabilises all loops")
    first = flags.index(True)
    try:
        bad = flags.index(False, first)
    except ValueError:
        return float(c_max)
    lo, hi = grid[bad - 1], grid[bad]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return float(lo)


def transformed_loops(model: AgentModel, graph: NetworkGraph) -> list[TransformedLoop]:
    """The ``N - 1`` loops, after checking that the standing assumptions hold."""
    if graph.N <= 1:
        return []
    report = check_assumptions(model, graph)
    if not report.passed:
        reasons = []
        if not report.spanning_tree:
            reasons.append("the graph has no directed spanning tree")
        if not report.simple_zero_eigenvalue:
            reasons.append("the Laplacian zero eigenvalue is not simple")
        if not report.ab_stabilizable:
            reasons.append("(A, B) is not stabilizable")
        for p in report.failing_loops:
            reasons.append(
                f"A - c*lambda_{p}*B*K is not Hurwitz for p={p} "
                f"(abscissa {report.loop_abscissa[p]:.4g})"
            )
        raise AssumptionViolationError("; ".join(reasons), report.failing_loops)
    return [TransformedLoop(p, lam, model) for p, lam in _nonzero_spectrum(graph)]
