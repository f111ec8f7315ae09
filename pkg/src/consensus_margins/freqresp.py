"""Frequency responses of the decoupled loops and their Hermitian split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NearPoleError
from .model import AgentModel, NetworkGraph, TransformedLoop

COND_LIMIT = 1e12


@dataclass(frozen=True)
class LoopResponse:
    """``G = G_p(j omega)`` with ``G = X + jY``, ``X``, ``Y`` Hermitian."""

    omega: float
    G: np.ndarray
    singular_values: np.ndarray
    X: np.ndarray
    Y: np.ndarray

    @property
    def sigma_max(self) -> float:
        return float(self.singular_values[0])

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1])


def _resolvent_input(A: np.ndarray, B: np.ndarray, omega: float) -> np.ndarray:
    n = A.shape[0]
    M = 1j * omega * np.eye(n) - A
    if np.linalg.cond(M) > COND_LIMIT:
        raise NearPoleError(f"j*{omega:g} is numerically an eigenvalue of A")
    return np.linalg.solve(M, B.astype(complex))


def hermitian_split(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = 0.5 * (G + G.conj().T)
    Y = -0.5j * (G - G.conj().T)
    return X, Y


def response_from_matrix(G: np.ndarray, omega: float = float("nan")) -> LoopResponse:
    G = np.asarray(G, dtype=complex)
    X, Y = hermitian_split(G)
    s = np.linalg.svd(G, compute_uv=False)
    return LoopResponse(float(omega), G, s, X, Y)


def loop_matrix(loop: TransformedLoop, omega: float) -> np.ndarray:
    m = loop.model
    return _resolvent_input(m.A, m.B, omega) @ (loop.gain * m.K)


def eval_loop(loop: TransformedLoop, omega: float) -> LoopResponse:
    """Evaluate ``G_p(j omega)`` by a linear solve and decompose it."""
    return response_from_matrix(loop_matrix(loop, omega), omega)


def eval_loop_batch(loop: TransformedLoop, omegas) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised evaluation over a frequency grid.

    Returns ``(G, sv, near_pole)`` with ``G`` of shape ``(W, n, n)``, descending
    singular values ``sv`` of shape ``(W, n)`` and a boolean pole mask.  Near-pole
    rows have ``G`` set to NaN and ``sv`` set to ``[inf, ..., inf, nan]``
    so that ``sigma_max`` reads as infinite.
    """
    m = loop.model
    w = np.asarray(omegas, dtype=float)
    n = m.n
    M = 1j * w[:, None, None] * np.eye(n) - m.A
    near = np.linalg.cond(M) > COND_LIMIT
    M[near] = np.eye(n)
    G = np.linalg.solve(M, np.broadcast_to(m.B.astype(complex), (len(w),) + m.B.shape))
    G = G @ (loop.gain * m.K)
    sv = np.linalg.svd(G, compute_uv=False)
    G[near] = np.nan
    sv[near] = np.inf
    sv[near, -1] = np.nan
    return G, sv, near


def networked_determinant(model: AgentModel, graph: NetworkGraph, omega: float) -> complex:
    """``det(I + (I_N kron H) c (L kron I_n))`` with ``H = (j omega I - A)^{-1} B K``."""
    H = _resolvent_input(model.A, model.B, omega) @ model.K
    N, n = graph.N, model.n
    Hn = np.kron(np.eye(N), H)
    Ln = model.c * np.kron(graph.laplacian, np.eye(n))
    return complex(np.linalg.det(np.eye(N * n) + Hn @ Ln))


def product_determinant(model: AgentModel, graph: NetworkGraph, omega: float) -> complex:
    """Product of ``det(I + c lambda_p H)`` over the Laplacian spectrum."""
    H = _resolvent_input(model.A, model.B, omega) @ model.K
    out = 1.0 + 0j
    for lam in graph.spectrum:
        out *= np.linalg.det(np.eye(model.n) + model.c * lam * H)
    return complex(out)
