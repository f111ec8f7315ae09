"""Complex perturbations, their polar factors, and the maps used as margin certificates.

A nonsingular ``Delta`` factors uniquely as ``Delta = R U`` with ``R`` positive
definite Hermitian (the gain part) and ``U`` unitary (the phase part).  The
phase of ``U`` is the largest eigenvalue argument in absolute value; the gain of
``R`` is the largest ``|ln lambda_k(R)|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    InnerProductNotPositiveError,
    InnerProductNotRealError,
    NonUnitaryBasisError,
    NotPositiveDefiniteError,
    SingularInputError,
)


def wrap_angle(theta):
    """Map angles to ``(-pi, pi]``; values within 1e-12 of ``-pi`` go to ``pi``."""
    t = np.angle(np.exp(1j * np.asarray(theta, dtype=float)))
    return np.where(t <= -np.pi + 1e-12, np.pi, t)


def unitary_phases(U: np.ndarray) -> np.ndarray:
    """Eigenvalue arguments of a unitary matrix, wrapped to ``(-pi, pi]``."""
    return wrap_angle(np.angle(np.linalg.eigvals(U)))


def _hermitian_eigs(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=complex)
    scale = max(1.0, np.linalg.norm(R))
    if np.linalg.norm(R - R.conj().T) > 1e-10 * scale:
        raise NotPositiveDefiniteError("matrix is not Hermitian")
    lam = np.linalg.eigvalsh(0.5 * (R + R.conj().T))
    if lam[0] <= 0:
        raise NotPositiveDefiniteError(f"smallest eigenvalue {lam[0]:.3g} is not positive")
    return lam


def matrix_log_gain(R: np.ndarray) -> float:
    """``max_k |ln lambda_k(R)|`` for a positive definite Hermitian ``R``."""
    return float(np.max(np.abs(np.log(_hermitian_eigs(R)))))


@dataclass(frozen=True)
class Perturbation:
    """``matrix = R @ U`` with cached phase and gain measures."""

    matrix: np.ndarray
    R: np.ndarray
    U: np.ndarray
    phase: float
    gain: float

    @classmethod
    def from_factors(cls, R, U) -> "Perturbation":
        R = np.asarray(R, dtype=complex)
        U = np.asarray(U, dtype=complex)
        phase = float(np.max(np.abs(unitary_phases(U)))) if U.size else 0.0
        gain = matrix_log_gain(R) if R.size else 0.0
        return cls(R @ U, R, U, phase, gain)

    @property
    def phases(self) -> np.ndarray:
        """Eigen-angles of ``U`` in ascending order."""
        return np.sort(unitary_phases(self.U))

    @property
    def gains(self) -> np.ndarray:
        """Eigenvalues of ``R`` in ascending order."""
        return np.linalg.eigvalsh(0.5 * (self.R + self.R.conj().T))


def polar_decompose(M) -> Perturbation:
    """Left polar factorisation ``M = R U``."""
    M = np.asarray(M, dtype=complex)
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[-1] <= 1e-12 * s[0]:
        raise SingularInputError("matrix is numerically singular")
    U, R = scipy.linalg.polar(M, side="left")
    R = 0.5 * (R + R.conj().T)
    p = Perturbation.from_factors(R, U)
    return Perturbation(M, p.R, p.U, p.phase, p.gain)


def _check_unitary(P: np.ndarray, name: str = "P") -> None:
    n = P.shape[0]
    if P.shape != (n, n) or np.linalg.norm(P @ P.conj().T - np.eye(n)) > 1e-10:
        raise NonUnitaryBasisError(f"{name} is not unitary")


def unitary_from_phases(P, phases) -> Perturbation:
    """``U = P diag(exp(j phi_k)) P*`` as a pure phase perturbation."""
    P = np.asarray(P, dtype=complex)
    _check_unitary(P)
    phi = wrap_angle(np.asarray(phases, dtype=float))
    if phi.shape != (P.shape[0],):
        raise ValueError("need one phase per column of P")
    U = (P * np.exp(1j * phi)) @ P.conj().T
    R = np.eye(P.shape[0], dtype=complex)
    return Perturbation(U, R, U, float(np.max(np.abs(phi), initial=0.0)), 0.0)


def plane_rotation_unitary(v, z) -> Perturbation:
    """Unitary ``U`` with ``U v = z`` that is the identity off ``span{v, z}``.

    Inside the plane it acts as ``[[a, -b], [b, conj(a)]]`` in the basis
    ``(v, w)``, where ``a = v* z`` and ``b w`` is the part of ``z`` orthogonal to v.
    Its eigenvalues are ``exp(+-j theta)`` with ``cos theta = Re(v* z)``, which is
    the least phase any unitary mapping v to z can have.
    """
    v = np.asarray(v, dtype=complex).ravel()
    z = np.asarray(z, dtype=complex).ravel()
    if abs(np.linalg.norm(v) - 1) > 1e-10 or abs(np.linalg.norm(z) - 1) > 1e-10:
        raise ValueError("v and z must be unit vectors")
    n = v.size
    a = np.vdot(v, z)
    w = z - a * v
    # Second pass: when z is close to a multiple of v, w needs re-orthogonalising.
    corr = np.vdot(v, w)
    w = w - corr * v
    a = a + corr
    b = np.linalg.norm(w)
    U = np.eye(n, dtype=complex) + (a - 1) * np.outer(v, v.conj())
    if b > 1e-12:
        w = w / b
        U += (np.conj(a) - 1) * np.outer(w, w.conj())
        U += b * (np.outer(w, v.conj()) - np.outer(v, w.conj()))
    else:
        # z is a unimodular multiple of v.
        U = np.eye(n, dtype=complex) + (a / abs(a) - 1) * np.outer(v, v.conj())
    return Perturbation.from_factors(np.eye(n), U)


def _orthonormal_completion(vectors: list[np.ndarray], n: int, tol: float = 1e-8) -> np.ndarray:
    """Extend orthonormal columns with coordinate axes, in order, to a unitary basis."""
    basis = list(vectors)
    for k in range(n):
        if len(basis) == n:
            break
        e = np.zeros(n, dtype=complex)
        e[k] = 1.0
        Q = np.array(basis).T if basis else np.zeros((n, 0))
        r = e - Q @ (Q.conj().T @ e)
        # Second pass keeps the result orthogonal to working precision.
        r = r - Q @ (Q.conj().T @ r)
        nr = np.linalg.norm(r)
        if nr > tol:
            basis.append(r / nr)
    return np.array(basis).T


def pd_hermitian_map(v, z, p22: float | None = None, balanced: bool = False) -> Perturbation:
    """Positive definite Hermitian ``R`` with ``R v = z``, requiring ``v* z > 0``.

    In an orthonormal basis ``q1 = v / |v|``, ``q2 ~ z - (q1* z) q1`` and fill-in
    axes, ``R`` is ``[[alpha/gamma, beta/gamma], [beta/gamma, p22]]`` on the first
    two coordinates and the identity elsewhere.  Any ``p22 > beta^2 / (gamma alpha)``
    is admissible.  The default adds one to that bound.  ``balanced=True`` picks the
    unit-determinant block, which has the smallest possible gain,
    ``arccosh((|v|^2 + |z|^2) / (2 v* z))``.
    """
    v = np.asarray(v, dtype=complex).ravel()
    z = np.asarray(z, dtype=complex).ravel()
    if v.shape != z.shape:
        raise ValueError("v and z must have the same length")
    n = v.size
    s = np.vdot(v, z)
    if abs(s.imag) > 1e-9 * max(1.0, np.linalg.norm(v) * np.linalg.norm(z)):
        raise InnerProductNotRealError(f"v* z = {s:.6g} is not real")
    if s.real <= 0:
        raise InnerProductNotPositiveError(f"v* z = {s.real:.6g} is not positive")
    gamma = np.linalg.norm(v)
    q1 = v / gamma
    a = np.vdot(q1, z)
    q2 = z - a * q1
    # Second pass: cancellation in q2 would otherwise leak into R v when beta is small.
    corr = np.vdot(q1, q2)
    q2 = q2 - corr * q1
    alpha = (a + corr).real
    beta = np.linalg.norm(q2)
    if beta > 1e-12 * max(1.0, np.linalg.norm(z)):
        Q = _orthonormal_completion([q1, q2 / beta], n)
        bound = beta**2 / (gamma * alpha)
        if balanced:
            p22 = (gamma**2 + beta**2) / (gamma * alpha)
        elif p22 is None:
            p22 = bound + 1.0
        elif p22 <= bound:
            raise ValueError(f"p22 must exceed {bound:.6g}")
        block = np.array([[alpha / gamma, beta / gamma], [beta / gamma, p22]])
    else:
        Q = _orthonormal_completion([q1], n)
        block = np.array([[alpha / gamma]])
    D = np.eye(n, dtype=complex)
    k = block.shape[0]
    D[:k, :k] = block
    R = Q @ D @ Q.conj().T
    R = 0.5 * (R + R.conj().T)
    return Perturbation.from_factors(R, np.eye(n))
