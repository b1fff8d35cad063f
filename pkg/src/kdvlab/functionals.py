"""Scalar functionals and transforms of mean-zero fields.

Includes the exponential-antiderivative functional ``K``, the Gibbs weight
``J``, conserved quantities of KdV/mKdV and of the lattice systems, the
corrected Miura map and a dense finite-dimensional Miura Jacobian.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .errors import IllConditioned, TooShort, WeightOverflow
from .field import (
    GridField,
    antiderivative_from_zero,
    check_mean_zero,
    quadrature_mean,
    spectral_derivative,
)

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
_LOG_MAX = np.log(np.finfo(float).max)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def log_k_functional(phi: GridField, sign: int = 1):
    """``log K(sign * phi)``, computed stably with log-sum-exp."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    big_phi = antiderivative_from_zero(phi).values
    return _scalar(logsumexp(2.0 * sign * big_phi, axis=-1) - np.log(phi.n))


def k_functional(phi: GridField, sign: int = 1):
    """``K(sign*phi) = int_0^1 exp(2 sign Phi(x)) dx`` with ``Phi(x) = int_0^x phi``."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    big_phi = antiderivative_from_zero(phi).values
    return _scalar(np.exp(2.0 * sign * big_phi).mean(axis=-1))


def log_j_weight(phi: GridField):
    """``log J(phi)``; finite for any finite field."""
    l2 = np.mean(phi.values**2, axis=-1)
    return _scalar(
        -LOG_SQRT_2PI
        + np.asarray(log_k_functional(phi, 1))
        + np.asarray(log_k_functional(phi, -1))
        + 0.5 * l2**2
    )


def j_weight(phi: GridField):
    """Gibbs weight ``(2 pi)^(-1/2) K(phi) K(-phi) exp((int phi^2)^2 / 2)``.

    Raises:
        NonZeroMean: if ``phi`` is not mean-zero.
        WeightOverflow: if the weight is not representable as a float.
    """
    logj = np.asarray(log_j_weight(phi))
    if np.any(logj >= _LOG_MAX):
        raise WeightOverflow("J(phi) overflows; field is far outside the support of P0")
    return _scalar(np.exp(logj))


def miura(phi: GridField) -> GridField:
    """Corrected Miura map ``phi_x + phi^2 - int phi^2``."""
    check_mean_zero(phi)
    sq = phi.values**2
    return phi.with_values(
        spectral_derivative(phi).values + sq - sq.mean(axis=-1, keepdims=True)
    )


def hamiltonian_mkdv(phi: GridField):
    phi_x = spectral_derivative(phi).values
    return _scalar(0.5 * np.mean(phi.values**4 + phi_x**2, axis=-1))


def h1(u: GridField):
    return _scalar(np.mean(u.values**2, axis=-1))


def e3(u: GridField):
    """KdV energy ``int u^3 + 1/2 int u_x^2``, conserved by ``u_t - 6 u u_x + u_xxx = 0``."""
    u_x = spectral_derivative(u).values
    return _scalar(np.mean(u.values**3 + 0.5 * u_x**2, axis=-1))


def lattice_q(u) -> float | np.ndarray:
    """Indefinite lattice invariant ``sum_i u_i^2 + 2 u_i u_{i+1}`` (periodic)."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] < 3:
        raise TooShort("lattice_q needs at least 3 sites")
    return _scalar(np.sum(u**2 + 2.0 * u * np.roll(u, -1, axis=-1), axis=-1))


def lattice_q_gradient(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return 2.0 * (u + np.roll(u, -1, axis=-1) + np.roll(u, 1, axis=-1))


def l2_norm(phi: GridField):
    """Discrete ``L^2(T)`` norm."""
    return _scalar(np.sqrt(np.mean(phi.values**2, axis=-1)))


def k_continuity_bound(phi: GridField, psi: GridField) -> float:
    """Right-hand side of ``|K(phi) - K(psi)| <= e^{2|phi|}(e^{2|psi-phi|} - 1)``."""
    diff = psi.with_values(psi.values - phi.values)
    return float(np.exp(2 * l2_norm(phi)) * np.expm1(2 * l2_norm(diff)))


def miura_jacobian_matrix(phi: GridField) -> np.ndarray:
    """Matrix of ``I + 2 Pi M_phi Pi D^{-1}`` on the ``n-1`` nonzero Fourier modes.

    Modes are ordered as in ``numpy.fft.fftfreq`` with ``k = 0`` removed; the
    Nyquist mode carries wavenumber ``-n/2``.
    """
    check_mean_zero(phi)
    if phi.batch_shape:
        raise ValueError("miura_jacobian_matrix takes a single field")
    n = phi.n
    c = np.fft.fft(phi.values) / n
    k = np.rint(np.fft.fftfreq(n, d=1.0 / n)).astype(int)[1:]
    conv = c[(k[:, None] - k[None, :]) % n]
    return np.eye(n - 1) + 2.0 * conv / (2j * np.pi * k[None, :])


def miura_jacobian_det(phi: GridField) -> float:
    """Dense determinant of the linearized corrected Miura map, derivative factored out.

    Raises:
        NonZeroMean: if ``phi`` is not mean-zero.
        IllConditioned: if the matrix is numerically singular.
    """
    mat = miura_jacobian_matrix(phi)
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond * np.finfo(float).eps >= 1.0:
        raise IllConditioned(f"Jacobian matrix condition number {cond:.3e}")
    sign, logdet = np.linalg.slogdet(mat)
    det = sign * np.exp(logdet)
    # conjugate symmetry makes the determinant real up to the Nyquist coupling
    return float(det.real)
