"""Fields on the unit torus and the discrete calculus used by every flow.

The torus is ``R/Z`` sampled at ``x_i = i/n``. Grid values are the primary
representation; spectra are derived with the real FFT and normalized so that
``coeffs[k]`` approximates ``int_0^1 f(x) exp(-2 pi i k x) dx``.

Every operation accepts batched values: the last axis is the grid axis and
any leading axes are treated as an ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonZeroMean

MEAN_ZERO_TOL = 1e-10


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid of ``n`` points on the unit torus."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 8 or self.n % 2:
            raise ValueError(f"grid size must be an even integer >= 8, got {self.n!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    @property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers ``2 pi k`` for ``k = 0..n/2``."""
        return 2.0 * np.pi * np.arange(self.n // 2 + 1)

    @property
    def dealias_cutoff(self) -> int:
        return self.n // 3


@dataclass(frozen=True)
class GridField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape[-1] != self.grid.n:
            raise ValueError(
                f"values have trailing length {values.shape[-1]}, grid has n={self.grid.n}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, n: int, func) -> "GridField":
        grid = TorusGrid(n)
        return cls(grid, func(grid.x))

    @classmethod
    def zeros(cls, n: int) -> "GridField":
        return cls(TorusGrid(n), np.zeros(n))

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def batch_shape(self) -> tuple:
        return self.values.shape[:-1]

    def with_values(self, values) -> "GridField":
        return GridField(self.grid, values)

    def __getitem__(self, idx) -> "GridField":
        """Index the ensemble axes, e.g. ``ens[3]`` or ``ens[:100]``."""
        return GridField(self.grid, self.values[idx])

    def __len__(self) -> int:
        if not self.batch_shape:
            raise TypeError("unbatched GridField has no len()")
        return self.batch_shape[0]


@dataclass(frozen=True)
class SpectrumField:
    """Nonnegative-wavenumber Fourier coefficients of a real field.

    Negative modes are implied by conjugate symmetry. The ``k = 0`` and
    ``k = n/2`` entries are real for any spectrum produced by :func:`to_spectrum`.
    """

    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape[-1] != self.n // 2 + 1:
            raise ValueError(
                f"expected {self.n // 2 + 1} coefficients for n={self.n}, got {coeffs.shape[-1]}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.n)

    def with_coeffs(self, coeffs) -> "SpectrumField":
        return SpectrumField(self.n, coeffs)


def to_spectrum(f: GridField) -> SpectrumField:
    return SpectrumField(f.n, np.fft.rfft(f.values, axis=-1) / f.n)


def to_grid(s: SpectrumField) -> GridField:
    coeffs = s.coeffs.copy()
    # imaginary parts at k=0 and k=n/2 have no real-field counterpart
    coeffs[..., 0] = coeffs[..., 0].real
    coeffs[..., -1] = coeffs[..., -1].real
    return GridField(s.grid, np.fft.irfft(coeffs * s.n, n=s.n, axis=-1))


def _ik(n: int) -> np.ndarray:
    ik = 2j * np.pi * np.arange(n // 2 + 1)
    ik[-1] = 0.0  # Nyquist derivative of a real field is taken as zero
    return ik


def spectral_derivative(f: GridField) -> GridField:
    s = np.fft.rfft(f.values, axis=-1)
    return f.with_values(np.fft.irfft(s * _ik(f.n), n=f.n, axis=-1))


def spectral_power_derivative(f: GridField, order: int) -> GridField:
    """``order``-th spectral derivative in one FFT pair."""
    s = np.fft.rfft(f.values, axis=-1)
    return f.with_values(np.fft.irfft(s * _ik(f.n) ** order, n=f.n, axis=-1))


def quadrature_mean(f: GridField) -> np.ndarray | float:
    """Periodic trapezoid rule, i.e. the plain grid average."""
    out = f.values.mean(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def check_mean_zero(f: GridField, tol: float = MEAN_ZERO_TOL) -> None:
    mean = np.abs(f.values.mean(axis=-1))
    worst = float(np.max(mean)) if np.ndim(mean) else float(mean)
    if worst >= tol:
        raise NonZeroMean(f"field mean {worst:.3e} exceeds tolerance {tol:.1e}")


def antiderivative_from_zero(phi: GridField) -> GridField:
    """Periodic antiderivative ``Phi(x) = int_0^x phi`` with ``Phi(0) = 0``.

    Raises:
        NonZeroMean: if ``phi`` does not integrate to zero.
    """
    check_mean_zero(phi)
    n = phi.n
    s = np.fft.rfft(phi.values, axis=-1)
    ik = _ik(n)
    inv = np.zeros_like(ik)
    inv[1:-1] = 1.0 / ik[1:-1]
    big = np.fft.irfft(s * inv, n=n, axis=-1)
    return phi.with_values(big - big[..., :1])


def dealias_23(s: SpectrumField) -> SpectrumField:
    coeffs = s.coeffs.copy()
    coeffs[..., s.n // 3 + 1 :] = 0.0
    return s.with_coeffs(coeffs)


def dealias_values(values: np.ndarray) -> np.ndarray:
    """Grid-value shortcut for ``to_grid(dealias_23(to_spectrum(f)))``."""
    n = values.shape[-1]
    s = np.fft.rfft(values, axis=-1)
    s[..., n // 3 + 1 :] = 0.0
    return np.fft.irfft(s, n=n, axis=-1)


def basis_coefficients(f: GridField, k_max: int, include_mean: bool = False) -> np.ndarray:
    """Coordinates in the orthonormal basis ``{1, sqrt2 cos 2pi k x, sqrt2 sin 2pi k x}``.

    Returns an array of shape ``batch + (2*k_max [+1],)`` ordered
    ``[c0,] a1, b1, a2, b2, ...``.
    """
    if not 1 <= k_max < f.n // 2:
        raise ValueError(f"k_max must lie in [1, n/2), got {k_max}")
    c = np.fft.rfft(f.values, axis=-1)[..., : k_max + 1] / f.n
    pairs = np.empty(c.shape[:-1] + (2 * k_max,))
    pairs[..., 0::2] = np.sqrt(2.0) * c[..., 1:].real
    pairs[..., 1::2] = -np.sqrt(2.0) * c[..., 1:].imag
    if include_mean:
        return np.concatenate([c[..., :1].real, pairs], axis=-1)
    return pairs


def basis_labels(k_max: int, include_mean: bool = False) -> list[str]:
    labels = ["c0"] if include_mean else []
    for k in range(1, k_max + 1):
        labels += [f"cos{k}", f"sin{k}"]
    return labels


def from_basis_coefficients(n: int, coeffs: np.ndarray, include_mean: bool = False) -> GridField:
    """Inverse of :func:`basis_coefficients` (band-limited synthesis)."""
    coeffs = np.asarray(coeffs, dtype=float)
    offset = 1 if include_mean else 0
    k_max = (coeffs.shape[-1] - offset) // 2
    if k_max >= n // 2:
        raise ValueError("too many modes for the grid")
    spec = np.zeros(coeffs.shape[:-1] + (n // 2 + 1,), dtype=complex)
    if include_mean:
        spec[..., 0] = coeffs[..., 0]
    a = coeffs[..., offset::2]
    b = coeffs[..., offset + 1 :: 2]
    spec[..., 1 : k_max + 1] = (a - 1j * b) / np.sqrt(2.0)
    return GridField(TorusGrid(n), np.fft.irfft(spec * n, n=n, axis=-1))
