"""
Fourier calculus on a uniform grid of the unit torus T^m.

Derivatives are exact for trigonometric polynomials resolved by the grid.
On even grids the Nyquist wave number is dropped from derivatives so that
gradient and divergence stay real and adjoint to each other; modes whose
every wave number is 0 or Nyquist then form the kernel of the flux
operators and are removed by the preconditioner.
"""

from typing import Callable, Sequence, Tuple

import numpy as np
from numpy.fft import irfftn, rfftn

TWO_PI = 2.0 * np.pi


class TorusGrid:
    """
    Uniform grid with `shape` points on [0, 1)^m.

    Attributes:
        shape: points per axis
        m: torus dimension
    """

    def __init__(self, shape: Sequence[int]):
        self.shape = tuple(int(n) for n in shape)
        self.m = len(self.shape)
        self.fft_axes = tuple(range(-self.m, 0))
        if self.m == 0 or min(self.shape) < 2:
            raise ValueError(f"invalid torus grid shape {self.shape}")
        waves = []
        for axis, n in enumerate(self.shape):
            k = np.fft.rfftfreq(n, 1.0 / n) if axis == self.m - 1 else np.fft.fftfreq(n, 1.0 / n)
            view = [1] * self.m
            view[axis] = k.size
            waves.append(k.reshape(view))
        self.wavenumbers = waves
        self.derivative_waves = []
        for axis, k in enumerate(waves):
            n = self.shape[axis]
            dk = k.copy()
            if n % 2 == 0:
                dk[np.abs(dk) == n // 2] = 0.0
            self.derivative_waves.append(dk)
        spectral_shape = tuple(self.shape[:-1]) + (self.shape[-1] // 2 + 1,)
        null = np.ones(spectral_shape, dtype=bool)
        for dk in self.derivative_waves:
            null &= np.broadcast_to(dk == 0, spectral_shape)
        self.null_modes = null
        self.spectral_shape = spectral_shape

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.arange(n) / n for n in self.shape)

    def points(self) -> np.ndarray:
        """Grid coordinates, shape shape + (m,)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def forward(self, f: np.ndarray) -> np.ndarray:
        """Normalized Fourier coefficients (mean at index 0)."""
        return rfftn(f, axes=self.fft_axes) / self.size

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return irfftn(coeffs * self.size, s=self.shape, axes=self.fft_axes)

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Spectral gradient of a scalar field, shape (m,) + shape."""
        fh = rfftn(f, axes=self.fft_axes)
        return np.stack([irfftn(1j * TWO_PI * dk * fh, s=self.shape, axes=self.fft_axes)
                         for dk in self.derivative_waves])

    def divergence(self, F: np.ndarray) -> np.ndarray:
        """Spectral divergence of a vector field of shape (m,) + shape."""
        total = np.zeros(self.spectral_shape, dtype=complex)
        for a, dk in enumerate(self.derivative_waves):
            total += 1j * TWO_PI * dk * rfftn(F[a], axes=self.fft_axes)
        return irfftn(total, s=self.shape, axes=self.fft_axes)

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.divergence(self.gradient(f))

    def symbol(self, metric: np.ndarray, shift: float = 0.0) -> np.ndarray:
        """(2 pi)^2 (k^T S k + shift |k|^2) on the spectral grid."""
        total = np.zeros(self.spectral_shape)
        for a in range(self.m):
            for b in range(self.m):
                weight = metric[a, b] + (shift if a == b else 0.0)
                if weight != 0.0:
                    total = total + weight * self.derivative_waves[a] * self.derivative_waves[b]
        return TWO_PI ** 2 * total

    def preconditioner(self, metric: np.ndarray, shift: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
        """Inverse of the constant-coefficient operator -div((S + shift I) grad), kernel removed."""
        sym = self.symbol(metric, shift)
        inverse = np.zeros_like(sym)
        live = ~self.null_modes
        inverse[live] = 1.0 / sym[live]

        def apply(r: np.ndarray) -> np.ndarray:
            return irfftn(rfftn(r, axes=self.fft_axes) * inverse, s=self.shape, axes=self.fft_axes)

        return apply

    @staticmethod
    def zero_mean(v: np.ndarray) -> np.ndarray:
        return v - v.mean()


def flux_operator(grid: TorusGrid, S: np.ndarray, shift: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    """
    psi -> -div(S grad psi) - shift * Laplace psi for a field S of shape
    shape + (m, m).
    """

    def apply(psi: np.ndarray) -> np.ndarray:
        g = grid.gradient(psi)
        flux = np.einsum("...ab,b...->a...", S, g)
        if shift:
            flux = flux + shift * g
        return -grid.divergence(flux)

    return apply
