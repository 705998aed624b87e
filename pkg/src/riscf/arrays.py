"""Subcarrier grids and beam-split-affected array response vectors.

Wideband arrays driven by frequency-flat phase shifters steer each
subcarrier towards a slightly different direction.  The response vectors
here carry that effect through the relative frequency ratio
``eta = f_m / f_c``: at the carrier itself (eta = 1) they reduce to the
usual half-wavelength steering vectors, away from it the spatial
frequency is stretched by eta and the beam squints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class SubcarrierGrid:
    """Uniform OFDM grid of subcarriers centred on the carrier ``f_c``.

    Attributes
    ----------
    f_c : carrier frequency in Hz.
    bandwidth : total two-sided bandwidth in Hz.
    frequencies : per-subcarrier absolute frequencies, shape (M,).
    eta : ``frequencies / f_c``, the beam-split ratios, shape (M,).
    """

    f_c: float
    bandwidth: float
    frequencies: np.ndarray
    eta: np.ndarray

    @property
    def num_subcarriers(self) -> int:
        return self.frequencies.shape[0]

    @property
    def carrier_period(self) -> float:
        return 1.0 / self.f_c


def make_subcarrier_grid(f_c: float, bandwidth: float, num_subcarriers: int) -> SubcarrierGrid:
    """Build the symmetric subcarrier grid around ``f_c``.

    Subcarrier m (1-based) sits at ``f_c + (B/M) * (m - 1 - (M-1)/2)``, so
    the grid is symmetric about the carrier and spans slightly less than
    the full bandwidth.
    """
    if not (math.isfinite(f_c) and f_c > 0):
        raise ParameterError(f"carrier frequency must be positive and finite, got {f_c}")
    if num_subcarriers < 1:
        raise ParameterError(f"need at least one subcarrier, got {num_subcarriers}")
    if not math.isfinite(bandwidth) or bandwidth < 0:
        raise ParameterError(f"bandwidth must be non-negative and finite, got {bandwidth}")
    m = num_subcarriers
    if m > 1 and bandwidth >= 2.0 * f_c * m / (m - 1):
        raise ParameterError(
            "bandwidth too large: the lowest subcarrier frequency would not be positive"
        )
    idx = np.arange(m, dtype=float) - (m - 1) / 2.0
    freqs = f_c + (bandwidth / m) * idx
    eta = freqs / f_c
    freqs.setflags(write=False)
    eta.setflags(write=False)
    return SubcarrierGrid(f_c=float(f_c), bandwidth=float(bandwidth), frequencies=freqs, eta=eta)


@dataclass(frozen=True)
class UlaGeometry:
    """Half-wavelength uniform linear array with ``num_antennas`` elements."""

    num_antennas: int

    def __post_init__(self) -> None:
        if self.num_antennas < 1:
            raise ParameterError(f"ULA needs at least one antenna, got {self.num_antennas}")

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.num_antennas, dtype=float)


@dataclass(frozen=True)
class UpaGeometry:
    """Half-wavelength uniform planar array, ``num_x`` by ``num_y`` elements."""

    num_x: int
    num_y: int

    def __post_init__(self) -> None:
        if self.num_x < 1 or self.num_y < 1:
            raise ParameterError(f"UPA needs at least one element per axis, got {self.num_x}x{self.num_y}")

    @property
    def num_elements(self) -> int:
        return self.num_x * self.num_y


def _check_angle_eta(eta: float, *angles: float) -> None:
    if not (math.isfinite(eta) and eta > 0):
        raise ParameterError(f"frequency ratio eta must be positive and finite, got {eta}")
    for a in angles:
        if not math.isfinite(a):
            raise ParameterError(f"angle must be finite, got {a}")


def ula_arv(phi: float, eta: float, geom: UlaGeometry) -> np.ndarray:
    """Unit-norm ULA response for azimuth ``phi`` at frequency ratio ``eta``.

    Entry n is ``exp(-j pi eta n sin(phi)) / sqrt(N)``.
    """
    _check_angle_eta(eta, phi)
    n = geom.indices
    v = np.exp(-1j * np.pi * eta * n * math.sin(phi)) / math.sqrt(geom.num_antennas)
    return v


def upa_arv(vartheta: float, varphi: float, eta: float, geom: UpaGeometry) -> np.ndarray:
    """Unit-norm UPA response, the Kronecker product of the two axis factors.

    The horizontal factor uses direction cosine ``sin(vartheta) cos(varphi)``
    and the vertical factor ``sin(vartheta) sin(varphi)``, both stretched
    by ``eta``.
    """
    _check_angle_eta(eta, vartheta, varphi)
    ux = math.sin(vartheta) * math.cos(varphi)
    uy = math.sin(vartheta) * math.sin(varphi)
    ex = np.exp(-1j * np.pi * eta * np.arange(geom.num_x) * ux)
    ey = np.exp(-1j * np.pi * eta * np.arange(geom.num_y) * uy)
    return np.kron(ex, ey) / math.sqrt(geom.num_elements)
