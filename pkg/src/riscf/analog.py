"""Closed-form AP analog precoding: phase shifters plus a true-time-delay layer.

Each RF chain drives D delay elements and each delay element fans out to
N_d = N_tx / D phase shifters.  The phase-shifter blocks steer at the
carrier frequency and carry a per-block compensation term that cancels
the carrier's inter-block phase progression; the delay elements then
re-apply that progression scaled by the actual subcarrier frequency.
The composed column therefore tracks the squinted steering direction on
every subcarrier, exactly so when N_d = 1.

The assembled per-AP matrices are normalized to unit column norm, which
keeps the power budget bookkeeping independent of D.  The raw composed
column (entries of modulus 1/sqrt(N_d), norm sqrt(D)) is available via
``aligned_fbar_column`` for gain studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .arrays import SubcarrierGrid
from .errors import ParameterError


@dataclass(frozen=True)
class TdLayerConfig:
    """Sizes of the hybrid layer: ``num_antennas`` split into ``num_delays`` blocks."""

    num_antennas: int
    num_delays: int

    def __post_init__(self) -> None:
        if self.num_antennas < 1 or self.num_delays < 1:
            raise ParameterError("antenna and delay counts must be positive")
        if self.num_antennas % self.num_delays != 0:
            raise ParameterError(
                f"delay count {self.num_delays} must divide the antenna count {self.num_antennas}"
            )

    @property
    def n_per_delay(self) -> int:
        return self.num_antennas // self.num_delays


def ap_td_vector(phi: float, eta: float, cfg: TdLayerConfig) -> np.ndarray:
    """Per-delay-element phases at frequency ratio ``eta``, shape (D,).

    Element d applies exp(-j pi eta N_d sin(phi) d), the inter-block
    progression of the squinted steering vector.
    """
    if not (math.isfinite(eta) and eta > 0):
        raise ParameterError(f"frequency ratio must be positive, got {eta}")
    d = np.arange(cfg.num_delays, dtype=float)
    return np.exp(-1j * np.pi * eta * cfg.n_per_delay * math.sin(phi) * d)


def ap_td_delays(phi: float, cfg: TdLayerConfig, f_c: float) -> np.ndarray:
    """Physical delays (seconds) realizing ``ap_td_vector`` at every subcarrier.

    Delay element d is set to N_d sin(phi) d / (2 f_c); multiplying by the
    subcarrier frequency reproduces the eta-scaled phase ramp.  Negative
    values are relative to a common delay offset.
    """
    if f_c <= 0:
        raise ParameterError(f"carrier frequency must be positive, got {f_c}")
    d = np.arange(cfg.num_delays, dtype=float)
    return cfg.n_per_delay * math.sin(phi) * d / (2.0 * f_c)


def delta_periods(phi: float, eta: float, cfg: TdLayerConfig) -> float:
    """Residual per-block delay, in carrier periods, that the layer absorbs.

    Diagnostic only: (eta - 1) sin(phi) N_d / (2 eta) is the extra delay
    (relative to the carrier design) needed at ratio eta.
    """
    if not (math.isfinite(eta) and eta > 0):
        raise ParameterError(f"frequency ratio must be positive, got {eta}")
    return (eta - 1.0) * math.sin(phi) * cfg.n_per_delay / (2.0 * eta)


def ap_rf_blocks(phi: float, cfg: TdLayerConfig, compensated: bool = True) -> np.ndarray:
    """Phase-shifter blocks, shape (D, N_d), entries of modulus 1/sqrt(N_d).

    Block d is the d-th length-N_d segment of the carrier-frequency
    steering vector; with ``compensated`` it is rotated by
    exp(+j pi d N_d sin(phi)), which cancels the carrier inter-block
    progression (all blocks then coincide) and leaves that progression to
    the delay layer.
    """
    if not math.isfinite(phi):
        raise ParameterError(f"angle must be finite, got {phi}")
    s = math.sin(phi)
    n_d = cfg.n_per_delay
    d = np.arange(cfg.num_delays, dtype=float)[:, None]
    i = np.arange(n_d, dtype=float)[None, :]
    blocks = np.exp(-1j * np.pi * s * (d * n_d + i)) / math.sqrt(n_d)
    if compensated:
        blocks = blocks * np.exp(1j * np.pi * d * n_d * s)
    return blocks


def compose_column(rf_blocks: np.ndarray, td_phases: np.ndarray) -> np.ndarray:
    """Apply one phase per block and flatten to a length-N_tx column."""
    if rf_blocks.shape[0] != td_phases.shape[0]:
        raise ParameterError("block count and delay phase count differ")
    return (rf_blocks * td_phases[:, None]).reshape(-1)


def aligned_fbar_column(phi: float, grid: SubcarrierGrid, m: int, cfg: TdLayerConfig) -> np.ndarray:
    """Composed analog column aimed at ``phi`` on subcarrier m, norm sqrt(D)."""
    if not (0 <= m < grid.num_subcarriers):
        raise ParameterError(f"subcarrier index {m} out of range")
    return compose_column(ap_rf_blocks(phi, cfg), ap_td_vector(phi, float(grid.eta[m]), cfg))


@dataclass(frozen=True)
class AnalogPrecoder:
    """Frozen analog stage of every AP.

    ``fbar`` has shape (A, M, N_tx, N_rf) with unit-norm columns; one RF
    chain per RIS, aimed at that RIS.  ``rf_blocks`` (A, R, D, N_d) and
    ``td_delays`` (A, R, D) record the factorized hardware settings.
    """

    grid: SubcarrierGrid
    cfg: TdLayerConfig
    fbar: np.ndarray
    rf_blocks: np.ndarray
    td_delays: np.ndarray
    with_td: bool

    def __post_init__(self) -> None:
        for arr in (self.fbar, self.rf_blocks, self.td_delays):
            arr.setflags(write=False)

    @property
    def num_aps(self) -> int:
        return self.fbar.shape[0]

    @property
    def num_rf(self) -> int:
        return self.fbar.shape[3]

    def fbar_blockdiag(self, m: int) -> np.ndarray:
        """Network analog matrix for subcarrier m: block-diagonal (A N_tx, A N_rf)."""
        A, _, n_tx, n_rf = self.fbar.shape
        out = np.zeros((A * n_tx, A * n_rf), dtype=complex)
        for a in range(A):
            out[a * n_tx:(a + 1) * n_tx, a * n_rf:(a + 1) * n_rf] = self.fbar[a, m]
        return out

    def gram(self) -> np.ndarray:
        """Per-AP, per-subcarrier Gram matrices fbar^H fbar, shape (A, M, N_rf, N_rf)."""
        return np.einsum("amtr,amts->amrs", self.fbar.conj(), self.fbar)


def assemble_fbar(
    rf_blocks: np.ndarray, td_delays: np.ndarray, grid: SubcarrierGrid
) -> np.ndarray:
    """Compose blocks and delays into per-subcarrier analog matrices.

    ``rf_blocks`` has shape (A, R, D, N_d) and ``td_delays`` (A, R, D) in
    seconds.  Column r of the output (A, M, N_tx, N_rf) is the composed
    column for RF chain r scaled by 1/sqrt(D), so every column has unit
    norm.
    """
    A, R, D, n_d = rf_blocks.shape
    if td_delays.shape != (A, R, D):
        raise ParameterError(f"delay array {td_delays.shape} inconsistent with blocks {rf_blocks.shape}")
    M = grid.num_subcarriers
    # (A, R, M, D) delay phases at each subcarrier frequency
    phases = np.exp(-2j * np.pi * grid.frequencies[None, None, :, None] * td_delays[:, :, None, :])
    cols = rf_blocks[:, :, None, :, :] * phases[..., None]       # (A, R, M, D, N_d)
    cols = cols.reshape(A, R, M, D * n_d) / math.sqrt(D)
    return cols.transpose(0, 2, 3, 1)                            # (A, M, N_tx, R)


def design_analog_precoder(
    aod: np.ndarray, grid: SubcarrierGrid, cfg: TdLayerConfig, with_td: bool = True
) -> AnalogPrecoder:
    """Point each RF chain of every AP along one departure angle.

    ``aod`` holds the departure angles, shape (A, n_rf).  With ``with_td``
    the delay layer tracks the squint per subcarrier; without it the
    delays are zero and the phase shifters hold a plain carrier-frequency
    steering vector (no compensation), giving a frequency-flat stage.
    """
    aod = np.asarray(aod, dtype=float)
    if aod.ndim != 2:
        raise ParameterError("departure angle array must be (A, R)")
    A, R = aod.shape
    blocks = np.empty((A, R, cfg.num_delays, cfg.n_per_delay), dtype=complex)
    delays = np.zeros((A, R, cfg.num_delays), dtype=float)
    for a in range(A):
        for r in range(R):
            blocks[a, r] = ap_rf_blocks(aod[a, r], cfg, compensated=with_td)
            if with_td:
                delays[a, r] = ap_td_delays(aod[a, r], cfg, grid.f_c)
    fbar = assemble_fbar(blocks, delays, grid)
    return AnalogPrecoder(
        grid=grid, cfg=cfg, fbar=fbar, rf_blocks=blocks, td_delays=delays, with_td=with_td
    )
