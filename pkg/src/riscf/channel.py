"""Line-of-sight wideband channel synthesis and the reflected-path composition.

Three primitive links make up the downlink: AP to RIS (a rank-one matrix
per subcarrier), RIS to user (a vector per subcarrier) and the direct
AP to user path.  Each primitive carries a complex gain, a propagation
delay that turns into a per-subcarrier phase ramp, and beam-split-aware
array responses.  The effective channel seen by a user stitches the
primitives together through the RIS reflection coefficients and the
per-subcarrier RIS delay phases.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .arrays import SubcarrierGrid, UlaGeometry, UpaGeometry, ula_arv, upa_arv
from .errors import ParameterError


@dataclass(frozen=True)
class ApRisPathParams:
    """One AP to RIS link: gain, delay and the angles on both ends."""

    alpha: complex          # complex path gain
    tau: float              # propagation delay, seconds
    vartheta: float         # elevation-like AoA at the RIS
    varphi: float           # azimuth-like AoA at the RIS
    phi: float              # AoD at the AP ULA


@dataclass(frozen=True)
class RisUePathParams:
    """One RIS to user link."""

    beta: complex
    tau: float
    mu: float               # elevation-like AoD at the RIS
    nu: float               # azimuth-like AoD at the RIS


@dataclass(frozen=True)
class DirectPathParams:
    """One AP to user direct link."""

    gamma: complex
    tau: float
    psi: float              # AoD at the AP ULA


def _delay_phases(tau: float, grid: SubcarrierGrid) -> np.ndarray:
    if not np.isfinite(tau) or tau < 0:
        raise ParameterError(f"delay must be non-negative and finite, got {tau}")
    return np.exp(-2j * np.pi * tau * grid.frequencies)


def gen_ap_ris_channel(
    params: ApRisPathParams, grid: SubcarrierGrid, ula: UlaGeometry, upa: UpaGeometry
) -> np.ndarray:
    """Per-subcarrier rank-one AP to RIS matrices, shape (M, N_ris, N_tx)."""
    phases = _delay_phases(params.tau, grid)
    out = np.empty((grid.num_subcarriers, upa.num_elements, ula.num_antennas), dtype=complex)
    for m, eta in enumerate(grid.eta):
        b = upa_arv(params.vartheta, params.varphi, eta, upa)
        a = ula_arv(params.phi, eta, ula)
        out[m] = params.alpha * phases[m] * np.outer(b, a.conj())
    return out


def gen_ris_ue_channel(
    params: RisUePathParams, grid: SubcarrierGrid, upa: UpaGeometry
) -> np.ndarray:
    """Per-subcarrier RIS to user vectors, shape (M, N_ris)."""
    phases = _delay_phases(params.tau, grid)
    out = np.empty((grid.num_subcarriers, upa.num_elements), dtype=complex)
    for m, eta in enumerate(grid.eta):
        out[m] = params.beta * phases[m] * upa_arv(params.mu, params.nu, eta, upa)
    return out


def gen_direct_channel(
    params: DirectPathParams, grid: SubcarrierGrid, ula: UlaGeometry
) -> np.ndarray:
    """Per-subcarrier direct AP to user vectors, shape (M, N_tx)."""
    phases = _delay_phases(params.tau, grid)
    out = np.empty((grid.num_subcarriers, ula.num_antennas), dtype=complex)
    for m, eta in enumerate(grid.eta):
        out[m] = params.gamma * phases[m] * ula_arv(params.psi, eta, ula)
    return out


@dataclass(frozen=True)
class ChannelRealization:
    """All primitive links of one network snapshot.

    Arrays are read-only once constructed.  ``G`` holds the AP to RIS
    matrices with shape (A, R, M, N_ris, N_tx), ``u`` the RIS to user
    vectors with shape (R, K, M, N_ris) and ``h_dir`` the direct vectors
    with shape (A, K, M, N_tx).  Estimated (perturbed) realizations share
    this container; only freshly synthesized ones are exactly rank one
    per (a, r, m) slice.
    """

    grid: SubcarrierGrid
    G: np.ndarray
    u: np.ndarray
    h_dir: np.ndarray

    def __post_init__(self) -> None:
        A, R, M, n_ris, n_tx = self.G.shape
        if self.u.shape != (R, self.u.shape[1], M, n_ris):
            raise ParameterError(f"RIS-user array has shape {self.u.shape}, inconsistent with G {self.G.shape}")
        K = self.u.shape[1]
        if self.h_dir.shape != (A, K, M, n_tx):
            raise ParameterError(f"direct array has shape {self.h_dir.shape}, expected {(A, K, M, n_tx)}")
        if M != self.grid.num_subcarriers:
            raise ParameterError("subcarrier axis does not match the grid")
        for arr in (self.G, self.u, self.h_dir):
            arr.setflags(write=False)

    @property
    def num_aps(self) -> int:
        return self.G.shape[0]

    @property
    def num_ris(self) -> int:
        return self.G.shape[1]

    @property
    def num_users(self) -> int:
        return self.u.shape[1]

    @property
    def num_subcarriers(self) -> int:
        return self.G.shape[2]

    @property
    def n_ris(self) -> int:
        return self.G.shape[3]

    @property
    def n_tx(self) -> int:
        return self.G.shape[4]

    def stacked_g(self) -> np.ndarray:
        """AP to RIS matrices with the RIS axis merged: (A, M, R*N_ris, N_tx)."""
        A, R, M, n_ris, n_tx = self.G.shape
        return self.G.transpose(0, 2, 1, 3, 4).reshape(A, M, R * n_ris, n_tx)

    def stacked_u(self) -> np.ndarray:
        """RIS to user vectors with the RIS axis merged: (K, M, R*N_ris)."""
        R, K, M, n_ris = self.u.shape
        return self.u.transpose(1, 2, 0, 3).reshape(K, M, R * n_ris)


def synthesize_realization(
    grid: SubcarrierGrid,
    ula: UlaGeometry,
    upa: UpaGeometry,
    ap_ris: Sequence[Sequence[ApRisPathParams]],
    ris_ue: Sequence[Sequence[RisUePathParams]],
    direct: Sequence[Sequence[DirectPathParams]],
) -> ChannelRealization:
    """Assemble a realization from per-link path parameters.

    ``ap_ris`` is indexed [a][r], ``ris_ue`` [r][k] and ``direct`` [a][k].
    """
    A = len(direct)
    K = len(direct[0]) if A else 0
    R = len(ris_ue)
    M = grid.num_subcarriers
    if len(ap_ris) != A or any(len(row) != R for row in ap_ris):
        raise ParameterError(f"AP-RIS table must be {A}x{R}")
    if any(len(row) != K for row in ris_ue) or any(len(row) != K for row in direct):
        raise ParameterError(f"per-user tables must have {K} columns")
    G = np.zeros((A, R, M, upa.num_elements, ula.num_antennas), dtype=complex)
    u = np.zeros((R, K, M, upa.num_elements), dtype=complex)
    h_dir = np.zeros((A, K, M, ula.num_antennas), dtype=complex)
    for a in range(A):
        for r in range(R):
            G[a, r] = gen_ap_ris_channel(ap_ris[a][r], grid, ula, upa)
    for r in range(R):
        for k in range(K):
            u[r, k] = gen_ris_ue_channel(ris_ue[r][k], grid, upa)
    for a in range(A):
        for k in range(K):
            h_dir[a, k] = gen_direct_channel(direct[a][k], grid, ula)
    return ChannelRealization(grid=grid, G=G, u=u, h_dir=h_dir)


@dataclass(frozen=True)
class RisConfiguration:
    """Reflection phases shared by all subcarriers plus per-subcarrier delay phases.

    ``theta`` stacks every element of every RIS, length R*N_ris; ``t`` holds
    one unit-modulus delay phase vector per subcarrier, shape (M, R*N_ris).
    """

    theta: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        if self.t.ndim != 2 or self.t.shape[1] != self.theta.shape[0]:
            raise ParameterError(f"delay phase array {self.t.shape} inconsistent with theta length {self.theta.shape}")
        for name, arr in (("theta", self.theta), ("t", self.t)):
            if arr.size and np.max(np.abs(np.abs(arr) - 1.0)) > 1e-9:
                raise ParameterError(f"{name} entries must be unit modulus")
        self.theta.setflags(write=False)
        self.t.setflags(write=False)

    @classmethod
    def neutral(cls, num_subcarriers: int, total_elements: int) -> "RisConfiguration":
        return cls(
            theta=np.ones(total_elements, dtype=complex),
            t=np.ones((num_subcarriers, total_elements), dtype=complex),
        )


def effective_channel_rows(
    realization: ChannelRealization, theta: np.ndarray, t: np.ndarray, use_ris: bool = True
) -> np.ndarray:
    """Conjugated effective channels h^H, shape (A, K, M, N_tx).

    Row (a, k, m) is the direct row plus, when ``use_ris`` is set, the
    reflected contribution through every RIS with reflection ``theta``
    and per-subcarrier delay phases ``t``.
    """
    rows = realization.h_dir.conj().copy()
    if use_ris and realization.num_ris > 0:
        u_st = realization.stacked_u()                      # (K, M, RN)
        g_st = realization.stacked_g()                      # (A, M, RN, N_tx)
        weights = u_st.conj() * theta[None, None, :] * t[None, :, :]
        rows += np.einsum("kmn,amnt->akmt", weights, g_st)
    return rows


def effective_channel(
    realization: ChannelRealization,
    theta: np.ndarray,
    t: np.ndarray,
    a: int,
    k: int,
    m: int,
    use_ris: bool = True,
) -> np.ndarray:
    """Effective channel column h for one (AP, user, subcarrier) triple."""
    if not (0 <= a < realization.num_aps and 0 <= k < realization.num_users and 0 <= m < realization.num_subcarriers):
        raise ParameterError(f"index (a={a}, k={k}, m={m}) out of range")
    rows = effective_channel_rows(realization, theta, t, use_ris=use_ris)
    return rows[a, k, m].conj()


def stack_effective_channel(
    realization: ChannelRealization,
    theta: np.ndarray,
    t: np.ndarray,
    k: int,
    m: int,
    use_ris: bool = True,
) -> np.ndarray:
    """Network-wide effective channel for user k on subcarrier m, length A*N_tx."""
    rows = effective_channel_rows(realization, theta, t, use_ris=use_ris)
    return rows[:, k, m, :].conj().reshape(-1)


def perturb_csi(
    realization: ChannelRealization, delta: float, rng: np.random.Generator
) -> ChannelRealization:
    """Return an estimated realization with relative error level ``delta``.

    Every primitive coefficient h picks up additive noise with variance
    ``delta * |h|^2``.  The unit-variance noise draws do not depend on
    ``delta``, so sweeping delta with a fixed generator state degrades the
    estimate along a common noise direction.
    """
    if not np.isfinite(delta) or delta < 0:
        raise ParameterError(f"error level delta must be non-negative, got {delta}")

    def noisy(arr: np.ndarray) -> np.ndarray:
        z = (rng.standard_normal(arr.shape) + 1j * rng.standard_normal(arr.shape)) / np.sqrt(2.0)
        return arr + np.sqrt(delta) * np.abs(arr) * z

    g_hat = noisy(realization.G)
    u_hat = noisy(realization.u)
    d_hat = noisy(realization.h_dir)
    if delta == 0.0:
        return realization
    return ChannelRealization(grid=realization.grid, G=g_hat, u=u_hat, h_dir=d_hat)
