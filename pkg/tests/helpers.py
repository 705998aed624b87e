"""Independent reference implementations used to cross-check the package.

Everything here is written in the most literal form possible: explicit
loops over APs, users and subcarriers, dense block-diagonal matrices and
scalar sums.  The package's vectorized code must agree with these
oracles; the oracles themselves are kept too simple to be wrong.
"""

from __future__ import annotations

import math

import numpy as np

from riscf.analog import AnalogPrecoder, TdLayerConfig, design_analog_precoder
from riscf.arrays import SubcarrierGrid, UlaGeometry, UpaGeometry, make_subcarrier_grid
from riscf.channel import (
    ApRisPathParams,
    ChannelRealization,
    DirectPathParams,
    RisUePathParams,
    synthesize_realization,
)


def random_realization(
    rng: np.random.Generator,
    num_aps: int = 2,
    num_ris: int = 2,
    num_users: int = 2,
    num_subcarriers: int = 2,
    n_tx: int = 4,
    n_x: int = 2,
    n_y: int = 2,
    f_c: float = 100e9,
    bandwidth: float = 10e9,
) -> ChannelRealization:
    """Small dense realization with random gains, delays and angles."""
    grid = make_subcarrier_grid(f_c, bandwidth, num_subcarriers)
    ula = UlaGeometry(n_tx)
    upa = UpaGeometry(n_x, n_y)

    def gain() -> complex:
        return complex(rng.normal(), rng.normal())

    def angle() -> float:
        return float(rng.uniform(-1.3, 1.3))

    ap_ris = [
        [
            ApRisPathParams(alpha=gain(), tau=float(rng.uniform(0, 1e-7)),
                            vartheta=angle(), varphi=angle(), phi=angle())
            for _ in range(num_ris)
        ]
        for _ in range(num_aps)
    ]
    ris_ue = [
        [
            RisUePathParams(beta=gain(), tau=float(rng.uniform(0, 1e-7)),
                            mu=angle(), nu=angle())
            for _ in range(num_users)
        ]
        for _ in range(num_ris)
    ]
    direct = [
        [
            DirectPathParams(gamma=gain(), tau=float(rng.uniform(0, 1e-7)), psi=angle())
            for _ in range(num_users)
        ]
        for _ in range(num_aps)
    ]
    return synthesize_realization(grid, ula, upa, ap_ris, ris_ue, direct)


def random_precoder(
    rng: np.random.Generator, realization: ChannelRealization, with_td: bool = True
) -> AnalogPrecoder:
    """Analog stage aimed at random directions, one RF chain per RIS."""
    A, R = realization.num_aps, realization.num_ris
    cfg = TdLayerConfig(num_antennas=realization.n_tx, num_delays=realization.n_tx)
    aod = rng.uniform(-1.3, 1.3, size=(A, max(R, 1)))
    return design_analog_precoder(aod, realization.grid, cfg, with_td=with_td)


def random_variables(
    rng: np.random.Generator, realization: ChannelRealization, precoder: AnalogPrecoder
):
    """Random unit-modulus phases and a random digital precoder (no power scaling)."""
    M = realization.num_subcarriers
    K = realization.num_users
    n = realization.num_aps * precoder.num_rf
    n_total = realization.num_ris * realization.n_ris
    w = (rng.normal(size=(M, K, n)) + 1j * rng.normal(size=(M, K, n))) / math.sqrt(n)
    theta = np.exp(2j * np.pi * rng.random(n_total))
    t = np.exp(2j * np.pi * rng.random((M, n_total)))
    return w, theta, t


# ---------------------------------------------------------------------------
# dense per-(a, k, m) channel composition


def dense_effective_column(
    realization: ChannelRealization,
    theta: np.ndarray,
    t: np.ndarray,
    a: int,
    k: int,
    m: int,
    use_ris: bool = True,
) -> np.ndarray:
    """Effective channel h_{a,k,m} built with explicit diagonal matrices."""
    h_row = realization.h_dir[a, k, m].conj().copy()
    if use_ris:
        n_ris = realization.n_ris
        for r in range(realization.num_ris):
            sl = slice(r * n_ris, (r + 1) * n_ris)
            refl = np.diag(theta[sl]) @ np.diag(t[m, sl])
            h_row = h_row + realization.u[r, k, m].conj() @ refl @ realization.G[a, r, m]
    return h_row.conj()


def dense_stacked_column(
    realization: ChannelRealization,
    theta: np.ndarray,
    t: np.ndarray,
    k: int,
    m: int,
    use_ris: bool = True,
) -> np.ndarray:
    cols = [
        dense_effective_column(realization, theta, t, a, k, m, use_ris=use_ris)
        for a in range(realization.num_aps)
    ]
    return np.concatenate(cols)


def dense_gain(
    realization: ChannelRealization,
    precoder: AnalogPrecoder,
    theta: np.ndarray,
    t: np.ndarray,
    w: np.ndarray,
    k: int,
    j: int,
    m: int,
    use_ris: bool = True,
) -> complex:
    """Scalar gain h_{k,m}^H Fbar_m w_{j,m} via full block-diagonal products."""
    h = dense_stacked_column(realization, theta, t, k, m, use_ris=use_ris)
    fbar_m = precoder.fbar_blockdiag(m)
    return complex(h.conj() @ fbar_m @ w[m, j])


def dense_sinr(
    realization: ChannelRealization,
    precoder: AnalogPrecoder,
    theta: np.ndarray,
    t: np.ndarray,
    w: np.ndarray,
    sigma2: np.ndarray,
    k: int,
    m: int,
    use_ris: bool = True,
) -> float:
    K = realization.num_users
    gains = [
        dense_gain(realization, precoder, theta, t, w, k, j, m, use_ris=use_ris)
        for j in range(K)
    ]
    sig = abs(gains[k]) ** 2
    interf = sum(abs(g) ** 2 for j, g in enumerate(gains) if j != k)
    return sig / (interf + float(sigma2[k, m]))


def dense_wsr(
    realization: ChannelRealization,
    precoder: AnalogPrecoder,
    theta: np.ndarray,
    t: np.ndarray,
    w: np.ndarray,
    sigma2: np.ndarray,
    weights: np.ndarray,
    use_ris: bool = True,
) -> float:
    total = 0.0
    for k in range(realization.num_users):
        for m in range(realization.num_subcarriers):
            s = dense_sinr(realization, precoder, theta, t, w, sigma2, k, m, use_ris=use_ris)
            total += float(weights[k]) * math.log2(1.0 + s)
    return total


# ---------------------------------------------------------------------------
# direct sum-form surrogates (scalar loops, no matrix factorization)


def all_dense_gains(
    realization: ChannelRealization,
    precoder: AnalogPrecoder,
    theta: np.ndarray,
    t: np.ndarray,
    w: np.ndarray,
    use_ris: bool = True,
) -> np.ndarray:
    """Gains c[m, k, j] computed one scalar at a time."""
    M, K = realization.num_subcarriers, realization.num_users
    c = np.empty((M, K, K), dtype=complex)
    for m in range(M):
        for k in range(K):
            for j in range(K):
                c[m, k, j] = dense_gain(
                    realization, precoder, theta, t, w, k, j, m, use_ris=use_ris
                )
    return c


def sum_form_quadratic_surrogate(
    c: np.ndarray, sigma2: np.ndarray, varsigma: np.ndarray, aux: np.ndarray
) -> float:
    """Direct sum of the per-(k, m) quadratic-transform terms.

    term(k, m) = 2 varsigma Re{conj(aux) c_kk} - |aux|^2 (sum_j |c_kj|^2 + sigma^2),
    the standard expansion whose maximizer over aux is the closed-form update.
    """
    M, K, _ = c.shape
    total = 0.0
    for k in range(K):
        for m in range(M):
            interf = sum(abs(c[m, k, j]) ** 2 for j in range(K))
            total += 2.0 * varsigma[k, m] * (np.conj(aux[k, m]) * c[m, k, k]).real
            total -= abs(aux[k, m]) ** 2 * (interf + sigma2[k, m])
    return float(total)


def sum_form_rate_surrogate(
    c: np.ndarray, sigma2: np.ndarray, weights: np.ndarray, rho: np.ndarray
) -> float:
    """Scalar-loop rate lower bound: log(1+rho) - rho + (1+rho) * signal fraction."""
    M, K, _ = c.shape
    total = 0.0
    for k in range(K):
        for m in range(M):
            denom = sum(abs(c[m, k, j]) ** 2 for j in range(K)) + sigma2[k, m]
            frac = abs(c[m, k, k]) ** 2 / denom
            total += weights[k] * (
                math.log1p(rho[k, m]) - rho[k, m] + (1.0 + rho[k, m]) * frac
            )
    return float(total)


def dense_ap_power(precoder: AnalogPrecoder, w: np.ndarray, a: int) -> float:
    """Transmit power of AP a: sum over (m, k) of ||Fbar_{a,m} w_{a,k,m}||^2."""
    M, K, n = w.shape
    n_rf = precoder.num_rf
    total = 0.0
    for m in range(M):
        for k in range(K):
            wa = w[m, k, a * n_rf:(a + 1) * n_rf]
            total += float(np.linalg.norm(precoder.fbar[a, m] @ wa) ** 2)
    return total
