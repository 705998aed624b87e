"""Weighted sum rate maximization by alternating fractional-programming blocks.

The analog stage stays fixed while the loop cycles through: SINR-valued
rate auxiliaries, a quadratic-transform auxiliary and the digital
precoders (a power-capped quadratic program), a second auxiliary and the
RIS reflection phases (a unit-modulus quadratic), a third auxiliary and
the per-subcarrier RIS delay phases (decoupled unit-modulus quadratics).
Every block maximizes a surrogate that is tight at the current point, so
with continuous phases the weighted sum rate trace is non-decreasing up
to solver tolerance.  With quantized reflection phases the relaxed
solution is projected onto the phase grid once per outer iteration and
no monotonicity is claimed.

Index conventions: the digital precoders live on a (M, K, A*N_rf) grid
whose flattening [m slowest, then k, then AP, then RF chain] matches the
stacked vector used by the quadratic subproblem algebra.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .analog import AnalogPrecoder
from .channel import ChannelRealization, RisConfiguration, effective_channel_rows
from .errors import ParameterError, SolverError
from .solver import (
    PowerSubproblem,
    SolverOptions,
    UnitModulusSubproblem,
    solve_power,
    solve_unit_modulus,
)


@dataclass
class PrecoderVariables:
    """Optimization state: digital precoders plus the RIS configuration."""

    w: np.ndarray        # (M, K, A*N_rf) complex
    theta: np.ndarray    # (R*N_ris,) complex, unit modulus
    t: np.ndarray        # (M, R*N_ris) complex, unit modulus

    def copy(self) -> "PrecoderVariables":
        return PrecoderVariables(w=self.w.copy(), theta=self.theta.copy(), t=self.t.copy())

    def ris(self) -> RisConfiguration:
        return RisConfiguration(theta=self.theta.copy(), t=self.t.copy())


@dataclass
class AuxiliaryVariables:
    """Fractional-programming auxiliaries, all shaped (K, M)."""

    rho: np.ndarray
    lam: np.ndarray
    omega: np.ndarray
    gamma: np.ndarray


@dataclass(frozen=True)
class AoOptions:
    """Loop wiring and solver knobs for one optimization run."""

    max_iters: int = 20
    tol: float = 1e-3                 # relative sum-rate change declaring convergence
    use_ris: bool = True              # include reflected paths in the channel
    optimize_theta: bool = True
    optimize_t: bool = True
    ris_bits: int = 0                 # 0 = continuous phases, else 2**bits levels
    aux_form: str = "complex"         # "complex" or "real" quadratic-transform auxiliaries
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class AoTrace:
    """Per-iteration record of one run."""

    wsr: list[float] = field(default_factory=list)           # index 0 = initial point
    surrogate_w: list[float] = field(default_factory=list)
    surrogate_theta: list[float] = field(default_factory=list)
    surrogate_t: list[float] = field(default_factory=list)
    power_violation: list[float] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)
    converged_at: int | None = None

    @property
    def iterations_run(self) -> int:
        return len(self.wsr) - 1

    def iterations_to_converge(self, rel_tol: float = 1e-3) -> int:
        """First iteration whose relative sum-rate change drops below ``rel_tol``.

        Measured on the recorded trace, independent of the stopping rule the
        loop itself ran with; returns the total iteration count if the trace
        never settles.
        """
        w = self.wsr
        for i in range(1, len(w)):
            if abs(w[i] - w[i - 1]) <= rel_tol * max(abs(w[i - 1]), 1e-300):
                return i
        return self.iterations_run


def beamspace_rows(rows: np.ndarray, precoder: AnalogPrecoder) -> np.ndarray:
    """Effective channels after the analog stage: h^H Fbar, shape (M, K, A*N_rf)."""
    bs = np.einsum("akmt,amtr->mkar", rows, precoder.fbar)
    M, K, A, n_rf = bs.shape
    return bs.reshape(M, K, A * n_rf)


def pair_gains(bs: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Complex gains c[m, k, j] = h_k^H Fbar w_j on every subcarrier."""
    return np.einsum("mkn,mjn->mkj", bs, w)


def sinr_from_gains(c: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    """Per-user, per-subcarrier SINR, shape (K, M)."""
    if np.any(sigma2 <= 0):
        raise ParameterError("noise power must be positive")
    M, K, _ = c.shape
    p = np.abs(c) ** 2                                   # (M, k, j)
    sig = np.einsum("mkk->mk", p)
    interf = p.sum(axis=2) - sig
    return (sig / (interf + sigma2.T)).T


def sinr(
    realization: ChannelRealization,
    variables: PrecoderVariables,
    precoder: AnalogPrecoder,
    sigma2: np.ndarray,
    k: int,
    m: int,
    use_ris: bool = True,
) -> float:
    """SINR of user k on subcarrier m under the given precoders."""
    rows = effective_channel_rows(realization, variables.theta, variables.t, use_ris=use_ris)
    c = pair_gains(beamspace_rows(rows, precoder), variables.w)
    return float(sinr_from_gains(c, sigma2)[k, m])


def wsr_from_gains(c: np.ndarray, sigma2: np.ndarray, weights: np.ndarray) -> float:
    """Weighted sum rate in bits per channel use over all users and subcarriers."""
    if np.any(weights < 0):
        raise ParameterError("rate weights must be non-negative")
    s = sinr_from_gains(c, sigma2)
    return float(np.sum(weights[:, None] * np.log2(1.0 + s)))


def wsr(
    realization: ChannelRealization,
    variables: PrecoderVariables,
    precoder: AnalogPrecoder,
    sigma2: np.ndarray,
    weights: np.ndarray,
    use_ris: bool = True,
) -> float:
    rows = effective_channel_rows(realization, variables.theta, variables.t, use_ris=use_ris)
    c = pair_gains(beamspace_rows(rows, precoder), variables.w)
    return wsr_from_gains(c, sigma2, weights)


def rate_surrogate(c: np.ndarray, sigma2: np.ndarray, weights: np.ndarray, rho: np.ndarray) -> float:
    """Concave rate surrogate in nats; equals ln(2) * WSR when rho is the SINR."""
    p = np.abs(c) ** 2
    sig = np.einsum("mkk->mk", p).T
    total = p.sum(axis=2).T + sigma2
    g = sig / total
    w = weights[:, None]
    return float(np.sum(w * (np.log1p(rho) - rho + (1.0 + rho) * g)))


def update_rho(c: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    """Optimal rate auxiliaries: the current SINRs, shape (K, M)."""
    return sinr_from_gains(c, sigma2)


def quadratic_auxiliary(
    c: np.ndarray, sigma2: np.ndarray, varsigma: np.ndarray, form: str = "complex"
) -> np.ndarray:
    """Optimal quadratic-transform auxiliary, shape (K, M).

    The closed form is varsigma * (h_k^H Fbar w_k) / (sum_j |h_k^H Fbar
    w_j|^2 + sigma^2).  The "real" variant folds the signal gain into the
    auxiliary, varsigma * s / (1 + s) with s the SINR; it equals the
    complex form times conj(h_k^H Fbar w_k).
    """
    p = np.abs(c) ** 2
    total = p.sum(axis=2).T + sigma2                      # (K, M)
    if form == "complex":
        ckk = np.einsum("mkk->mk", c).T
        return varsigma * ckk / total
    if form == "real":
        s = sinr_from_gains(c, sigma2)
        return varsigma * s / (1.0 + s)
    raise ParameterError(f"unknown auxiliary form {form!r}")


update_lambda = quadratic_auxiliary
update_omega = quadratic_auxiliary
update_gamma = quadratic_auxiliary


def quadratic_surrogate(
    c: np.ndarray, sigma2: np.ndarray, varsigma: np.ndarray, aux: np.ndarray
) -> float:
    """Quadratic-transform surrogate of the weighted signal fraction."""
    ckk = np.einsum("mkk->mk", c).T
    total = (np.abs(c) ** 2).sum(axis=2).T + sigma2
    val = 2.0 * varsigma * (np.conj(aux) * ckk).real - (np.abs(aux) ** 2) * total
    return float(np.sum(val))


def build_w_subproblem(
    bs: np.ndarray,
    lam: np.ndarray,
    varsigma: np.ndarray,
    sigma2: np.ndarray,
    precoder: AnalogPrecoder,
    budgets: np.ndarray,
) -> PowerSubproblem:
    """Matrix form of the digital precoder update.

    ``bs`` holds the beamspace channels h^H Fbar at the current RIS state.
    The quadratic block of subcarrier m is sum_k xi_k xi_k^H with
    xi_k = lam_k (Fbar^H h_k); the linear part stacks varsigma_k xi_k.
    """
    M, K, n = bs.shape
    xi_vec = lam.T[:, :, None] * bs.conj()                # (M, K, n)
    xi = np.einsum("mkn,mkp->mnp", xi_vec, xi_vec.conj())
    xt = varsigma.T[:, :, None] * xi_vec
    zeta = float(np.sum(np.abs(lam) ** 2 * sigma2))
    return PowerSubproblem(xi=xi, xt=xt, zeta=zeta, gram=precoder.gram(), budgets=np.asarray(budgets, dtype=float))


def _reflection_pieces(
    realization: ChannelRealization,
    precoder: AnalogPrecoder,
    w: np.ndarray,
):
    """Shared precomputation for the two RIS subproblems.

    Returns the per-(m, j) reflected aggregates z[m, j] = sum_a G_a Fbar_a
    w_{a,j} (shape (M, K, R*N_ris)) and the direct-only complex gains
    c0[m, k, j].
    """
    A = realization.num_aps
    M, K, n = w.shape
    n_rf = precoder.num_rf
    wa = w.reshape(M, K, A, n_rf)
    g_st = realization.stacked_g()                        # (A, M, RN, N_tx)
    gf = np.einsum("amnt,amtr->amnr", g_st, precoder.fbar)
    z = np.einsum("amnr,mjar->mjn", gf, wa)
    dir_bs = beamspace_rows(realization.h_dir.conj(), precoder)
    c0 = pair_gains(dir_bs, w)                            # (M, k, j)
    return z, c0


def build_theta_subproblem(
    realization: ChannelRealization,
    precoder: AnalogPrecoder,
    w: np.ndarray,
    t: np.ndarray,
    omega: np.ndarray,
    varsigma: np.ndarray,
    sigma2: np.ndarray,
) -> UnitModulusSubproblem:
    """Matrix form of the reflection phase update (all subcarriers coupled).

    With d_{k,m,j} the reflected signal vectors and c_{k,m,j} the direct
    gains (both weighted by the conjugate auxiliary), the surrogate is
    -theta^H Q theta + 2 Re{b^H theta} + offset with Q the Hermitian sum
    of conj(d) d^T outer products.
    """
    z, c0 = _reflection_pieces(realization, precoder, w)
    u_st = realization.stacked_u()                        # (K, M, RN)
    om = omega.T                                          # (M, K)
    # d[m, k, j, n] = conj(omega_k) * conj(u_k) * t_m * z_j
    base = u_st.conj().transpose(1, 0, 2) * t[:, None, :]            # (M, K, RN)
    d = om.conj()[:, :, None, None] * base[:, :, None, :] * z[:, None, :, :]
    c = om.conj()[:, :, None] * c0                                   # (M, k, j)
    n = d.shape[-1]
    quad = np.einsum("mkjn,mkjp->np", d.conj(), d)
    varsig = varsigma.T                                              # (M, K)
    d_kk = np.einsum("mkkn->mkn", d)
    c_kk = np.einsum("mkk->mk", c)
    dtilde = np.einsum("mk,mkn->n", varsig, d_kk) - np.einsum("mkj,mkjn->n", c.conj(), d)
    offset = float(
        np.sum(2.0 * varsig * c_kk.real)
        - np.sum(np.abs(omega) ** 2 * sigma2)
        - np.sum(np.abs(c) ** 2)
    )
    return UnitModulusSubproblem(quad=quad[None], lin=dtilde.conj()[None], offset=offset)


def build_t_subproblem(
    realization: ChannelRealization,
    precoder: AnalogPrecoder,
    w: np.ndarray,
    theta: np.ndarray,
    gamma: np.ndarray,
    varsigma: np.ndarray,
    sigma2: np.ndarray,
) -> UnitModulusSubproblem:
    """Matrix form of the delay phase update; subcarriers decouple into blocks."""
    z, c0 = _reflection_pieces(realization, precoder, w)
    u_st = realization.stacked_u()
    ga = gamma.T                                          # (M, K)
    base = u_st.conj().transpose(1, 0, 2) * theta[None, None, :]
    d = ga.conj()[:, :, None, None] * base[:, :, None, :] * z[:, None, :, :]
    c = ga.conj()[:, :, None] * c0
    quad = np.einsum("mkjn,mkjp->mnp", d.conj(), d)
    varsig = varsigma.T
    d_kk = np.einsum("mkkn->mkn", d)
    c_kk = np.einsum("mkk->mk", c)
    lin = np.einsum("mk,mkn->mn", varsig, d_kk) - np.einsum("mkj,mkjn->mn", c.conj(), d)
    offset = float(
        np.sum(2.0 * varsig * c_kk.real)
        - np.sum(np.abs(gamma) ** 2 * sigma2)
        - np.sum(np.abs(c) ** 2)
    )
    return UnitModulusSubproblem(quad=quad, lin=lin.conj(), offset=offset)


def quantize_theta(theta: np.ndarray, levels: int) -> np.ndarray:
    """Project unit-modulus phases onto ``levels`` uniform grid points.

    The grid is exp(j 2 pi f / levels), f = 0..levels-1; each entry maps
    to the nearest grid point in phase distance, ties resolved towards
    the smaller index.
    """
    if levels < 2:
        raise ParameterError(f"need at least two phase levels, got {levels}")
    ang = np.mod(np.angle(theta), 2.0 * np.pi)
    scaled = ang * levels / (2.0 * np.pi)
    idx = np.ceil(scaled - 0.5).astype(int) % levels
    return np.exp(2j * np.pi * idx / levels)


def initialize_variables(
    rng: np.random.Generator,
    realization: ChannelRealization,
    precoder: AnalogPrecoder,
    budgets: np.ndarray,
    ris_bits: int = 0,
    use_ris: bool = True,
) -> PrecoderVariables:
    """Feasible starting point: Gaussian precoders at full power, random phases.

    The reflection phases are drawn uniformly (then snapped to the grid when
    quantized), the per-subcarrier delay phases start neutral, and the digital
    precoders are circularly symmetric Gaussian draws rescaled so every AP
    spends its exact budget.
    """
    del use_ris  # initialization does not depend on the cascade being active
    A = realization.num_aps
    M = realization.num_subcarriers
    n_rf = precoder.num_rf
    n_total = realization.num_ris * realization.n_ris
    theta = np.exp(2j * np.pi * rng.random(n_total))
    if ris_bits:
        theta = quantize_theta(theta, 2 ** ris_bits)
    t = np.ones((M, n_total), dtype=complex)
    K = realization.num_users
    shape = (M, K, A * n_rf)
    w = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2.0)
    gram = precoder.gram()
    wa = w.reshape(M, -1, A, n_rf)
    powers = np.einsum("mkar,amrs,mkas->a", wa.conj(), gram, wa).real
    budgets = np.asarray(budgets, dtype=float)
    wa *= np.sqrt(budgets / np.maximum(powers, 1e-300))[None, None, :, None]
    return PrecoderVariables(w=wa.reshape(M, -1, A * n_rf), theta=theta, t=t)


def run_ao(
    realization: ChannelRealization,
    precoder: AnalogPrecoder,
    init: PrecoderVariables,
    weights: np.ndarray,
    sigma2: np.ndarray,
    budgets: np.ndarray,
    options: AoOptions | None = None,
) -> tuple[PrecoderVariables, AoTrace]:
    """Run the alternating loop from ``init`` and return the final state and trace.

    ``weights`` is (K,), ``sigma2`` is (K, M) in watts, ``budgets`` (A,) in
    watts.  The trace stores the weighted sum rate before any update at
    index 0 and after each completed outer iteration thereafter.
    """
    opts = options or AoOptions()
    weights = np.asarray(weights, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    budgets = np.asarray(budgets, dtype=float)
    if np.any(weights < 0):
        raise ParameterError("rate weights must be non-negative")
    if np.any(sigma2 <= 0):
        raise ParameterError("noise power must be positive")
    var = init.copy()
    trace = AoTrace()
    levels = 2 ** opts.ris_bits if opts.ris_bits else 0

    def rows_now() -> np.ndarray:
        return effective_channel_rows(realization, var.theta, var.t, use_ris=opts.use_ris)

    bs = beamspace_rows(rows_now(), precoder)
    c = pair_gains(bs, var.w)
    current = wsr_from_gains(c, sigma2, weights)
    if not np.isfinite(current):
        raise SolverError(f"non-finite sum rate at the starting point: {current}")
    trace.wsr.append(current)

    mu_warm = None
    for it in range(1, opts.max_iters + 1):
        tic = time.perf_counter()
        rho = update_rho(c, sigma2)
        varsigma = np.sqrt(weights[:, None] * (1.0 + rho))
        lam = quadratic_auxiliary(c, sigma2, varsigma, form=opts.aux_form)

        w_prob = build_w_subproblem(bs, lam, varsigma, sigma2, precoder, budgets)
        var.w, w_info = solve_power(w_prob, var.w, opts.solver, mu0=mu_warm)
        mu_warm = w_info["mu"]
        c = pair_gains(bs, var.w)
        trace.surrogate_w.append(-w_prob.objective(var.w) - w_prob.zeta)
        trace.power_violation.append(w_info["kkt_feasibility"])

        if opts.use_ris and opts.optimize_theta and var.theta.size:
            omega = quadratic_auxiliary(c, sigma2, varsigma, form=opts.aux_form)
            th_prob = build_theta_subproblem(
                realization, precoder, var.w, var.t, omega, varsigma, sigma2
            )
            theta_new, _ = solve_unit_modulus(th_prob, var.theta, opts.solver)
            var.theta = theta_new.reshape(-1)
            if levels:
                var.theta = quantize_theta(var.theta, levels)
            trace.surrogate_theta.append(th_prob.surrogate_value(var.theta))
            bs = beamspace_rows(rows_now(), precoder)
            c = pair_gains(bs, var.w)

        if opts.use_ris and opts.optimize_t and var.theta.size:
            gamma = quadratic_auxiliary(c, sigma2, varsigma, form=opts.aux_form)
            t_prob = build_t_subproblem(
                realization, precoder, var.w, var.theta, gamma, varsigma, sigma2
            )
            t_new, _ = solve_unit_modulus(t_prob, var.t, opts.solver)
            var.t = t_new.reshape(var.t.shape)
            trace.surrogate_t.append(t_prob.surrogate_value(var.t))
            bs = beamspace_rows(rows_now(), precoder)
            c = pair_gains(bs, var.w)

        new = wsr_from_gains(c, sigma2, weights)
        if not np.isfinite(new):
            raise SolverError(f"non-finite sum rate at iteration {it}: {new}")
        trace.wall_time.append(time.perf_counter() - tic)
        trace.wsr.append(new)
        if abs(new - current) <= opts.tol * max(abs(current), 1e-300):
            trace.converged_at = it
            current = new
            break
        current = new

    return var, trace
