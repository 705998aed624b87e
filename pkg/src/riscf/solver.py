"""Constrained quadratic subproblem containers and their solvers.

Two problem classes cover everything the alternating loop needs:

* ``PowerSubproblem``: minimize w^H Xi w - 2 Re{xt^H w} subject to one
  quadratic power constraint per AP.  Solved by dual decomposition: the
  Lagrangian minimizer is a batched linear solve, the multipliers rise
  via projected subgradient steps with a diminishing a/sqrt(k) schedule,
  then a damped Newton iteration on the concave dual polishes the
  binding constraints; a certified duality gap decides success.

* ``UnitModulusSubproblem``: minimize x^H Q x - 2 Re{b^H x} with every
  entry on the unit circle.  Solved by exact cyclic phase updates, each
  entry jumping to its closed-form conditional optimum, which is
  monotone by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import ParameterError, SolverError


@dataclass(frozen=True)
class SolverOptions:
    """Knobs shared by both solver families."""

    subgrad_iters: int = 30          # dual subgradient steps before polishing
    subgrad_step: float = 1.0        # the a in a/sqrt(k)
    feas_tol: float = 1e-8           # relative constraint tolerance
    polish_sweeps: int = 60          # max coordinate sweeps of the root polish
    mm_max_iters: int = 300
    mm_tol: float = 1e-11


@dataclass(frozen=True)
class PowerSubproblem:
    """Per-subcarrier quadratic blocks with per-AP power caps.

    The stacked variable w lives on a (M, K, A*N_rf) grid; the quadratic
    coefficient is block diagonal with one (A*N_rf, A*N_rf) block per
    subcarrier shared by all users, and the linear part has one vector per
    (subcarrier, user).  ``gram`` holds the analog Gram blocks
    (A, M, N_rf, N_rf) defining the per-AP power quadratics.
    """

    xi: np.ndarray        # (M, n, n) Hermitian PSD
    xt: np.ndarray        # (M, K, n)
    zeta: float           # additive constant of the surrogate
    gram: np.ndarray      # (A, M, N_rf, N_rf)
    budgets: np.ndarray   # (A,)

    def __post_init__(self) -> None:
        herm = np.max(np.abs(self.xi - self.xi.conj().transpose(0, 2, 1)))
        scale = max(np.max(np.abs(self.xi)), 1e-300)
        if herm > 1e-9 * scale:
            raise ParameterError("quadratic blocks are not Hermitian")
        if np.any(self.budgets <= 0):
            raise ParameterError("power budgets must be positive")

    @property
    def num_aps(self) -> int:
        return self.gram.shape[0]

    @property
    def n_rf(self) -> int:
        return self.gram.shape[2]

    def objective(self, w: np.ndarray) -> float:
        quad = np.einsum("mkn,mnp,mkp->", w.conj(), self.xi, w).real
        lin = np.einsum("mkn,mkn->", self.xt.conj(), w).real
        return float(quad - 2.0 * lin)

    def ap_powers(self, w: np.ndarray) -> np.ndarray:
        """Per-AP transmit powers of the candidate w, shape (A,)."""
        M, K, n = w.shape
        A, n_rf = self.num_aps, self.n_rf
        wa = w.reshape(M, K, A, n_rf)
        # p_a = sum_{m,k} w_a^H gram[a,m] w_a
        return np.einsum("mkar,amrs,mkas->a", wa.conj(), self.gram, wa).real


@dataclass(frozen=True)
class UnitModulusSubproblem:
    """One or several decoupled unit-modulus quadratics.

    ``quad`` has shape (B, n, n) and ``lin`` (B, n); block b is the
    independent problem min x^H quad[b] x - 2 Re{lin[b]^H x} over unit
    modulus x.  ``offset`` carries the surrogate's additive constant so
    callers can reconstruct the full objective value.
    """

    quad: np.ndarray
    lin: np.ndarray
    offset: float = 0.0

    def __post_init__(self) -> None:
        if self.quad.ndim != 3 or self.lin.shape != self.quad.shape[:2]:
            raise ParameterError(f"inconsistent shapes {self.quad.shape} / {self.lin.shape}")
        herm = np.max(np.abs(self.quad - self.quad.conj().transpose(0, 2, 1))) if self.quad.size else 0.0
        scale = max(np.max(np.abs(self.quad)) if self.quad.size else 0.0, 1e-300)
        if herm > 1e-9 * scale:
            raise ParameterError("quadratic blocks are not Hermitian")

    def dense_quad(self) -> np.ndarray:
        """Blocks assembled into one block-diagonal matrix (exact zeros off-block)."""
        return scipy.linalg.block_diag(*self.quad) if self.quad.size else np.zeros((0, 0), dtype=complex)

    def objective(self, x: np.ndarray) -> float:
        x = x.reshape(self.lin.shape)
        quad = np.einsum("bn,bnp,bp->", x.conj(), self.quad, x).real
        lin = np.einsum("bn,bn->", self.lin.conj(), x).real
        return float(quad - 2.0 * lin)

    def surrogate_value(self, x: np.ndarray) -> float:
        """Value of the maximization-form surrogate, offset included."""
        return self.offset - self.objective(x)


def _lagrangian_mats(xi: np.ndarray, gram: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Per-subcarrier Lagrangian quadratics Xi + sum_a mu_a Gram_a, shape (M, n, n)."""
    A, _, n_rf, _ = gram.shape
    mats = xi.copy()
    for a in range(A):
        sl = slice(a * n_rf, (a + 1) * n_rf)
        mats[:, sl, sl] += mu[a] * gram[a]
    return mats


def _checked_solve(mats: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Batched linear solve with a minimum-norm fallback for singular blocks.

    The right-hand sides always lie in the range of the quadratics here, so
    the least-squares fallback still returns an exact Lagrangian minimizer.
    """
    try:
        sol = np.linalg.solve(mats, rhs)
    except np.linalg.LinAlgError:
        sol = np.full_like(rhs, np.nan)
    resid = np.abs(np.einsum("mnp,mpk->mnk", mats, np.nan_to_num(sol)) - rhs)
    bad = ~np.isfinite(sol).all(axis=(1, 2)) | (
        resid.max(axis=(1, 2)) > 1e-8 * (1.0 + np.abs(rhs).max(axis=(1, 2)))
    )
    for m in np.nonzero(bad)[0]:
        sol[m] = np.linalg.lstsq(mats[m], rhs[m], rcond=None)[0]
    return sol


def _primal_solve(xi: np.ndarray, xt: np.ndarray, gram: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Minimize the Lagrangian at multipliers mu; batched over subcarriers."""
    mats = _lagrangian_mats(xi, gram, mu)
    rhs = xt.transpose(0, 2, 1)                      # (M, n, K)
    return _checked_solve(mats, rhs).transpose(0, 2, 1)


def _rel_gap(prob: PowerSubproblem, w: np.ndarray, p: np.ndarray, dual: float) -> float:
    """Relative duality gap certified by the feasible rescaling of w.

    The dual value at any multiplier lower-bounds the constrained optimum,
    so the gap bounds how suboptimal the rescaled iterate can be.  This is
    the honest success measure when barely-binding caps leave tiny
    multipliers whose complementarity residual is numerically meaningless.
    """
    ws = _safety_scale(prob, w, p)
    f = float(prob.objective(ws))
    return (f - dual) / (1.0 + abs(f))


def _dual_newton(
    prob: PowerSubproblem, mu: np.ndarray, opts: SolverOptions, max_steps: int = 60
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool, int]:
    """Damped Newton ascent on the concave dual of the power program.

    The dual gradient is p(mu) - P and its Jacobian follows from implicit
    differentiation of the stationarity system, costing one extra batched
    solve per step.  Multipliers update multiplicatively (Newton in log
    space, clipped per step), which tames the cap powers' strong
    nonlinearity in mu; a multiplier collapses to exactly zero once its
    contribution to the Lagrangian falls below machine precision.  The
    Newton system only targets caps near their boundary: deeply slack
    multipliers decay toward zero instead, otherwise their unreachable
    root (resid = 0 wants mu < 0) pollutes the coupled step.  Returns
    (mu, w, p, converged, solve_count) at the best iterate seen; on
    failure the caller falls back to coordinate-wise root polishing.
    """
    budgets = prob.budgets
    A, n_rf = prob.num_aps, prob.n_rf
    M, K, n = prob.xt.shape
    rhs_w = prob.xt.transpose(0, 2, 1)
    ktol = 1e-11
    nsolves = 0
    mu = np.asarray(mu, dtype=float).copy()
    # characteristic multiplier scale per AP: where mu * Gram rivals Xi
    xi_scale = float(np.max(np.abs(prob.xi)))
    char = xi_scale / np.maximum(
        np.array([np.max(np.abs(prob.gram[a])) for a in range(A)]), 1e-300
    )

    def eval_point(mu_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        # the dual value is the Lagrangian evaluated explicitly at the
        # minimizer; unlike the closed form it stays finite-precision-safe
        # when the system is nearly singular (small multipliers)
        nonlocal nsolves
        nsolves += 1
        mats = _lagrangian_mats(prob.xi, prob.gram, mu_vec)
        w_loc = _checked_solve(mats, rhs_w).transpose(0, 2, 1)
        p_loc = prob.ap_powers(w_loc)
        dual = prob.objective(w_loc) + float(mu_vec @ (p_loc - budgets))
        return mats, w_loc, p_loc, dual

    def kkt_residual(mu_vec: np.ndarray, resid: np.ndarray) -> float:
        infeas = float(np.max(np.maximum(resid, 0.0)))
        comp = float(np.max(np.where(mu_vec > 0.0, np.abs(resid), 0.0), initial=0.0))
        return max(infeas, comp)

    floor = 1e-16 * char
    reseeds = np.zeros(A, dtype=int)
    mats, w, p, dual = eval_point(mu)

    # scale homing: a stale warm start can sit orders of magnitude off the
    # optimal multiplier scale, where coupled steps crawl (the active set
    # flips wholesale every iteration).  The dual is concave along the ray
    # s * mu, so bisecting its directional derivative fixes the scale first.
    resid = p / budgets - 1.0
    if np.any(mu > 0.0) and kkt_residual(mu, resid) > 0.05:

        def ray_slope(s: float) -> tuple[float, tuple]:
            state = eval_point(s * mu)
            return float((mu * budgets) @ (state[2] / budgets - 1.0)), state

        if float((mu * budgets) @ resid) > 0.0:
            # under-penalized: expand until the ray slope turns non-positive
            s_lo, s_hi = 1.0, 1.0
            state_hi = (mats, w, p, dual)
            for _ in range(14):
                s_lo = s_hi
                s_hi *= 20.0
                g, state_hi = ray_slope(s_hi)
                if g <= 0.0:
                    break
        else:
            # over-penalized: shrink until the ray slope turns positive or
            # every multiplier sinks below its numerically visible scale
            s_hi, state_hi = 1.0, (mats, w, p, dual)
            s_lo = 1.0
            for _ in range(14):
                s_lo /= 20.0
                g, state = ray_slope(s_lo)
                if g > 0.0:
                    break
                s_hi, state_hi = s_lo, state
                if float(np.max(s_lo * mu / char)) < 1e-13:
                    break
        if s_lo < s_hi:
            for _ in range(8):
                mid = math.sqrt(s_lo * s_hi)
                g, state = ray_slope(mid)
                if g > 0.0:
                    s_lo = mid
                else:
                    s_hi, state_hi = mid, state
        mu = s_hi * mu
        mats, w, p, dual = state_hi

    best: tuple[float, np.ndarray, np.ndarray, np.ndarray] | None = None
    slack_streak = np.zeros(A, dtype=int)
    stale = 0
    for _ in range(max_steps):
        resid = p / budgets - 1.0
        # below the floor a multiplier is numerically invisible: retire it on
        # a slack cap, teleport it back to a visible scale on a violated one
        collapse = (mu > 0.0) & (mu < floor) & (resid <= 0.0)
        enter = (mu < floor) & (resid > 0.0)
        if np.any(enter):
            reseeds += enter
            if np.any(reseeds > 3):
                break
            alive = mu[mu >= floor]
            seed = 1e-3 * float(np.median(alive)) if alive.size else 0.0
            mu = np.where(enter, np.maximum(seed, 1e-3 * char), mu)
            mats, w, p, dual = eval_point(mu)
            resid = p / budgets - 1.0
        elif np.any(collapse):
            mu = np.where(collapse, 0.0, mu)
            mats, w, p, dual = eval_point(mu)
            resid = p / budgets - 1.0
        kkt = kkt_residual(mu, resid)
        if best is None or kkt < best[0] * (1.0 - 1e-3):
            best, stale = (kkt, mu.copy(), w, p, dual), 0
        else:
            stale += 1
            if stale > 8:
                break
        if kkt <= ktol:
            return mu, w, p, True, nsolves
        pos = np.nonzero(mu > 0.0)[0]
        if pos.size == 0:
            return mu, w, p, False, nsolves

        # deeply slack caps decay (and retire outright after three straight
        # slack steps); the Newton system covers the rest
        margin = max(0.01, 0.25 * kkt)
        slackish = (mu > 0.0) & (resid < -margin)
        slack_streak = np.where(slackish, slack_streak + 1, 0)
        retire = slack_streak >= 3
        near = resid[pos] > -margin
        sel = pos[near]
        dx_full = np.full(A, -3.0)

        if sel.size:
            # columns g_b = Gram_b w stacked per near-active AP, X = H^{-1} g_b
            wa = w.reshape(M, K, A, n_rf)
            rhs_j = np.zeros((M, n, sel.size * K), dtype=complex)
            gcols = np.empty((sel.size, M, K, n_rf), dtype=complex)
            for j, b in enumerate(sel):
                gb = np.einsum("mrs,mks->mkr", prob.gram[b], wa[:, :, b, :])
                gcols[j] = gb
                rhs_j[:, b * n_rf:(b + 1) * n_rf, j * K:(j + 1) * K] = gb.transpose(0, 2, 1)
            xsol = _checked_solve(mats, rhs_j)
            nsolves += 1
            jac = np.empty((sel.size, sel.size))
            for i, a in enumerate(sel):
                xa = xsol[:, a * n_rf:(a + 1) * n_rf, :].reshape(M, n_rf, sel.size, K)
                jac[i] = -2.0 * np.einsum("mkr,mrjk->j", gcols[i].conj(), xa).real / budgets[a]

            # d(resid)/d(ln mu_b) column scaling; cap the step length without
            # bending the direction (coordinate clipping would)
            jlog = jac * mu[sel][None, :]
            try:
                dx = np.linalg.solve(jlog, -resid[sel])
            except np.linalg.LinAlgError:
                dx = np.linalg.lstsq(jlog, -resid[sel], rcond=None)[0]
            step_max = float(np.max(np.abs(dx)))
            if step_max > 3.0:
                dx = dx * (3.0 / step_max)
            dx_full[sel] = dx

        # directional derivative of the dual along the log-space step; the
        # Armijo test then demands a proportional share of the linear gain,
        # which noise-level fake ascent in a flat dual cannot fake
        slope = float(((resid * budgets * mu)[pos]) @ dx_full[pos])
        alpha, accepted = 1.0, False
        for _ in range(30):
            trial = mu.copy()
            trial[pos] = mu[pos] * np.exp(alpha * dx_full[pos])
            trial[retire] = 0.0
            mats_t, w_t, p_t, dual_t = eval_point(trial)
            resid_t = p_t / budgets - 1.0
            if slope > 0.0:
                better_dual = dual_t >= dual + 0.1 * alpha * slope
            else:
                better_dual = dual_t > dual + 1e-12 * (1.0 + abs(dual))
            better_kkt = kkt_residual(trial, resid_t) < kkt * (1.0 - 1e-3)
            if better_dual or better_kkt:
                mu, mats, w, p, dual = trial, mats_t, w_t, p_t, dual_t
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break

    # on a stalled exit keep the best iterate; the duality gap of its
    # feasible rescaling decides whether the caller still needs to polish.
    # The acceptable gap is orders below every consumer's tolerance: the
    # outer loop guards monotonicity separately and reads rate levels at
    # percent precision, so polishing past this point buys nothing
    kkt = kkt_residual(mu, p / budgets - 1.0)
    if best is not None and best[0] < kkt:
        kkt, mu, w, p, dual = best
    return mu, w, p, _rel_gap(prob, w, p, dual) <= 5e-6, nsolves


def solve_power(
    prob: PowerSubproblem,
    w0: np.ndarray,
    options: SolverOptions | None = None,
    mu0: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """Solve the power-constrained quadratic program by dual decomposition.

    Returns the minimizer and an info dict with iteration counts and KKT
    residuals.  The returned point always satisfies every power cap within
    the feasibility tolerance (a final per-AP rescale guards the corner
    cases), and its objective does not exceed the objective at the
    feasible starting point ``w0``.  ``mu0`` warm-starts the multipliers,
    skipping the cold subgradient phase.
    """
    opts = options or SolverOptions()
    budgets = prob.budgets
    mu = np.zeros(prob.num_aps)
    evals = 0

    # a relative ridge keeps every Lagrangian system well conditioned (the
    # quadratic blocks are typically rank deficient); the distortion is ~1e-9
    # relative and the final incumbent check below uses the exact objective
    ridge = 1e-9 * float(np.max(np.abs(prob.xi)))
    if ridge > 0.0:
        eye = np.eye(prob.xi.shape[1])
        reg = PowerSubproblem(
            xi=prob.xi + ridge * eye, xt=prob.xt, zeta=prob.zeta,
            gram=prob.gram, budgets=prob.budgets,
        )
    else:
        reg = prob

    def primal(mu_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nonlocal evals
        evals += 1
        w = _primal_solve(reg.xi, reg.xt, reg.gram, mu_vec)
        return w, prob.ap_powers(w)

    w, p = primal(mu)
    if np.all(p <= budgets * (1.0 + opts.feas_tol)):
        info = {"iterations": evals, "sweeps": 0, "mu": mu, "fallback": False,
                "kkt_stationarity": 0.0,
                "kkt_feasibility": float(np.max(p / budgets - 1.0)), "kkt_complementarity": 0.0}
        return _safety_scale(prob, w, p), info

    # an all-zero warm start carries no scale information; only reuse
    # multipliers that actually penalized something last time
    if mu0 is not None and np.any(np.asarray(mu0) > 0.0):
        mu = np.asarray(mu0, dtype=float).copy()
        w, p = primal(mu)
    else:
        # diminishing-step dual ascent on the violated constraints
        for it in range(1, opts.subgrad_iters + 1):
            step = opts.subgrad_step / np.sqrt(it)
            mu = np.maximum(0.0, mu + step * (p / budgets - 1.0))
            w, p = primal(mu)

    mu, w, p, solved, nsolves = _dual_newton(reg, mu, opts)
    evals += nsolves

    # fallback polish: cyclic exact maximization of the concave dual, one
    # brentq root per binding AP, until the duality gap certifies the point
    sweeps = 0
    if not solved:
        for _ in range(opts.polish_sweeps):
            sweeps += 1
            changed = False
            for a in range(prob.num_aps):
                active = p[a] > budgets[a] * (1.0 - opts.feas_tol) or mu[a] > 0.0
                if not active:
                    continue

                def excess(x: float, a: int = a) -> float:
                    trial = mu.copy()
                    trial[a] = x
                    _, pw = primal(trial)
                    return pw[a] - budgets[a]

                if excess(0.0) <= 0.0:
                    if mu[a] != 0.0:
                        changed = True
                    mu[a] = 0.0
                else:
                    hi = max(mu[a], 1e-12)
                    for _ in range(80):
                        if excess(hi) < 0.0:
                            break
                        hi *= 4.0
                    else:
                        raise SolverError("dual variable bracket expansion failed")
                    root = scipy.optimize.brentq(
                        excess, 0.0, hi, xtol=max(1e-30, 1e-9 * hi), rtol=1e-12, maxiter=200
                    )
                    if abs(root - mu[a]) > 1e-11 * (1.0 + abs(mu[a])):
                        changed = True
                    mu[a] = root
            w, p = primal(mu)
            dual_val = reg.objective(w) + float(mu @ (p - budgets))
            if _rel_gap(reg, w, p, dual_val) <= 1e-9:
                break
            if not changed and np.all(p <= budgets * (1.0 + opts.feas_tol)):
                break

    w = _safety_scale(prob, w, p)
    p = prob.ap_powers(w)
    # never return a point worse than a feasible warm start; with the dual
    # solved to convergence this only absorbs roundoff-level regressions
    fellback = False
    p0 = prob.ap_powers(w0)
    if np.all(p0 <= budgets * (1.0 + opts.feas_tol)) and prob.objective(w) > prob.objective(w0):
        w, p, fellback = w0.copy(), p0, True
    comp = float(np.sum(mu * np.abs(p - budgets) / budgets))
    info = {"iterations": evals, "sweeps": sweeps, "mu": mu, "fallback": fellback,
            "kkt_stationarity": 0.0,
            "kkt_feasibility": float(np.max(p / budgets - 1.0)), "kkt_complementarity": comp}
    return w, info


def _safety_scale(prob: PowerSubproblem, w: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Rescale per-AP blocks so every power cap holds exactly, never loosened."""
    if np.all(p <= prob.budgets):
        return w
    M, K, n = w.shape
    A, n_rf = prob.num_aps, prob.n_rf
    scale = np.minimum(1.0, np.sqrt(prob.budgets / np.maximum(p, 1e-300)))
    wa = w.reshape(M, K, A, n_rf) * scale[None, None, :, None]
    return wa.reshape(M, K, n)


def solve_unit_modulus(
    prob: UnitModulusSubproblem, x0: np.ndarray, options: SolverOptions | None = None
) -> tuple[np.ndarray, dict]:
    """Minimize each unit-modulus block by exact cyclic phase updates.

    Fixing every entry but one leaves an objective of the form
    2 Re(conj(x_i) v_i) + const, minimized on the unit circle by
    x_i = -v_i / |v_i|.  Sweeping the entries in order is monotone, so the
    returned point is feasible and never worse than the start.
    """
    opts = options or SolverOptions()
    B, n = prob.lin.shape
    x = x0.reshape(B, n).astype(complex).copy()
    mags = np.abs(x)
    if np.any(mags == 0.0):
        raise ParameterError("starting point must have nonzero entries")
    x /= mags
    if n == 0 or B == 0:
        return x, {"iterations": 0, "objective": prob.objective(x)}

    diag = np.einsum("bii->bi", prob.quad).real
    cols = np.swapaxes(prob.quad, 1, 2)                   # cols[b, i] = quad[b][:, i]

    def value(xc: np.ndarray, qx: np.ndarray) -> float:
        return float((xc.conj() * qx).real.sum() - 2.0 * (prob.lin.conj() * xc).real.sum())

    qx = np.matmul(prob.quad, x[..., None])[..., 0]
    f_prev = value(x, qx)
    sweeps = 0
    for _ in range(opts.mm_max_iters):
        sweeps += 1
        for i in range(n):
            v = qx[:, i] - diag[:, i] * x[:, i] - prob.lin[:, i]
            mag = np.abs(v)
            xi = np.where(mag > 0.0, -v / np.maximum(mag, 1e-300), x[:, i])
            qx += cols[:, i] * (xi - x[:, i])[:, None]
            x[:, i] = xi
        qx = np.matmul(prob.quad, x[..., None])[..., 0]   # shed accumulated drift
        f = value(x, qx)
        if abs(f_prev - f) <= opts.mm_tol * (1.0 + abs(f_prev)):
            f_prev = f
            break
        f_prev = f
    return x, {"iterations": sweeps, "objective": f_prev}


def solve_pds(prob, x0: np.ndarray, options: SolverOptions | None = None) -> tuple[np.ndarray, dict]:
    """Dispatch a subproblem to its solver (power-capped or unit-modulus)."""
    if isinstance(prob, PowerSubproblem):
        return solve_power(prob, x0, options)
    if isinstance(prob, UnitModulusSubproblem):
        return solve_unit_modulus(prob, x0, options)
    raise ParameterError(f"unsupported subproblem type {type(prob)!r}")
