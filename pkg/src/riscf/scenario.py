"""Deployment geometry, fading synthesis and per-scheme experiment wiring.

The default deployment strings APs along a street at y = -20 m with two
RISs on the opposite side; users scatter in a disc around (L, 0) on the
ground.  Large-scale gains follow a distance power law per link class:
exponent 2 on the two RIS segments (clear line of sight) and a larger
exponent on the direct AP-user links, whose obstruction is the reason to
deploy the surfaces.  Gains also carry the square-root array-size
factors that undo the unit-norm response vector convention, so an
N-element surface contributes its full N-fold coherent aperture.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .analog import AnalogPrecoder, TdLayerConfig, design_analog_precoder
from .arrays import SubcarrierGrid, UlaGeometry, UpaGeometry, make_subcarrier_grid
from .channel import (
    ApRisPathParams,
    ChannelRealization,
    DirectPathParams,
    RisUePathParams,
    perturb_csi,
    synthesize_realization,
)
from .errors import ParameterError
from .optimizer import AoOptions, AoTrace, PrecoderVariables, initialize_variables, run_ao, wsr
from .solver import SolverOptions

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class SystemConfig:
    """Radio and solver parameters of one simulated network."""

    A: int = 5                 # access points
    R: int = 2                 # RISs, also RF chains per AP
    K: int = 4                 # single-antenna users
    M: int = 8                 # subcarriers
    n_tx: int = 16             # AP antennas
    n_x: int = 8               # RIS elements per horizontal row
    n_y: int = 8               # RIS elements per vertical column
    n_td: int = 16             # delay elements per RF chain
    f_c: float = 100e9         # carrier, Hz
    bandwidth: float = 10e9    # two-sided bandwidth, Hz
    noise_dbm: float = -110.0
    power_dbm: float | tuple[float, ...] = 0.0
    weights: tuple[float, ...] | None = None
    ao_max_iters: int = 20
    ao_tol: float = 1e-6           # stopping rule; convergence is measured on the trace
    aux_form: str = "complex"
    pl_ref_db: float = -30.0           # power gain at 1 m reference distance
    pl_exp_direct: float = 3.8         # long street-level links fade fast at THz
    pl_exp_segment: float = 2.0        # short elevated AP-RIS / RIS-UE hops
    ris_reflection_loss_db: float = 0.0    # extra loss per reflection, dB
    pds_subgrad_iters: int = 30
    pds_step: float = 1.0
    mm_max_iters: int = 300
    mm_tol: float = 1e-11

    def __post_init__(self) -> None:
        for name in ("A", "R", "K", "M", "n_tx", "n_x", "n_y", "n_td"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be at least 1")
        if self.n_tx % self.n_td != 0:
            raise ParameterError("delay element count must divide the antenna count")
        if isinstance(self.power_dbm, tuple) and len(self.power_dbm) != self.A:
            raise ParameterError("per-AP power list length must equal A")
        if self.weights is not None and len(self.weights) != self.K:
            raise ParameterError("weights length must equal K")
        if self.aux_form not in ("complex", "real"):
            raise ParameterError(f"unknown auxiliary form {self.aux_form!r}")

    @property
    def n_ris(self) -> int:
        return self.n_x * self.n_y

    def grid(self) -> SubcarrierGrid:
        return make_subcarrier_grid(self.f_c, self.bandwidth, self.M)

    def budgets_watts(self) -> np.ndarray:
        p = self.power_dbm
        vals = np.full(self.A, float(p)) if not isinstance(p, tuple) else np.asarray(p, dtype=float)
        return dbm_to_watts(vals)

    def noise_watts(self) -> np.ndarray:
        return np.full((self.K, self.M), dbm_to_watts(self.noise_dbm))

    def weight_vector(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.K)
        return np.asarray(self.weights, dtype=float)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            subgrad_iters=self.pds_subgrad_iters,
            subgrad_step=self.pds_step,
            mm_max_iters=self.mm_max_iters,
            mm_tol=self.mm_tol,
        )


@dataclass(frozen=True)
class ScenarioGeometry:
    """Node coordinates in meters; users scatter around (ue_center_distance, 0)."""

    ap_positions: tuple[tuple[float, float, float], ...]
    ris_positions: tuple[tuple[float, float, float], ...]
    ue_center_distance: float = 40.0
    ue_spread_radius: float = 5.0
    ue_height: float = 1.5

    def __post_init__(self) -> None:
        nodes = list(self.ap_positions) + list(self.ris_positions)
        for i in range(len(nodes)):
            for j in range(i + 1, len(nodes)):
                if math.dist(nodes[i], nodes[j]) <= 1e-9:
                    raise ParameterError("AP and RIS positions must be pairwise distinct")
        if self.ue_spread_radius < 0:
            raise ParameterError("scatter radius must be non-negative")


def default_geometry(num_aps: int = 5, num_ris: int = 2) -> ScenarioGeometry:
    """Street deployment: APs on x in [0, 80] at y = -20, RISs near the users at y = +5."""
    ap_x = np.linspace(0.0, 80.0, num_aps) if num_aps > 1 else np.array([40.0])
    aps = tuple((float(x), -20.0, 10.0) for x in ap_x)
    if num_ris == 2:
        ris_x = [30.0, 60.0]
    else:
        ris_x = [80.0 * (r + 1) / (num_ris + 1) for r in range(num_ris)]
    ris = tuple((float(x), 5.0, 8.0) for x in ris_x)
    return ScenarioGeometry(ap_positions=aps, ris_positions=ris)


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def db_to_amplitude(db: float) -> float:
    return 10.0 ** (db / 20.0)


def pathloss_amplitude(distance: float, exponent: float, ref_db: float) -> float:
    """Amplitude gain of a link: power-law ref_db at 1 m, slope -exponent."""
    if distance <= 0:
        raise ParameterError(f"link distance must be positive, got {distance}")
    return db_to_amplitude(ref_db) * distance ** (-exponent / 2.0)


def _ula_departure_angle(src: np.ndarray, dst: np.ndarray) -> float:
    """Angle whose sine is the direction cosine along the AP array (x) axis."""
    diff = dst - src
    d = float(np.linalg.norm(diff))
    return math.asin(float(np.clip(diff[0] / d, -1.0, 1.0)))


def _upa_angles(ris: np.ndarray, other: np.ndarray) -> tuple[float, float]:
    """Elevation-like and azimuth-like angles of a direction at the RIS plane.

    The surface axes are global x (rows) and z (columns); the returned
    pair (vartheta, varphi) satisfies sin(vartheta) cos(varphi) = ux and
    sin(vartheta) sin(varphi) = uz for the unit direction (ux, uy, uz).
    """
    diff = other - ris
    d = float(np.linalg.norm(diff))
    ux, uz = diff[0] / d, diff[2] / d
    s = math.hypot(ux, uz)
    if s == 0.0:
        return 0.0, 0.0
    return math.asin(min(s, 1.0)), math.atan2(uz, ux)


def generate_scenario(
    cfg: SystemConfig, geom: ScenarioGeometry, rng: np.random.Generator
) -> ChannelRealization:
    """Drop users and synthesize all primitive links of one snapshot.

    User positions are uniform in the scatter disc.  Every link draws an
    independent uniform phase on its complex gain; magnitudes follow the
    power-law model plus the square-root array-size factors.
    """
    if len(geom.ap_positions) != cfg.A or len(geom.ris_positions) != cfg.R:
        raise ParameterError("geometry node counts do not match the configuration")
    grid = cfg.grid()
    ula = UlaGeometry(cfg.n_tx)
    upa = UpaGeometry(cfg.n_x, cfg.n_y)
    aps = [np.asarray(p, dtype=float) for p in geom.ap_positions]
    riss = [np.asarray(p, dtype=float) for p in geom.ris_positions]

    radii = geom.ue_spread_radius * np.sqrt(rng.random(cfg.K))
    angles = 2.0 * np.pi * rng.random(cfg.K)
    ues = [
        np.array([
            geom.ue_center_distance + radii[k] * math.cos(angles[k]),
            radii[k] * math.sin(angles[k]),
            geom.ue_height,
        ])
        for k in range(cfg.K)
    ]

    def unit_phase() -> complex:
        return complex(np.exp(2j * np.pi * rng.random()))

    refl_amp = db_to_amplitude(-cfg.ris_reflection_loss_db)
    ap_ris = []
    for a in range(cfg.A):
        row = []
        for r in range(cfg.R):
            d = float(np.linalg.norm(riss[r] - aps[a]))
            amp = pathloss_amplitude(d, cfg.pl_exp_segment, cfg.pl_ref_db)
            amp *= math.sqrt(cfg.n_tx * cfg.n_ris) * refl_amp
            vt, vp = _upa_angles(riss[r], aps[a])
            row.append(
                ApRisPathParams(
                    alpha=amp * unit_phase(),
                    tau=d / SPEED_OF_LIGHT,
                    vartheta=vt,
                    varphi=vp,
                    phi=_ula_departure_angle(aps[a], riss[r]),
                )
            )
        ap_ris.append(row)

    ris_ue = []
    for r in range(cfg.R):
        row = []
        for k in range(cfg.K):
            d = float(np.linalg.norm(ues[k] - riss[r]))
            amp = pathloss_amplitude(d, cfg.pl_exp_segment, cfg.pl_ref_db) * math.sqrt(cfg.n_ris)
            vt, vp = _upa_angles(riss[r], ues[k])
            row.append(
                RisUePathParams(beta=amp * unit_phase(), tau=d / SPEED_OF_LIGHT, mu=vt, nu=vp)
            )
        ris_ue.append(row)

    direct = []
    for a in range(cfg.A):
        row = []
        for k in range(cfg.K):
            d = float(np.linalg.norm(ues[k] - aps[a]))
            amp = pathloss_amplitude(d, cfg.pl_exp_direct, cfg.pl_ref_db) * math.sqrt(cfg.n_tx)
            row.append(
                DirectPathParams(
                    gamma=amp * unit_phase(),
                    tau=d / SPEED_OF_LIGHT,
                    psi=_ula_departure_angle(aps[a], ues[k]),
                )
            )
        direct.append(row)

    return synthesize_realization(grid, ula, upa, ap_ris, ris_ue, direct)


@dataclass(frozen=True)
class SchemeWiring:
    """Which blocks a comparison scheme enables."""

    name: str
    with_td: bool
    use_ris: bool
    optimize_theta: bool
    optimize_t: bool
    ris_bits: int


SCHEMES: dict[str, SchemeWiring] = {
    "proposed": SchemeWiring("proposed", True, True, True, True, 0),
    "proposed-2bit": SchemeWiring("proposed-2bit", True, True, True, True, 2),
    "proposed-1bit": SchemeWiring("proposed-1bit", True, True, True, True, 1),
    "without-ris": SchemeWiring("without-ris", True, False, False, False, 0),
    "without-td": SchemeWiring("without-td", False, True, True, False, 0),
}
SCHEME_ORDER: tuple[str, ...] = (
    "proposed",
    "proposed-2bit",
    "proposed-1bit",
    "without-ris",
    "without-td",
)


def resolve_schemes(spec: str) -> tuple[str, ...]:
    if spec == "all":
        return SCHEME_ORDER
    if spec not in SCHEMES:
        raise ParameterError(f"unknown scheme {spec!r}; choose from {sorted(SCHEMES)} or 'all'")
    return (spec,)


def departure_angles(geom: ScenarioGeometry) -> np.ndarray:
    """AP-to-RIS departure angles used by the analog stage, shape (A, R)."""
    out = np.empty((len(geom.ap_positions), len(geom.ris_positions)))
    for a, ap in enumerate(geom.ap_positions):
        for r, ris in enumerate(geom.ris_positions):
            out[a, r] = _ula_departure_angle(np.asarray(ap, float), np.asarray(ris, float))
    return out


def user_beam_angles(geom: ScenarioGeometry, n_beams: int) -> np.ndarray:
    """Departure angles toward points spread across the user disc, (A, n_beams).

    Fallback aiming for schemes that run without the reflecting surfaces:
    the RF chains cover the scatter disc instead of pointing at the RISs.
    """
    offsets = np.linspace(-geom.ue_spread_radius, geom.ue_spread_radius, n_beams)
    out = np.empty((len(geom.ap_positions), n_beams))
    for a, ap in enumerate(geom.ap_positions):
        for j, off in enumerate(offsets):
            dst = np.array([geom.ue_center_distance + off, 0.0, geom.ue_height])
            out[a, j] = _ula_departure_angle(np.asarray(ap, float), dst)
    return out


def make_precoder(cfg: SystemConfig, geom: ScenarioGeometry, wiring: SchemeWiring) -> AnalogPrecoder:
    td_cfg = TdLayerConfig(num_antennas=cfg.n_tx, num_delays=cfg.n_td)
    if wiring.use_ris:
        aod = departure_angles(geom)
    else:
        aod = user_beam_angles(geom, len(geom.ris_positions))
    return design_analog_precoder(aod, cfg.grid(), td_cfg, with_td=wiring.with_td)


@dataclass
class SingleRun:
    """Outcome of one (scheme, seed) optimization."""

    asr: float                  # bits per subcarrier, evaluated on the true channels
    iterations: int
    trace: AoTrace
    variables: PrecoderVariables


def run_single(
    cfg: SystemConfig,
    geom: ScenarioGeometry,
    scheme: str,
    seed: int,
    delta: float = 0.0,
) -> SingleRun:
    """Generate one snapshot, optimize one scheme on it and score the result.

    With ``delta > 0`` the optimizer sees a perturbed channel estimate;
    the reported rate always uses the true realization.  Three decoupled
    generator streams (scenario, estimation noise, initial point) keep
    every stage reproducible per seed and independent of the sweep cell.
    """
    wiring = SCHEMES[scheme]
    rng_scenario = np.random.default_rng([seed, 11])
    rng_perturb = np.random.default_rng([seed, 22])
    rng_init = np.random.default_rng([seed, 33])

    realization = generate_scenario(cfg, geom, rng_scenario)
    estimate = perturb_csi(realization, delta, rng_perturb)
    precoder = make_precoder(cfg, geom, wiring)
    budgets = cfg.budgets_watts()
    sigma2 = cfg.noise_watts()
    weights = cfg.weight_vector()

    init = initialize_variables(
        rng_init, estimate, precoder, budgets, ris_bits=wiring.ris_bits, use_ris=wiring.use_ris
    )
    options = AoOptions(
        max_iters=cfg.ao_max_iters,
        tol=cfg.ao_tol,
        use_ris=wiring.use_ris,
        optimize_theta=wiring.optimize_theta,
        optimize_t=wiring.optimize_t,
        ris_bits=wiring.ris_bits,
        aux_form=cfg.aux_form,
        solver=cfg.solver_options(),
    )
    variables, trace = run_ao(estimate, precoder, init, weights, sigma2, budgets, options)
    final = wsr(realization, variables, precoder, sigma2, weights, use_ris=wiring.use_ris)
    return SingleRun(
        asr=final / cfg.M,
        iterations=trace.iterations_to_converge(),
        trace=trace,
        variables=variables,
    )


def config_to_dict(cfg: SystemConfig) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def config_from_dict(data: dict) -> SystemConfig:
    known = {f.name for f in fields(SystemConfig)}
    unknown = set(data) - known
    if unknown:
        raise ParameterError(f"unknown system config keys: {sorted(unknown)}")
    kwargs = dict(data)
    for key in ("power_dbm", "weights"):
        if isinstance(kwargs.get(key), list):
            kwargs[key] = tuple(kwargs[key])
    return SystemConfig(**kwargs)


def geometry_to_dict(geom: ScenarioGeometry) -> dict:
    return {
        "ap_positions": [list(p) for p in geom.ap_positions],
        "ris_positions": [list(p) for p in geom.ris_positions],
        "ue_center_distance": geom.ue_center_distance,
        "ue_spread_radius": geom.ue_spread_radius,
        "ue_height": geom.ue_height,
    }


def geometry_from_dict(data: dict) -> ScenarioGeometry:
    known = {f.name for f in fields(ScenarioGeometry)}
    unknown = set(data) - known
    if unknown:
        raise ParameterError(f"unknown geometry keys: {sorted(unknown)}")
    kwargs = dict(data)
    for key in ("ap_positions", "ris_positions"):
        if key in kwargs:
            kwargs[key] = tuple(tuple(float(c) for c in p) for p in kwargs[key])
    return ScenarioGeometry(**kwargs)


def load_config_file(path: str) -> tuple[SystemConfig, ScenarioGeometry | None]:
    """Read a JSON file with optional "system" and "geometry" sections."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    unknown = set(data) - {"system", "geometry"}
    if unknown:
        raise ParameterError(f"unknown top-level config keys: {sorted(unknown)}")
    cfg = config_from_dict(data.get("system", {}))
    geom = geometry_from_dict(data["geometry"]) if "geometry" in data else None
    return cfg, geom


def config_hash(cfg: SystemConfig, geom: ScenarioGeometry) -> str:
    payload = json.dumps(
        {"system": config_to_dict(cfg), "geometry": geometry_to_dict(geom)},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def with_updates(cfg: SystemConfig, **kwargs) -> SystemConfig:
    return replace(cfg, **kwargs)
