"""RIS-assisted wideband cell-free MIMO downlink precoding simulator.

The package splits into five layers: array response primitives
(:mod:`riscf.arrays`), line-of-sight channel synthesis
(:mod:`riscf.channel`), the closed-form analog delay-layer precoder
(:mod:`riscf.analog`), the alternating sum-rate optimizer and its
quadratic subproblems (:mod:`riscf.optimizer`, :mod:`riscf.solver`) and
the scenario/experiment harness (:mod:`riscf.scenario`,
:mod:`riscf.experiments`, :mod:`riscf.cli`).
"""

from .arrays import (
    SubcarrierGrid,
    UlaGeometry,
    UpaGeometry,
    make_subcarrier_grid,
    ula_arv,
    upa_arv,
)
from .channel import (
    ApRisPathParams,
    ChannelRealization,
    DirectPathParams,
    RisConfiguration,
    RisUePathParams,
    effective_channel,
    effective_channel_rows,
    gen_ap_ris_channel,
    gen_direct_channel,
    gen_ris_ue_channel,
    perturb_csi,
    stack_effective_channel,
    synthesize_realization,
)
from .analog import (
    AnalogPrecoder,
    TdLayerConfig,
    aligned_fbar_column,
    ap_rf_blocks,
    ap_td_delays,
    ap_td_vector,
    assemble_fbar,
    delta_periods,
    design_analog_precoder,
)
from .errors import InvariantError, ParameterError, RiscfError, SolverError
from .optimizer import (
    AoOptions,
    AoTrace,
    AuxiliaryVariables,
    PrecoderVariables,
    build_t_subproblem,
    build_theta_subproblem,
    build_w_subproblem,
    initialize_variables,
    quantize_theta,
    run_ao,
    sinr,
    update_lambda,
    update_rho,
    wsr,
)
from .solver import (
    PowerSubproblem,
    SolverOptions,
    UnitModulusSubproblem,
    solve_pds,
    solve_power,
    solve_unit_modulus,
)
from .scenario import (
    SCHEME_ORDER,
    SCHEMES,
    ScenarioGeometry,
    SystemConfig,
    default_geometry,
    generate_scenario,
    run_single,
)
from .experiments import (
    ExperimentResult,
    RunRecord,
    emit_results,
    run_convergence_experiment,
    run_csi_sweep,
    run_distance_sweep,
    run_power_sweep,
    run_user_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
