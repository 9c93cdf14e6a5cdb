"""Random compositions of nearly integrable twist maps on the cylinder.

Simulation of the random system at scale, normal-form predictions of the
limiting drift and variance, classification of the action axis by
Diophantine type, and statistical verification of the diffusion limit.
"""

from .trig import TrigPoly
from .dynamics import (
    MapFamily,
    PhasePoint,
    OrbitRecord,
    LanePack,
    step,
    iterate,
    orbit_seed,
    draw_symbols,
)
from .hypotheses import (
    CheckResult,
    HypothesisReport,
    build_report,
    check_H0,
    check_H1_H4,
    check_H2,
    check_H5,
    check_sigma_nonvanishing,
    find_zeros,
)
from .normal_form import (
    DiffusionPrediction,
    GeneratingFunction,
    E1_series,
    E2_field,
    E3_series,
    apply_generator,
    averaged_potential,
    bump,
    default_gamma,
    drift_b,
    gamma_max,
    ir_drift_variance,
    mollifier,
    resonance_set,
    resonant_harmonics,
    solve_homological,
    variance_sigma2,
)
from .strips import (
    StripClass,
    StripMeasure,
    ZoneParams,
    best_rational,
    birkhoff_defect,
    classify,
    denominator_cutoff,
    ergodization_error,
    rational_strip_measure,
)
from .resonance import (
    ReebGraph,
    ResonantFrame,
    composite_map,
    critical_points,
    hamiltonian_H,
    reeb_graph,
    rr_drift_variance,
    tz_variance,
)
from .ensemble import (
    CharFunctionTable,
    CltReport,
    EnsembleStats,
    MartingaleReport,
    RRBlockReport,
    StoppingTimes,
    StripOccupation,
    clt_test,
    empirical_char_function,
    martingale_residual,
    martingale_residuals,
    rr_h_process,
    run_ensemble,
    stopping_times,
    time_in_rational_strips,
)
from .config import Config, ConfigError, load_config

__version__ = "0.1.0"
