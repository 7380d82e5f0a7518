"""Transfer operators, path-space measures and martingale wavelet
transforms on branching dynamical systems: subshifts of finite type,
winding maps of the circle and Julia-set backward dynamics."""

from .subshift import (
    TransitionMatrix,
    Subshift,
    CylinderFunction,
    CylinderMeasure,
    analyze_matrix,
    admissible_words,
    preimage_count,
    preimages_word,
    invariant_cylinder_measure,
    ruelle_matrix,
    golden_mean_matrix,
    full_shift_matrix,
)
from .circle import CirclePower, TrigPoly, unit_grid
from .complexdyn import (
    RationalMap,
    JuliaBackward,
    INFINITY,
    map_eval,
    map_preimages,
    backward_orbit_sample,
    brolin_measure,
    moment,
    PointCloudMeasure,
    preset_map,
)
from .transfer import (
    WeightFunction,
    apply_ruelle,
    ruelle_iterate,
    pf_solve,
    harmonic_limit,
    SubshiftOperator,
    CircleOperator,
    PFData,
    NonConvergenceError,
    PreconditionError,
)
from .filters import (
    FilterSystem,
    ScalingCoefficients,
    LoopGroupElement,
    filter_from_coeffs,
    preset_filters,
    coefficient_preset,
    qmf_residual,
    loop_group_apply,
    cascade_approx,
)
from .solenoid import (
    SolenoidPath,
    ModularFunction,
    PathMeasureSampler,
    HaarBase,
    TrigDensityBase,
    CylinderBase,
    rhat,
    delta_from_weight,
    delta_table,
    enumerate_paths,
    enumerated_level_marginal,
    omega_level_measure,
    fixed_point_gap,
    lift_measure,
    radon_nikodym_estimate,
)
from .martingale import (
    MartingaleVector,
    SubshiftMartingaleContext,
    CircleMartingaleContext,
    embed,
    vacuum,
    inner_product,
    dilate,
    dilate_inverse,
    multiply,
    covariance_residual,
    multiplicity_sum_check,
    harmonic_to_cocycle,
)
from .cantor import (
    TriadicInterval,
    cantor_mass,
    scaling_identity_residual,
    cantor_filter_system,
    detail_inner_products,
)

__version__ = "0.1.0"
