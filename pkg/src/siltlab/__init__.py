"""Self-intersection local times of planar lattice walks: exact counts, expectations,
moderate-deviation estimators, the Gagliardo-Nirenberg constant and polymer sampling."""
__version__ = "0.1.0"

from .walk import (
    StepDistribution,
    Path,
    build_step_distribution,
    preset,
    counterexample_walk,
    sample_path,
    characteristic_function,
    return_probability,
)
from .expectation import ExpectationTable, expected_silt, expectation_table
from .silt import (
    SiltAccumulator,
    silt_update,
    silt_exact,
    silt_value,
    silt_trajectory,
    renormalized_silt,
    block_silt,
    cross_intersections,
)
from .kernels import SincPowerMollifier, GaussianMollifier, DeltaMollifier, mollified_l2
from .variational import gn_ratio, solve_kappa_grid, solve_kappa_ode
from .deviations import (
    ScalingSchedule,
    estimate_cumulant,
    estimate_upper_tail,
    estimate_lower_tail,
    exhaustive_silt_distribution,
    lil_trace,
)
from .polymer import polymer_mcmc, collapse_sweep
