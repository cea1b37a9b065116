"""Data-driven controller tuning with a safe-improvement guarantee.

From noisy input/output records of an unknown stable discrete-time plant,
this package identifies an FIR coefficient ellipsoid, samples scenario
plants from it, and tunes a linear-in-parameters output-feedback
controller by minimizing the worst-case scenario cost relative to an
existing baseline controller, so the result is (with high probability) at
least as good as the baseline on the true plant.
"""

from .lti import (
    Dataset,
    ImpulseResponse,
    TransferFunction,
    closed_loop,
    converged_impulse_response,
    h2_norm_sq,
    impulse_response,
    is_stable,
    simulate,
    tf_add,
    tf_mul,
    tf_one_minus,
    tf_sub,
)
from .sysid import (
    FirEstimate,
    UncertaintySet,
    build_regressor,
    f_quantile,
    least_squares_fir,
    membership,
    uncertainty_set,
)
from .scenario import ScenarioSet, required_scenarios, sample_scenarios
from .synthesis import (
    Controller,
    ControllerBasis,
    QuadraticCriterion,
    RegretProgram,
    SynthesisResult,
    build_regret_program,
    criterion_quadratic,
    solve_min_max,
    solve_min_max_regret,
    solve_nominal,
)
from .evaluation import (
    EvaluationReport,
    fit_fc,
    fit_fw,
    run_monte_carlo,
    step_response,
    surrogate_cost,
    true_cost,
)
from .config import ExperimentConfig, load_config

__version__ = "0.1.0"
