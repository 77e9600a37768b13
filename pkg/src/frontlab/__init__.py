"""frontlab: stability laboratory for combustion reaction-diffusion steady states.

Modules map onto the pipeline: `model` (reaction terms, block systems,
nonlinearities), `spectral` (Fourier symbols, abscissas, sweeps, exact
propagators), `front` (traveling-wave ODE and shooting), `sim` (periodic
pseudo-spectral IMEX evolution), `norms` (weighted/unweighted measurements,
decay fits, theorem verdicts), `cli` (scenario-driven command line).
"""

from .front import FrontProfile, OrbitResult, integrate_orbit, shoot_speed
from .model import (
    BlockSystem,
    EndStatePair,
    ModelParams,
    combustion_end_states,
    eval_H,
    eval_N_times_v,
    eval_f_combustion,
    eval_g,
    jacobian_at_minus,
    lipschitz_probe,
    make_combustion_system,
    make_exo_endo_system,
    make_gasless_system,
)
from .norms import (
    DecayFit,
    NormSeries,
    VerdictReport,
    fit_decay,
    norm_E,
    norm_unweighted,
    norm_weighted,
    verify_stability_theorem,
)
from .sim import (
    FieldState,
    Grid,
    Perturbation,
    apply_linear_exact,
    build_perturbation,
    run,
    step_imex,
)
from .spectral import (
    SpectrumSweep,
    SymbolMatrix,
    abscissa_unweighted,
    abscissa_weighted,
    block_abscissas,
    eigvals_symbol,
    eval_symbol,
    expm_triangular_2x2,
    optimal_weight,
    semigroup_envelope,
    sweep_symbol,
    tensor_sum_check,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BlockSystem", "EndStatePair", "ModelParams", "combustion_end_states",
    "eval_H", "eval_N_times_v", "eval_f_combustion", "eval_g",
    "jacobian_at_minus", "lipschitz_probe", "make_combustion_system",
    "make_exo_endo_system", "make_gasless_system",
    "SpectrumSweep", "SymbolMatrix", "abscissa_unweighted", "abscissa_weighted",
    "block_abscissas", "eigvals_symbol", "eval_symbol", "expm_triangular_2x2",
    "optimal_weight", "semigroup_envelope", "sweep_symbol", "tensor_sum_check",
    "FrontProfile", "OrbitResult", "integrate_orbit", "shoot_speed",
    "FieldState", "Grid", "Perturbation", "apply_linear_exact",
    "build_perturbation", "run", "step_imex",
    "DecayFit", "NormSeries", "VerdictReport", "fit_decay", "norm_E",
    "norm_unweighted", "norm_weighted", "verify_stability_theorem",
]
