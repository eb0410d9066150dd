"""Zero unique information conditions and closed-form partial information
decompositions for Poisson and multinomial channel pairs."""

__version__ = "0.1.0"

from .conditions import ConditionReport, check, check_multinomial, check_poisson
from .degradation import (
    Channel,
    DegradationCertificate,
    aggregate,
    compound_multinomial_marginal,
    generator_posterior,
    generator_thinning,
    multinomial_degradation_channel,
    poisson_degradation_channel,
    verify_degradation,
)
from .distributions import (
    AMatrix,
    FinitePmf,
    MvPoissonParams,
    build_a_matrix,
    mv_poisson_pmf,
    mv_poisson_pmf_bruteforce,
    truncated_support,
)
from .errors import (
    ConditionsInconclusiveError,
    ConstructionInfeasibleError,
    InfeasibleProblemError,
    InternalError,
    InvalidArgumentError,
    NumericalIntegrityError,
    PidDecompError,
)
from .information import InfoValue, conditional_mutual_information, entropy, mutual_information
from .oracle import OracleProblem, OracleSolution, build_problem, solve_ui
from .pid import PidResult, closed_form_pid, oracle_pid
from .systems import (
    JointPmf,
    MultinomialSystemSpec,
    PoissonSystemSpec,
    ScalarMPmf,
    full_joint_conditionally_independent,
    pairwise_joint,
)

__all__ = [name for name in dir() if not name.startswith("_")]
