"""q-analogue Szász-Mirakjan operators with stable evaluation and an experiment harness."""

from .analysis import (
    ExperimentReport,
    GridSpec,
    WeightedFunction,
    bound_check,
    convergence_experiment,
    first_modulus,
    second_modulus,
    steklov,
    steklov_report,
    voronovskaja_scan,
    weighted_norm,
)
from .errors import (
    DomainError,
    NonFiniteValueError,
    ParameterError,
    QIntegerOverflowWarning,
    QSzaszError,
    SeriesExhaustedError,
)
from .functions import FunctionSpec, FunctionSpecError, parse_function_spec
from .moments import (
    MomentPolynomial,
    QStirlingTable,
    central_moment,
    classical_stirling_table,
    moment_polynomial,
    qstirling_table,
    raw_moment,
    reference_central_moment,
)
from .operator import (
    PositivityReport,
    WeightTable,
    apply_operator,
    classical_szasz,
    operator_deviation,
    positivity_scan,
    weight,
    weight_identity_residual,
    weight_table,
)
from .qcore import (
    DEFAULT_POLICY,
    E_q,
    QContext,
    SeriesPolicy,
    SignedLogValue,
    e_q,
    log_q_integer,
    q_binomial,
    q_derivative,
    q_factorial,
    q_integer,
)

__version__ = "0.1.0"
