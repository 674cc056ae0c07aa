"""Ergodic sequences of completely positive maps and ergodic matrix product states."""

__version__ = "0.1.0"

from .cpmaps import (
    CPMap,
    StrictCertificate,
    adjoint,
    apply,
    choi_matrix,
    compose,
    hennion_embed,
    is_trace_preserving,
    kernel_condition_check,
    load_kraus,
    save_kraus,
    strict_positivity_certificate,
    superop_matrix,
)
from .ergodic import DriverKind, ErgodicDriver, validate_assumptions
from .matcore import PSDClass, classify_psd, split_trace_norm, sqrt_psd, trace_norm
from .mps import (
    GaugeData,
    LocalObservable,
    MpsChain,
    brute_force_state,
    correlation,
    finite_expectation,
    gauge_fix,
    observable_hat,
    thermo_expectation,
)
from .pmetric import contraction_estimate, d_metric, m_coeff, pmetric, pmetric_endpoint_oracle, proj_apply
from .process import (
    CompositionResult,
    EigenPair,
    LimitSequence,
    Side,
    compose_window,
    kappa_estimate,
    limit_sequence,
    perron_pair,
    rank_one_error,
    stopping_time,
)
