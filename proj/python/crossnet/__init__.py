"""CATE estimation with a cross-group correntropy discrepancy penalty."""

from ._core import (
    ConfigError,
    DegenerateMatrix,
    Error,
    FormatError,
    InsufficientSample,
    InvalidArgument,
    InvalidSplit,
    Model,
    NotFound,
    NumericalAbort,
    UndefinedCell,
    abs_ate_error,
    bregman,
    centered_correntropy,
    cond_divergence,
    correntropy_matrix,
    gradcheck,
    load_ihdp,
    load_jobs,
    pehe,
    policy_risk,
    rbf_kernel,
    simulate,
    train,
)

__version__ = "0.1.0"
