"""stanvi: black-box variational inference for a Stan language subset.

Compiles Stan-subset programs to a differentiable unconstrained log-joint,
synthesizes any of eight automatic variational guides, fits them by
stochastic-gradient ELBO maximization, and scores posterior accuracy against
reference samples.
"""

from . import autodiff, distributions, transforms
from .data import DataBindings, load_data
from .frontend import check, check_source, parse, parse_source, print_program, tokenize
from .guides import GUIDE_KINDS, GuideConfig, guide_log_density, guide_sample, \
    iaf_inverse, laplace_finalize, synthesize
from .metrics import ErrorReport, bimodality_diagnostic, relative_error, summarize
from .model import GenerativeModel, ParamLayout, compile_model, log_joint, \
    run_generated_quantities
from .samples import SampleTable
from .svi import SVIConfig, SVIResult, SVIState, adam_step, draw_posterior, elbo, run
from .transforms import ConstraintSpec, transform_forward, transform_inverse

__version__ = "0.1.0"

__all__ = [
    "autodiff", "distributions", "transforms",
    "DataBindings", "load_data",
    "tokenize", "parse", "parse_source", "check", "check_source", "print_program",
    "GUIDE_KINDS", "GuideConfig", "synthesize", "guide_sample",
    "guide_log_density", "laplace_finalize", "iaf_inverse",
    "ErrorReport", "relative_error", "summarize", "bimodality_diagnostic",
    "GenerativeModel", "ParamLayout", "compile_model", "log_joint",
    "run_generated_quantities",
    "SampleTable",
    "SVIConfig", "SVIResult", "SVIState", "elbo", "adam_step", "run",
    "draw_posterior",
    "ConstraintSpec", "transform_forward", "transform_inverse",
    "__version__",
]
