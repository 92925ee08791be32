"""Parallel adaptive quadrature over families of 2D integrals under one global error."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    AdaptiveConfig,
    FamilyResult,
    IntegrandFamily,
    SingularityError,
    Task,
    TaskContainer,
    init_container,
    refine_task,
    refine_tasks,
    run_adaptive,
    serial_reference,
)
from .frg import (  # noqa: E402
    BubbleSpec,
    FormFactorBasis,
    KernelArgs,
    ModelParams,
    build_family,
    dispersion,
    form_factor,
    kernel_oracle,
    kernel_ph,
    kernel_pp,
    propagator,
    regulator,
)
from .local import LocalResult, run_family_local, run_local  # noqa: E402
from .rules import (  # noqa: E402
    EvaluationError,
    PairResult,
    QuadPairRule,
    Rectangle,
    Rule1D,
    integrate_pair,
    make_pair,
    make_rule,
)

__all__ = [
    "AdaptiveConfig", "BubbleSpec", "EvaluationError", "FamilyResult", "FormFactorBasis",
    "IntegrandFamily", "KernelArgs", "LocalResult", "ModelParams", "PairResult", "QuadPairRule",
    "Rectangle", "Rule1D", "SingularityError", "Task", "TaskContainer", "build_family",
    "dispersion", "form_factor", "init_container", "integrate_pair", "kernel_oracle",
    "kernel_ph", "kernel_pp", "make_pair", "make_rule", "propagator", "refine_task",
    "refine_tasks", "regulator", "run_adaptive", "run_family_local", "run_local",
    "serial_reference",
]
