"""Sensitivity-based interval reachability for uncertain ODEs."""
from .bounds import SensitivityBounds
from .bounds.sampling import FalsificationReport, Grid, RandomSamples, falsify_bounds, sample_bounds
from .bounds.taylor import (
    InfeasibleOrderError,
    JacobianBounds,
    jacobian_bounds,
    minimal_taylor_order,
    taylor_sensitivity_bounds,
)
from .estimators import IntervalSensitivityBounds, SamplingSensitivityBounds, SensitivityReach
from .integrate import IntegratorConfig, integrate_augmented, integrate_phi
from .interval import Interval, IntervalMatrix, IntervalVector
from .models import (
    ReachSpec,
    SystemModel,
    default_spec,
    get_model,
    linear_model,
    load_config,
    model_from_config,
    model_satellite,
    model_traffic3,
    model_traffic_n,
)
from .reach import (
    OverApprox,
    overapprox_bounded,
    overapprox_discrete,
    overapprox_sign_stable,
    tightness_check,
)

__version__ = "0.1.0"
