"""Dynamic-phasor models and a switched-circuit oracle for tuned PDM WPT links."""

from .params import (
    TABLE_I,
    TABLE_II,
    ConversionRatios,
    DerivedParams,
    OperatingPoint,
    SystemParams,
    conversion_ratios_tuned,
    derive,
    load_config,
    tuned_params,
    validate_tuned,
)
from .phasor_models import ControlSchedule, Trajectory, integrate
from .analysis import LtiModel, linearize, modal_analysis, steady_state, transfer_function

__version__ = "0.1.0"
