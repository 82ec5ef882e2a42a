"""Multi-objective LQR weight selection for fractional-order systems."""

from .model import (
    FractionalTransferFunction,
    PseudoStateSpace,
    frequency_response,
    parse_fractional_tf,
    preset,
    to_pseudo_state_space,
)
from .lqr import design, feedforward_gain, fractional_stability, lqr_gain, solve_care
from .simulate import PerturbationSpec, SimConfig, simulate_closed_loop, step_metrics
from .freqdom import FrequencyGrid, objective_j2, objective_j3
from .pesa2 import PesaConfig, best_compromise, optimize
from .design import FreqConfig, LqrDesignProblem, evaluate

__version__ = "0.1.0"
