from .bogovskii import BogovskiiResult, discrete_bogovskii, dual_norm
from .holder import HolderReport, holder_norm, holder_quotient, holder_report
from .infsup import InfSupReport, dictionary_bound, infsup_constant, infsup_sweep
from .maximal import ball_averages, maximal_function, radius_ladder
from .truncation import (TruncationReport, discrete_lipschitz_truncate, level_bounds, lipschitz_truncate,
                         select_lambda, truncation_smallness)

__all__ = [
    "BogovskiiResult", "discrete_bogovskii", "dual_norm",
    "HolderReport", "holder_norm", "holder_quotient", "holder_report",
    "InfSupReport", "dictionary_bound", "infsup_constant", "infsup_sweep",
    "ball_averages", "maximal_function", "radius_ladder",
    "TruncationReport", "discrete_lipschitz_truncate", "level_bounds", "lipschitz_truncate",
    "select_lambda", "truncation_smallness",
]
