"""Bill-minimizing dispatch of PV and batteries under time-of-use tariffs."""

from .bes import BatteryDispatch, BatterySpec, soc_step, validate_dispatch
from .billing import BillBreakdown, bill_of_dispatch, brute_force_optimal
from .lp_model import MonthlyInstance, SolutionBundle, assemble_lp, build_instance, extract_solution, solve_instance
from .profiles import PvUnitProfile, SiteProfile, TimeGrid
from .solver import SolverConfig, solve
from .tariff import TariffSchedule, check_eligibility, load_tariff

__version__ = "0.1.0"

__all__ = [
    "BatteryDispatch",
    "BatterySpec",
    "BillBreakdown",
    "MonthlyInstance",
    "PvUnitProfile",
    "SiteProfile",
    "SolutionBundle",
    "SolverConfig",
    "TariffSchedule",
    "TimeGrid",
    "assemble_lp",
    "bill_of_dispatch",
    "brute_force_optimal",
    "build_instance",
    "check_eligibility",
    "extract_solution",
    "load_tariff",
    "soc_step",
    "solve",
    "solve_instance",
    "validate_dispatch",
]
