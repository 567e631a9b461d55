"""Energy-efficient scheduling and power allocation for coordinated
downlink OFDMA clusters.

Three figures of merit are supported: the global energy efficiency
(network sum-rate over consumed power), the weighted sum of per-slot
efficiencies, and the log of their exponentially-weighted product; each
comes with an interference-aware solver and a globally-optimal
noise-limited variant, plus full-power and sum-rate baselines and a Monte
Carlo scenario generator.

``eecoord.kernels.BACKEND`` reports whether the compiled extension or the
pure NumPy fallback is executing the hot kernels.
"""

from .baseline import max_power, solve_sumrate
from .inner import (ConcaveMaxResult, DinkelbachState, InnerSolveError, LineSearchError,
                    WaterfillResult, concave_max, dinkelbach, interference_fixed_point,
                    waterfill_bisect)
from .kernels import BACKEND
from .model import (Allocation, NetworkInstance, PerBsPower, PerSubcarrierPower, SolverError,
                    SolverReport, best_schedule, consumed_power_total, gee, make_allocation,
                    prod_ee_log, rate, sinr, sum_ee, sum_rate)
from .oracle import grid_search
from .sca import (LogPowerVector, ScaCoefficients, alpha_beta, bound_f, bound_g, bound_h,
                  bound_phi, grad_gee_q, grad_h_q)
from .scenario import (Scenario, ScenarioConfig, avg_bs_efficiency, draw_scenario, hex_layout,
                       noise_variance, path_loss_linear)
from .solver_gee import GeeOptions, gee_kkt_residual, solve_gee, solve_gee_nl
from .solver_prodee import ProdEeOptions, prodee_kkt_residual, solve_prodee, solve_prodee_nl
from .solver_sumee import (SumEeOptions, SumEeTerms, nl_slot_cap, solve_sumee, solve_sumee_nl,
                           sumee_kkt_residual, sumee_power_update, sumee_terms)

__version__ = "0.1.0"

__all__ = [
    "Allocation", "BACKEND", "ConcaveMaxResult", "DinkelbachState", "GeeOptions",
    "InnerSolveError", "LineSearchError", "LogPowerVector", "NetworkInstance", "PerBsPower",
    "PerSubcarrierPower", "ProdEeOptions", "ScaCoefficients", "Scenario", "ScenarioConfig",
    "SolverError", "SolverReport", "SumEeOptions", "SumEeTerms", "WaterfillResult",
    "alpha_beta", "avg_bs_efficiency", "best_schedule", "bound_f", "bound_g", "bound_h",
    "bound_phi", "concave_max", "consumed_power_total", "dinkelbach", "draw_scenario", "gee",
    "gee_kkt_residual", "grad_gee_q", "grad_h_q", "grid_search", "hex_layout",
    "interference_fixed_point", "make_allocation", "max_power", "nl_slot_cap",
    "noise_variance", "path_loss_linear", "prod_ee_log", "prodee_kkt_residual", "rate",
    "sinr", "solve_gee", "solve_gee_nl", "solve_prodee", "solve_prodee_nl", "solve_sumee",
    "solve_sumee_nl", "solve_sumrate", "sum_ee", "sum_rate", "sumee_kkt_residual",
    "sumee_power_update", "sumee_terms", "waterfill_bisect",
]
