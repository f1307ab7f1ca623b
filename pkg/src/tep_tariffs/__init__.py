"""Transmission expansion planning with ex-ante network tariffs.

Markets are cleared per period as LPs; planning schemes are compiled into
mixed 0-1 programs and solved with an in-house branch and bound or HiGHS.
"""

from .clearing import (ClearingOutcome, VerificationReport, apply_tariff_shift,
                       build_clearing_lp, clear_market, congestion_rent_direct,
                       congestion_rent_recast, tariff_payments, verify_outcome)
from .econ import (EconSummary, NetCurve, atc, comparison_table,
                   net_import_export_curves, summarize)
from .instances import (generate_garver, generate_two_node, generate_two_zone,
                        load_instance, save_instance)
from .lp import LpModel, LpSolution, check_strong_duality, solve_lp
from .milp import MilpModel, MilpSolution, enumerate_oracle, solve_milp
from .model import Bid, Instance, Line, Network, Node, Period, PlanDecision
from .network import build_incidence, build_loop_basis, validate_instance
from .schemes import (AuxEncoding, PlanResult, TariffGrid, build_ts_milp,
                      linearize_product, planning_oracle, solve_cs, solve_csr,
                      solve_csrl, solve_ts)

__version__ = "0.1.0"
