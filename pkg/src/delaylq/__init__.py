"""Riccati-kernel toolkit for linear-quadratic stochastic control with
delayed control (delay in both drift and volatility), with Markowitz
mean-variance selection under execution delay."""

__version__ = "0.1.0"

from .errors import (ConvergenceError, CSVFormatError, DegeneracyError,
                     DegenerateFrontierError, DelayLQError, DomainError,
                     ParameterError, PositivityError, SimulationError,
                     StateError)
from .grid import (GridSpec, KernelGrid, KernelSlice, export_csv, import_csv,
                   init_top_slice, max_abs_diff, max_abs_diff_slices)
from .markowitz import (FrontierPoint, MarketParams, eta_star, frontier,
                        inner_value, pre_investment_gain, two_asset_frontier)
from .model import FeasibilityReport, ModelParams, feasibility
from .sim import (GAMMA_ZERO, InitialSegment, MCStats, SimBundle, SimConfig,
                  SimulatedPath, feedback_single, feedback_two_asset,
                  martingale_residual, martingale_residuals, simulate,
                  simulate_two_asset, stats_of, value_of)
from .solver import (ResidualReport, SolveConfig, SolveDiagnostics,
                     TwoAssetParams, residual_report, solve_single,
                     solve_two_asset)

__all__ = [name for name in dir() if not name.startswith("_")]
