"""Dynamic allocation of servers with setup delay.

Submodules: :mod:`core` (types and policies), :mod:`analytic` (closed forms),
:mod:`chains` (truncated-chain oracles), :mod:`smdp` (optimal policies),
:mod:`routing` (two-site model), :mod:`sim` (discrete-event simulator),
:mod:`experiments` (figure presets) and :mod:`cli`.
"""

from .core import (DETERMINISTIC, AlwaysOn, Batching, ConvergenceError, DualBothDynamic, DualOneAlways, HoldOn,
                   InstabilityError, Metrics, ParameterError, ProactiveUnlimited, ReactiveUnlimited,
                   ServerPerRequest, SmdpTable, StateDepRates, SystemParams, objective, stability_limit)

__all__ = ["DETERMINISTIC", "AlwaysOn", "Batching", "ConvergenceError", "DualBothDynamic", "DualOneAlways", "HoldOn",
           "InstabilityError", "Metrics", "ParameterError", "ProactiveUnlimited", "ReactiveUnlimited",
           "ServerPerRequest", "SmdpTable", "StateDepRates", "SystemParams", "objective", "stability_limit"]

__version__ = "0.1.0"
