"""Capacity planning and simulation for an electric ride-hailing fleet."""

from .model import (CapacityPlan, DerivedQuantities, SystemParams,
                    capacity_plan, derive_quantities, solve_d)

__all__ = [
    "SystemParams",
    "DerivedQuantities",
    "CapacityPlan",
    "derive_quantities",
    "capacity_plan",
    "solve_d",
]

__version__ = "0.1.0"
