"""Cascading-failure search on DC grid models.

Simulates branch-outage cascades (relay trips, islanding, minimum-shed
re-dispatch), trains a small graph convolutional classifier to predict
which next outage causes load shedding, uses it together with outage
distribution factors to order an online cascade search, and explains each
positive prediction with layer-wise relevance scores.
"""

__version__ = "0.1.0"

from .network import (
    BASE_MVA,
    Branch,
    Bus,
    CaseFormatError,
    CaseValidationError,
    Generator,
    Network,
    OperatingState,
    build_network,
    parse_case,
    scale_loads,
    serialize_case,
)

__all__ = [
    "BASE_MVA",
    "Branch",
    "Bus",
    "CaseFormatError",
    "CaseValidationError",
    "Generator",
    "Network",
    "OperatingState",
    "build_network",
    "parse_case",
    "scale_loads",
    "serialize_case",
    "__version__",
]
