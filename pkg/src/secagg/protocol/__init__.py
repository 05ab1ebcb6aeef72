"""Protocol layer: deployment config, message codecs, round engine."""

from .config import Mechanism, VariantConfig, VARIANT_NAMES, VARIANT_TABLE
from .engine import (
    AvgResult,
    ComputeMeter,
    PartyRuntime,
    Phase,
    RoundResult,
    RoundState,
    Session,
    SessionOptions,
    run_heterogeneous,
    run_variant1,
    run_variant2,
    run_variant3,
    run_variant4,
    run_variant5,
    run_variant6,
    setup,
)

__all__ = [
    "Mechanism", "VariantConfig", "VARIANT_NAMES", "VARIANT_TABLE",
    "AvgResult", "ComputeMeter", "PartyRuntime", "Phase", "RoundResult",
    "RoundState", "Session", "SessionOptions", "setup",
    "run_variant1", "run_variant2", "run_variant3", "run_variant4",
    "run_variant5", "run_variant6", "run_heterogeneous",
]
