from gescc.dispatch.coordinate import (CallRecord, CoordinationResult, Method, SystemSlotState,
                                       classify, coordinate)
from gescc.dispatch.stages import (RedispatchResult, discomfort_path, greedy_discharge, hold_full,
                                   peak_shave, pre_dispatch, re_dispatch, recovery_step)
from gescc.dispatch.units import DispatchSchedule, GesUnit, Regime

__all__ = [
    "CallRecord", "CoordinationResult", "DispatchSchedule", "GesUnit", "Method", "RedispatchResult",
    "Regime", "SystemSlotState", "classify", "coordinate", "discomfort_path", "greedy_discharge",
    "hold_full", "peak_shave", "pre_dispatch", "re_dispatch", "recovery_step",
]
