"""Correctly aligned windows, link scheduling and orbit extraction for a normal-form diffusion benchmark."""

__version__ = "0.1.0"

from .windows import Rectangle, Window, box_window, window_from_json, window_to_json  # noqa: E402
from .alignment import AlignmentReport, check_block_alignment, check_linear_alignment  # noqa: E402
from .normal_form import ExtendedSystem, ModelParams, NormalFormSystem  # noqa: E402
from .scheduler import ScheduleInfeasible, build_chain, compute_orders  # noqa: E402

__all__ = ["__version__", "Rectangle", "Window", "box_window", "window_from_json", "window_to_json",
           "AlignmentReport", "check_block_alignment", "check_linear_alignment", "ExtendedSystem",
           "ModelParams", "NormalFormSystem", "ScheduleInfeasible", "build_chain", "compute_orders"]
