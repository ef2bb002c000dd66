from __future__ import annotations

import logging
import math
import os
from fractions import Fraction
from typing import Any, Iterable

import numpy as np
import psutil

from .fock_core import Scalar

logger = logging.getLogger(__name__)

FLOAT_DIGITS = 15


def format_float(value: float) -> str:
	if math.isnan(value):
		return "nan"
	if math.isinf(value):
		return "inf" if value > 0 else "-inf"
	return f"{value:.{FLOAT_DIGITS}g}"


def format_fraction(value: Fraction) -> str:
	# always p/q, so an exact 1 prints as 1/1
	return f"{value.numerator}/{value.denominator}"


def format_cell(value: Any) -> str:
	if isinstance(value, Scalar):
		return format_fraction(value.exact) if value.is_exact else format_float(value.to_float())
	if isinstance(value, Fraction):
		return format_fraction(value)
	if isinstance(value, (bool, np.bool_)):
		return "true" if value else "false"
	if isinstance(value, (int, np.integer)):
		return str(int(value))
	if isinstance(value, (float, np.floating)):
		return format_float(float(value))
	if isinstance(value, (set, frozenset)):
		return format_int_set(value)
	return str(value)


def format_int_set(values: Iterable[int]) -> str:
	return "{" + ",".join(str(v) for v in sorted(values)) + "}"


def format_duration(seconds: float) -> str:
	seconds = max(0.0, float(seconds))
	if seconds < 60:
		return f"{seconds:.2f}s"
	mins, secs = divmod(int(seconds), 60)
	hours, mins = divmod(mins, 60)
	if hours:
		return f"{hours}h {mins}m {secs}s"
	return f"{mins}m {secs}s"


# Process priority; "normal" leaves whatever niceness the process was started with

_PRIORITY_CLASSES = {
	"low": ("BELOW_NORMAL_PRIORITY_CLASS", 10),
	"high": ("HIGH_PRIORITY_CLASS", -10),
}


def set_process_priority(level: str) -> bool:
	"""Renice this process for ``low`` or ``high``; returns whether anything changed."""
	if level not in _PRIORITY_CLASSES:
		return False
	name, niceness = _PRIORITY_CLASSES[level]
	try:
		psutil.Process(os.getpid()).nice(getattr(psutil, name, niceness))
	except (psutil.Error, OSError) as e:
		logger.debug("could not set %s priority: %s", level, e)
		return False
	return True
