from __future__ import annotations


class MacroBellError(Exception):
	pass


class DomainError(MacroBellError, ValueError):
	"""Argument outside the domain of an operation."""


class EmptySupportError(MacroBellError):
	"""Preselection left nothing of the state to renormalize."""


class DimensionError(MacroBellError, ValueError):
	"""Dense oracle truncation too small or operands of mismatched size."""
