"""Numeric kernels shared by every other module.

Two number representations live side by side:

* exact rationals (``fractions.Fraction`` over Python's arbitrary-precision
  integers), used for every identity that must hold bit-for-bit;
* signed log-magnitudes ``(sign, ln|x|)``, used once factorials of the cut
  index outgrow double precision.

``Scalar`` wraps both behind one arithmetic interface; ``resolve_mode`` picks
one per computation.
"""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import total_ordering
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from scipy.special import gammaln

from .errors import DomainError

logger = logging.getLogger(__name__)

# auto mode stays exact up to this cut index
EXACT_MODE_LIMIT = 64
# a signed sum smaller than this fraction of its largest term is flagged
CANCELLATION_RATIO = 1e-6
# log-factorial table is never grown past this; larger n go straight to gammaln
LOG_TABLE_CAP = 1 << 20
# exact factorials above this are computed on request and not memoized
EXACT_CACHE_LIMIT = 1024
# central binomials switch from log-factorials to their asymptotic series here
CENTRAL_SERIES_FROM = 512

_NEG_INF = float("-inf")
_EXP_OVERFLOW = 709.78
# integers are cut to this many leading bits before a float log
_LOG_MANTISSA_BITS = 64


class NumericMode(Enum):
	EXACT = "exact"
	LOG = "log"


ModeLike = Union[NumericMode, str, None]


def resolve_mode(mode: ModeLike, n: int) -> NumericMode:
	"""Return the numeric mode for a computation at cut index ``n``.

	``None`` and ``"auto"`` select exact arithmetic up to ``EXACT_MODE_LIMIT``
	and log-space beyond it.
	"""
	if mode is None or mode == "auto":
		return NumericMode.EXACT if n <= EXACT_MODE_LIMIT else NumericMode.LOG
	if isinstance(mode, NumericMode):
		return mode
	try:
		return NumericMode(mode)
	except ValueError:
		raise DomainError(f"Unknown numeric mode: {mode!r}") from None


def check_nonnegative(name: str, value: int) -> int:
	if isinstance(value, bool) or int(value) != value:
		raise DomainError(f"{name} must be an integer, got {value!r}")
	value = int(value)
	if value < 0:
		raise DomainError(f"{name} must be >= 0, got {value}")
	return value


def _log_ratio(q: Fraction) -> float:
	"""ln(q) for q > 0 without cancelling the logs of two huge integers."""
	n, d = q.numerator, q.denominator
	sn = max(n.bit_length() - _LOG_MANTISSA_BITS, 0)
	sd = max(d.bit_length() - _LOG_MANTISSA_BITS, 0)
	return math.log((n >> sn) / (d >> sd)) + (sn - sd) * math.log(2.0)


@total_ordering
@dataclass(frozen=True, eq=False)
class Scalar:
	"""Real number held either exactly or as a signed log-magnitude.

	In ``EXACT`` mode ``exact`` carries the value and ``sign`` mirrors it.
	In ``LOG`` mode the value is ``sign * exp(log_abs)``; ``sign == 0`` iff the
	value is zero. ``cancelled`` marks log-space results that lost most of
	their significant digits to cancellation and should be recomputed exactly.
	"""

	mode: NumericMode
	exact: Optional[Fraction] = None
	sign: int = 0
	log_abs: float = _NEG_INF
	cancelled: bool = False

	@classmethod
	def from_fraction(cls, value: Union[int, Fraction]) -> Scalar:
		value = Fraction(value)
		return cls(NumericMode.EXACT, exact=value, sign=(value > 0) - (value < 0))

	@classmethod
	def from_log(cls, sign: int, log_abs: float, *, cancelled: bool = False) -> Scalar:
		if sign == 0 or log_abs == _NEG_INF:
			return cls(NumericMode.LOG, sign=0, cancelled=cancelled)
		if math.isnan(log_abs):
			raise DomainError("log-magnitude is NaN")
		return cls(NumericMode.LOG, sign=1 if sign > 0 else -1, log_abs=float(log_abs), cancelled=cancelled)

	@classmethod
	def from_float(cls, value: float) -> Scalar:
		if value == 0:
			return cls.from_log(0, _NEG_INF)
		return cls.from_log(1 if value > 0 else -1, math.log(abs(value)))

	@classmethod
	def zero(cls, mode: NumericMode) -> Scalar:
		return cls.from_fraction(0) if mode is NumericMode.EXACT else cls.from_log(0, _NEG_INF)

	@classmethod
	def one(cls, mode: NumericMode) -> Scalar:
		return cls.from_fraction(1) if mode is NumericMode.EXACT else cls.from_log(1, 0.0)

	@property
	def is_exact(self) -> bool:
		return self.mode is NumericMode.EXACT

	@property
	def is_zero(self) -> bool:
		return self.sign == 0

	def to_log(self) -> Scalar:
		if self.mode is NumericMode.LOG:
			return self
		if self.sign == 0:
			return Scalar.from_log(0, _NEG_INF)
		return Scalar.from_log(self.sign, _log_ratio(abs(self.exact)))

	def to_float(self) -> float:
		if self.mode is NumericMode.EXACT:
			return self.exact.numerator / self.exact.denominator
		if self.sign == 0:
			return 0.0
		if self.log_abs > _EXP_OVERFLOW:
			return self.sign * math.inf
		return self.sign * math.exp(self.log_abs)

	def to_fraction(self) -> Fraction:
		if self.mode is not NumericMode.EXACT:
			raise DomainError("log-space scalar has no exact value")
		return self.exact

	def ln(self) -> float:
		if self.sign <= 0:
			raise DomainError("logarithm of a non-positive scalar")
		return self.to_log().log_abs

	def sqrt(self) -> Scalar:
		if self.sign < 0:
			raise DomainError("square root of a negative scalar")
		log_self = self.to_log()
		return Scalar.from_log(log_self.sign, log_self.log_abs / 2.0, cancelled=self.cancelled)

	@staticmethod
	def _coerce(other: object) -> Optional[Scalar]:
		if isinstance(other, Scalar):
			return other
		if isinstance(other, bool):
			return None
		if isinstance(other, (int, Fraction)):
			return Scalar.from_fraction(other)
		if isinstance(other, float):
			return Scalar.from_float(other)
		return None

	def __add__(self, other: object) -> Scalar:
		rhs = self._coerce(other)
		if rhs is None:
			return NotImplemented
		if self.is_exact and rhs.is_exact:
			return Scalar.from_fraction(self.exact + rhs.exact)
		return signed_log_sum([self, rhs])

	__radd__ = __add__

	def __neg__(self) -> Scalar:
		if self.is_exact:
			return Scalar.from_fraction(-self.exact)
		return Scalar.from_log(-self.sign, self.log_abs, cancelled=self.cancelled)

	def __sub__(self, other: object) -> Scalar:
		rhs = self._coerce(other)
		if rhs is None:
			return NotImplemented
		return self + (-rhs)

	def __rsub__(self, other: object) -> Scalar:
		lhs = self._coerce(other)
		if lhs is None:
			return NotImplemented
		return lhs - self

	def __mul__(self, other: object) -> Scalar:
		rhs = self._coerce(other)
		if rhs is None:
			return NotImplemented
		if self.is_exact and rhs.is_exact:
			return Scalar.from_fraction(self.exact * rhs.exact)
		a, b = self.to_log(), rhs.to_log()
		return Scalar.from_log(a.sign * b.sign, a.log_abs + b.log_abs, cancelled=a.cancelled or b.cancelled)

	__rmul__ = __mul__

	def __truediv__(self, other: object) -> Scalar:
		rhs = self._coerce(other)
		if rhs is None:
			return NotImplemented
		if rhs.is_zero:
			raise ZeroDivisionError("Scalar division by zero")
		if self.is_exact and rhs.is_exact:
			return Scalar.from_fraction(self.exact / rhs.exact)
		a, b = self.to_log(), rhs.to_log()
		return Scalar.from_log(a.sign * b.sign, a.log_abs - b.log_abs, cancelled=a.cancelled or b.cancelled)

	def __rtruediv__(self, other: object) -> Scalar:
		lhs = self._coerce(other)
		if lhs is None:
			return NotImplemented
		return lhs / self

	def __abs__(self) -> Scalar:
		return -self if self.sign < 0 else self

	def __eq__(self, other: object) -> bool:
		rhs = self._coerce(other)
		if rhs is None:
			return NotImplemented
		if self.is_exact and rhs.is_exact:
			return self.exact == rhs.exact
		a, b = self.to_log(), rhs.to_log()
		return a.sign == b.sign and (a.sign == 0 or a.log_abs == b.log_abs)

	def __lt__(self, other: object) -> bool:
		rhs = self._coerce(other)
		if rhs is None:
			return NotImplemented
		if self.is_exact and rhs.is_exact:
			return self.exact < rhs.exact
		a, b = self.to_log(), rhs.to_log()
		if a.sign != b.sign:
			return a.sign < b.sign
		if a.sign == 0:
			return False
		return a.log_abs < b.log_abs if a.sign > 0 else a.log_abs > b.log_abs

	def __hash__(self) -> int:
		return hash(self.exact) if self.is_exact else hash(self.to_float())

	def __float__(self) -> float:
		return self.to_float()

	def __repr__(self) -> str:
		if self.is_exact:
			return f"Scalar({self.exact.numerator}/{self.exact.denominator})"
		flag = ", cancelled" if self.cancelled else ""
		return f"Scalar(log, sign={self.sign:+d}, ln|x|={self.log_abs!r}{flag})"


def log_sum_exp_signed(log_abs: np.ndarray, signs: np.ndarray, *, cancelled: bool = False) -> Scalar:
	"""Signed log-sum-exp over parallel arrays of magnitudes and signs.

	The largest magnitude is factored out, the scaled terms are added with
	``math.fsum`` (exactly rounded, hence order independent), and the result
	is flagged ``cancelled`` when it falls below ``CANCELLATION_RATIO`` of the
	largest term.
	"""
	log_abs = np.asarray(log_abs, dtype=float)
	signs = np.asarray(signs)
	keep = (signs != 0) & np.isfinite(log_abs)
	log_abs, signs = log_abs[keep], signs[keep]
	if log_abs.size == 0:
		return Scalar.from_log(0, _NEG_INF, cancelled=cancelled)
	peak = float(np.max(log_abs))
	total = math.fsum(np.where(signs > 0, 1.0, -1.0) * np.exp(log_abs - peak))
	if abs(total) < CANCELLATION_RATIO:
		logger.debug("signed log sum cancelled to %.3e of its peak term", abs(total))
		cancelled = True
	if total == 0.0:
		return Scalar.from_log(0, _NEG_INF, cancelled=cancelled)
	return Scalar.from_log(1 if total > 0 else -1, peak + math.log(abs(total)), cancelled=cancelled)


def signed_log_sum(terms: Iterable[Scalar]) -> Scalar:
	"""Sum scalars in log space; an empty sequence sums to exact zero."""
	log_abs: List[float] = []
	signs: List[int] = []
	cancelled = False
	for term in terms:
		term = term.to_log()
		cancelled = cancelled or term.cancelled
		if term.sign:
			log_abs.append(term.log_abs)
			signs.append(term.sign)
	if not signs:
		return Scalar.from_log(0, _NEG_INF, cancelled=cancelled)
	return log_sum_exp_signed(np.array(log_abs), np.array(signs), cancelled=cancelled)


def scalar_sum(terms: Sequence[Scalar], mode: NumericMode) -> Scalar:
	if mode is NumericMode.EXACT:
		return Scalar.from_fraction(sum((t.to_fraction() for t in terms), Fraction(0)))
	return signed_log_sum(terms)


class CombinatoricsTable:
	"""Memoized factorials: float log-factorials and exact integer factorials.

	Log-factorials come from ``scipy.special.gammaln`` evaluated once over
	``0..max_n`` (the table doubles when a larger ``n`` is requested). Exact
	factorials are built by running product. Growth holds ``_lock`` so the
	table can be shared between sweep workers.
	"""

	def __init__(self, max_n: int = 256) -> None:
		self._lock = threading.Lock()
		self.max_n = -1
		self.log_factorials = np.zeros(0)
		self._factorials: List[int] = [1]
		self.ensure(max_n)

	def ensure(self, n: int) -> None:
		if n <= self.max_n:
			return
		with self._lock:
			if n <= self.max_n:
				return
			size = min(max(n, 2 * self.max_n + 1), max(n, LOG_TABLE_CAP))
			table = gammaln(np.arange(size + 1, dtype=float) + 1.0)
			table[:2] = 0.0
			self.log_factorials = table
			self.max_n = size
			logger.debug("log-factorial table grown to n=%d", size)

	def log_factorial(self, n: int) -> float:
		n = check_nonnegative("n", n)
		if n > LOG_TABLE_CAP:
			return float(gammaln(n + 1.0))
		self.ensure(n)
		return float(self.log_factorials[n])

	def log_factorial_array(self, ns: np.ndarray) -> np.ndarray:
		ns = np.asarray(ns, dtype=np.int64)
		if ns.size == 0:
			return np.zeros(0)
		if ns.min() < 0:
			raise DomainError("log-factorial of a negative integer")
		top = int(ns.max())
		if top > LOG_TABLE_CAP:
			return gammaln(ns.astype(float) + 1.0)
		self.ensure(top)
		return self.log_factorials[ns]

	def factorial(self, n: int) -> int:
		n = check_nonnegative("n", n)
		if n > EXACT_CACHE_LIMIT:
			return math.factorial(n)
		facts = self._factorials
		if n >= len(facts):
			with self._lock:
				while len(facts) <= n:
					facts.append(facts[-1] * len(facts))
		return facts[n]

	def binomial(self, N: int, k: int) -> int:
		N = check_nonnegative("N", N)
		if isinstance(k, bool) or int(k) != k or not 0 <= k <= N:
			raise DomainError(f"binomial index k={k!r} outside [0, {N}]")
		k = int(k)
		if N > EXACT_CACHE_LIMIT:
			return math.comb(N, k)
		return self.factorial(N) // (self.factorial(k) * self.factorial(N - k))

	def log_binomial(self, N: int, k: int) -> float:
		if not 0 <= k <= N:
			raise DomainError(f"binomial index k={k!r} outside [0, {N}]")
		return self.log_factorial(N) - self.log_factorial(k) - self.log_factorial(N - k)

	def log_central(self, N: int) -> float:
		"""ln(C(N, N//2) 2^-N).

		An odd N shares the value of N + 1. Past ``CENTRAL_SERIES_FROM`` the
		asymptotic series in h = ceil(N/2) replaces the log-factorial
		difference, which loses absolute precision as ln(N!) grows.
		"""
		N = check_nonnegative("N", N)
		h = (N + 1) // 2
		if h < CENTRAL_SERIES_FROM:
			return self.log_binomial(2 * h, h) - 2 * h * math.log(2.0)
		inv = 1.0 / h
		inv2 = inv * inv
		series = inv * (-1.0 / 8.0 + inv2 * (1.0 / 192.0 + inv2 * (-1.0 / 640.0 + inv2 * 17.0 / 14336.0)))
		return -0.5 * math.log(math.pi * h) + series


DEFAULT_TABLE = CombinatoricsTable()


def log_factorial(n: int) -> Scalar:
	"""ln(n!) as a positive log-space scalar (log-gamma, memoized)."""
	return Scalar.from_log(1, DEFAULT_TABLE.log_factorial(n))


def factorial_exact(n: int) -> int:
	return DEFAULT_TABLE.factorial(n)


def binomial_exact(N: int, k: int) -> int:
	return DEFAULT_TABLE.binomial(N, k)
