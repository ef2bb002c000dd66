from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[Dict[str, Any]], None]

K = TypeVar("K")
R = TypeVar("R")


def default_workers() -> int:
	try:
		return max(2, min(8, os.cpu_count() or 2))
	except Exception:
		return 2


def run_grid(
	fn: Callable[[K], R],
	keys: Iterable[K],
	*,
	phase: str = "sweep",
	max_workers: Optional[int] = None,
	progress_cb: Optional[ProgressCallback] = None,
	show_progress: Optional[bool] = None,
) -> List[Tuple[K, R]]:
	"""Evaluate ``fn`` over a grid of keys on a thread pool.

	Results come back sorted by key whatever order the workers finish in. If
	any point fails, the error of the smallest failing key is re-raised once
	the pool has drained. The progress bar shows by default when ``progress_cb`` is given.
	"""
	ordered = sorted(set(keys))
	if progress_cb:
		progress_cb({"phase": phase, "event": "start", "total": len(ordered)})
	if not ordered:
		if progress_cb:
			progress_cb({"phase": phase, "event": "end"})
		return []

	if max_workers is None:
		max_workers = default_workers()
	if show_progress is None:
		show_progress = progress_cb is not None

	results: Dict[K, R] = {}
	errors: List[Tuple[K, Exception]] = []
	with ThreadPoolExecutor(max_workers=max_workers) as executor:
		futures = {executor.submit(fn, key): key for key in ordered}
		with tqdm(total=len(futures), desc=phase, unit="pt", disable=not show_progress, leave=False) as pbar:
			for fut in as_completed(futures):
				key = futures[fut]
				try:
					results[key] = fut.result()
					pbar.update(1)
					if progress_cb:
						progress_cb({"phase": phase, "event": "item_complete", "key": key, "completed": len(results), "total": len(ordered)})
				except Exception as e:
					errors.append((key, e))
					if progress_cb:
						progress_cb({"phase": phase, "event": "item_error", "key": key, "error": str(e)})

	if errors:
		key, exc = min(errors, key=lambda item: item[0])
		logger.debug("%s: %d grid point(s) failed, first at %r", phase, len(errors), key)
		raise exc
	if progress_cb:
		progress_cb({"phase": phase, "event": "end"})
	return [(key, results[key]) for key in ordered]
