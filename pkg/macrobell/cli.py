from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .bell import (
	ASYMPTOTIC_V_MAX,
	AngleSettings,
	chsh_table,
	distinguishability_table,
	v_max_asymptote,
	v_max_table,
	violation_frontier,
)
from .branding import APP_NAME, APP_VERSION, DESCRIPTION
from .errors import DomainError, EmptySupportError, MacroBellError
from .loss import bs_convergence_report, bs_preselected_chsh, lossy_table, threshold_mixture_check
from .macro_states import DEFAULT_TRUNCATION_EPSILON, GainSpec, default_threshold, mean_total_photons, photon_spectrum
from .report import ResultTable, SweepReport
from .utils import format_duration, format_float, format_int_set, set_process_priority
from .verify import GROUPS, VerifyReport, verify

console = Console(stderr=True)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_COMPUTATION = 1

COMMANDS = ("vmax", "dist", "chsh", "spectrum", "loss", "frontier", "asymptote", "bs-preselect", "bs-chsh", "mixture", "verify")


@dataclass(frozen=True)
class RunConfig:
	command: str
	mode: str = "auto"
	fmt: str = "csv"
	output: Optional[Path] = None
	workers: Optional[int] = None
	priority: str = "normal"
	verbose: bool = False
	params: Dict[str, Any] = field(default_factory=dict)

	@classmethod
	def from_args(cls, args: argparse.Namespace) -> RunConfig:
		common = {"cmd", "mode", "format", "output", "workers", "priority", "verbose"}
		params = {k: v for k, v in vars(args).items() if k not in common}
		return cls(
			command=args.cmd,
			mode=args.mode,
			fmt=args.format,
			output=args.output,
			workers=args.workers,
			priority=args.priority,
			verbose=args.verbose,
			params=params,
		)

	def validate(self) -> None:
		p = self.params
		if self.command not in COMMANDS:
			raise DomainError(f"unknown command {self.command!r}")
		if self.workers is not None and self.workers < 1:
			raise DomainError("--workers must be >= 1")
		if "gain" in p and not (math.isfinite(p["gain"]) and p["gain"] >= 0):
			raise DomainError(f"--gain must be finite and >= 0, got {p['gain']}")
		if "t2" in p and not 0 < p["t2"] <= 1:
			raise DomainError(f"--t2 must lie in (0, 1], got {p['t2']}")
		if "epsilon" in p and not 0 < p["epsilon"] < 1:
			raise DomainError(f"--epsilon must lie in (0, 1), got {p['epsilon']}")
		if self.command in ("bs-preselect", "bs-chsh") and p["k_min"] > p["k_max"]:
			raise DomainError(f"--k-min {p['k_min']} exceeds --k-max {p['k_max']}")
		if self.command == "asymptote" and p["n"] < 1:
			raise DomainError("--n must be >= 1")
		if self.command == "mixture" and p["m"] > 2 * p["n"] + 1:
			raise DomainError(f"--m {p['m']} exceeds 2*--n+1 = {2 * p['n'] + 1}")
		if self.command == "dist" and p.get("n_sigma") is not None and p["n_sigma"] < 0:
			raise DomainError("--n-sigma must be >= 0")


def _nonnegative_int(text: str) -> int:
	try:
		value = int(text)
	except ValueError:
		raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
	if value < 0:
		raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
	return value


def build_parser() -> argparse.ArgumentParser:
	common = argparse.ArgumentParser(add_help=False)
	common.add_argument("--mode", choices=["exact", "log", "auto"], default="auto", help="Numeric mode (auto: exact for N <= 64, log beyond)")
	common.add_argument("--format", choices=["csv", "json"], default="csv")
	common.add_argument("--output", type=Path, default=None, help="Write the table here instead of stdout")
	common.add_argument("--workers", type=int, default=None, help="Thread pool size for sweeps")
	common.add_argument("--priority", choices=["low", "normal", "high"], default="normal", help="CPU priority of this process")
	common.add_argument("--verbose", action="store_true")

	parser = argparse.ArgumentParser(prog=APP_NAME, description=DESCRIPTION)
	parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
	sub = parser.add_subparsers(dest="cmd", required=True)

	p = sub.add_parser("vmax", parents=[common], help="Maximal distinguishability per cut N")
	p.add_argument("--max-n", type=_nonnegative_int, default=40)

	p = sub.add_parser("dist", parents=[common], help="Distinguishability v(N, N_sigma)")
	p.add_argument("--max-n", type=_nonnegative_int, default=10)
	p.add_argument("--n-sigma", type=_nonnegative_int, default=None, help="Single threshold (default: all 0..2N+1)")

	p = sub.add_parser("chsh", parents=[common], help="CHSH value per cut at the optimal threshold; angles in units of pi")
	p.add_argument("--max-n", type=_nonnegative_int, default=10)
	p.add_argument("--phi-a", type=float, default=0.0, help="Angle a in units of pi (0.125 means pi/8)")
	p.add_argument("--phi-a-prime", type=float, default=0.25, help="Angle a' in units of pi")
	p.add_argument("--phi-b", type=float, default=0.125, help="Angle b in units of pi")
	p.add_argument("--phi-b-prime", type=float, default=-0.125, help="Angle b' in units of pi")

	p = sub.add_parser("spectrum", parents=[common], help="Cut weights after theoretical preselection")
	p.add_argument("--gain", type=float, default=1.0)
	p.add_argument("--n-th", type=_nonnegative_int, default=0)
	p.add_argument("--epsilon", type=float, default=DEFAULT_TRUNCATION_EPSILON, help="Truncation tail mass")

	p = sub.add_parser("loss", parents=[common], help="Distinguishability after M photons are lost")
	p.add_argument("--max-n", type=_nonnegative_int, default=4)
	p.add_argument("--max-m", type=_nonnegative_int, default=2)

	p = sub.add_parser("frontier", parents=[common], help="Cuts whose best CHSH value beats the local bound")
	p.add_argument("--max-n", type=_nonnegative_int, default=10)

	p = sub.add_parser("asymptote", parents=[common], help="v_max at large N against 2/pi")
	p.add_argument("--n", type=_nonnegative_int, default=1_000_000)

	p = sub.add_parser("bs-preselect", parents=[common], help="Beamsplitter preselection vs theoretical preselection")
	p.add_argument("--gain", type=float, default=1.5)
	p.add_argument("--t2", type=float, default=0.5)
	p.add_argument("--k-min", type=_nonnegative_int, default=0)
	p.add_argument("--k-max", type=_nonnegative_int, default=30)

	p = sub.add_parser("bs-chsh", parents=[common], help="CHSH value of the beamsplitter-preselected state per K_th")
	p.add_argument("--gain", type=float, default=0.5)
	p.add_argument("--t2", type=float, default=0.5)
	p.add_argument("--k-min", type=_nonnegative_int, default=0)
	p.add_argument("--k-max", type=_nonnegative_int, default=6)
	p.add_argument("--n-sigma", type=_nonnegative_int, default=0)

	p = sub.add_parser("mixture", parents=[common], help="Fit the lossy observable as a mix of threshold observables")
	p.add_argument("--n", type=_nonnegative_int, default=2)
	p.add_argument("--m", type=_nonnegative_int, default=1)
	p.add_argument("--n-sigma", type=_nonnegative_int, default=1)

	p = sub.add_parser("verify", parents=[common], help="Cross-check analytic results against the dense oracle")
	p.add_argument("--group", action="append", choices=list(GROUPS), default=None, help="Repeatable; default runs every group")

	return parser


def _configure_logging(verbose: bool) -> None:
	logging.basicConfig(
		level=logging.DEBUG if verbose else logging.WARNING,
		format="%(message)s",
		handlers=[RichHandler(console=console, show_path=False)],
		force=True,
	)


def _cmd_vmax(cfg: RunConfig, sweep: SweepReport) -> ResultTable:
	table = ResultTable(["N", "v_max"])
	for N, v in v_max_table(cfg.params["max_n"], cfg.mode, max_workers=cfg.workers, progress_cb=sweep):
		table.add_row(N, v)
	return table


def _cmd_dist(cfg: RunConfig, sweep: SweepReport) -> ResultTable:
	table = ResultTable(["N", "N_sigma", "v"])
	for row in distinguishability_table(cfg.params["max_n"], cfg.params["n_sigma"], cfg.mode, max_workers=cfg.workers, progress_cb=sweep):
		table.add_row(*row)
	return table


def _cmd_chsh(cfg: RunConfig, sweep: SweepReport) -> ResultTable:
	p = cfg.params
	settings = AngleSettings.from_pi_units(p["phi_a"], p["phi_a_prime"], p["phi_b"], p["phi_b_prime"])
	table = ResultTable(["N", "chsh_opt"])
	for N, value in chsh_table(p["max_n"], settings, cfg.mode, max_workers=cfg.workers, progress_cb=sweep):
		table.add_row(N, value)
	return table


def _cmd_spectrum(cfg: RunConfig, sweep: SweepReport) -> ResultTable:
	p = cfg.params
	spectrum = photon_spectrum(GainSpec(p["gain"], p["epsilon"]), p["n_th"])
	table = ResultTable(["N", "weight"])
	for N, w in spectrum:
		table.add_row(N, w)
	mean = mean_total_photons(spectrum)
	console.print(
		f"[green]g={p['gain']}[/] N_th={p['n_th']}: {len(spectrum)} cuts up to N={spectrum.truncation_n_max}, "
		f"mean photons {format_float(mean)}, acceptance {format_float(spectrum.acceptance)}, "
		f"suggested N_sigma at N={spectrum.truncation_n_max}: "
		f"{default_threshold(spectrum, spectrum.truncation_n_max)}"
	)
	return table


def _cmd_loss(cfg: RunConfig, sweep: SweepReport) -> ResultTable:
	table = ResultTable(["N", "M", "N_sigma", "v_bar"])
	for row in lossy_table(cfg.params["max_n"], cfg.params["max_m"], cfg.mode, max_workers=cfg.workers, progress_cb=sweep):
		table.add_row(*row)
	return table


def _cmd_frontier(cfg: RunConfig, sweep: SweepReport) -> ResultTable:
	frontier = violation_frontier(cfg.params["max_n"], cfg.mode)
	table = ResultTable(["frontier"])
	table.add_row(format_int_set(frontier))
	if not frontier:
		console.print("[yellow]No cut violates the CHSH inequality in range.[/]")
	return table


def _cmd_asymptote(cfg: RunConfig, sweep: SweepReport) -> ResultTable:
	n = cfg.params["n"]
	v = v_max_asymptote(n)
	table = ResultTable(["N", "v_max", "abs_diff"])
	table.add_row(n, v, abs(v - ASYMPTOTIC_V_MAX))
	return table


def _cmd_bs_preselect(cfg: RunConfig, sweep: SweepReport) -> ResultTable:
	p = cfg.params
	rows = bs_convergence_report(GainSpec(p["gain"]), p["t2"], range(p["k_min"], p["k_max"] + 1), max_workers=cfg.workers, progress_cb=sweep)
	table = ResultTable(["K_th", "best_N_th", "tv_distance"])
	for row in rows:
		table.add_row(row.k_th, row.best_n_th, row.tv_distance)
	if not rows:
		console.print("[yellow]Every K_th in range left an empty preselection.[/]")
	return table


def _cmd_bs_chsh(cfg: RunConfig, sweep: SweepReport) -> ResultTable:
	p = cfg.params
	gain = GainSpec(p["gain"])
	table = ResultTable(["K_th", "chsh", "acceptance", "violating_M"])
	for k_th in range(p["k_min"], p["k_max"] + 1):
		try:
			result = bs_preselected_chsh(gain, p["t2"], k_th, p["n_sigma"], mode=cfg.mode, max_workers=cfg.workers, progress_cb=sweep)
		except EmptySupportError as e:
			console.print(f"[yellow]K_th={k_th} skipped: {e}[/]")
			continue
		table.add_row(k_th, result.value, result.acceptance, set(result.violating_counts()))
		for M in result.violating_counts():
			if not result.violating_cuts(M):
				console.print(f"[red]K_th={k_th}: M={M} violates with no violating cut[/]")
	return table


def _cmd_mixture(cfg: RunConfig, sweep: SweepReport) -> ResultTable:
	p = cfg.params
	fit = threshold_mixture_check(p["n"], p["m"], p["n_sigma"])
	table = ResultTable(["N_sigma_prime", "weight"])
	for s, w in fit.weights.items():
		table.add_row(s, w)
	colour = "green" if fit.exact and fit.within_budget else "yellow"
	console.print(
		f"[{colour}]residual {format_float(fit.residual)}[/] (unrestricted {format_float(fit.unrestricted_residual)}), "
		f"weight sum {format_float(fit.weight_sum)}{'' if fit.within_budget else ' exceeds 1'}"
	)
	return table


def _print_verify(report: VerifyReport) -> None:
	table = Table(title="verify")
	table.add_column("group")
	table.add_column("checked", justify="right")
	table.add_column("status")
	table.add_column("elapsed", justify="right")
	table.add_column("first failure")
	for g in report.groups:
		status = "[green]pass[/]" if g.ok else f"[red]FAIL ({g.failed})[/]"
		failure = "" if g.ok else f"{g.first_failure!r} {g.detail}"
		table.add_row(g.name, str(g.checked), status, format_duration(g.elapsed), failure)
	console.print(table)


def _cmd_verify(cfg: RunConfig, sweep: SweepReport) -> Optional[ResultTable]:
	report = verify(cfg.params.get("group"))
	_print_verify(report)
	if not report.ok:
		raise MacroBellError(f"verification failed in: {', '.join(report.failed_groups())}")
	console.print("[green]All groups passed.[/]")
	return None


HANDLERS: Dict[str, Callable[[RunConfig, SweepReport], Optional[ResultTable]]] = {
	"vmax": _cmd_vmax,
	"dist": _cmd_dist,
	"chsh": _cmd_chsh,
	"spectrum": _cmd_spectrum,
	"loss": _cmd_loss,
	"frontier": _cmd_frontier,
	"asymptote": _cmd_asymptote,
	"bs-preselect": _cmd_bs_preselect,
	"bs-chsh": _cmd_bs_chsh,
	"mixture": _cmd_mixture,
	"verify": _cmd_verify,
}


def run(cfg: RunConfig) -> int:
	set_process_priority(cfg.priority)
	sweep = SweepReport()
	try:
		table = HANDLERS[cfg.command](cfg, sweep)
	except MacroBellError as e:
		console.print(f"[red]{cfg.command}: {e}[/]")
		return EXIT_COMPUTATION
	for phase, counts in sweep.summarize().items():
		logger.debug("%s: %d point(s) computed, %d error(s)", phase, counts["completed"], counts["errors"])
	if table is None:
		return EXIT_OK
	if cfg.output is not None:
		table.export(cfg.output, cfg.fmt)
		console.print(f"[green]Wrote {len(table.rows)} row(s) to {cfg.output}[/]")
	else:
		sys.stdout.write(table.render(cfg.fmt))
		sys.stdout.flush()
	return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> None:
	parser = build_parser()
	args = parser.parse_args(argv)
	_configure_logging(args.verbose)
	cfg = RunConfig.from_args(args)
	try:
		cfg.validate()
	except DomainError as e:
		parser.error(str(e))
	raise SystemExit(run(cfg))


if __name__ == "__main__":
	main()
