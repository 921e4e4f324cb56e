"""Main module to run package from CLI."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import analysis, settings
from .analysis import CompactBox
from .errors import DissipedError, NonFiniteStateError
from .export import RunPackageBuilder, plot_runs, resource_name, sweep_summary
from .observer import GainPolicy
from .scenarios import ScenarioBundle, load_scenario, save_scenario
from .simulation import SimConfig, Trajectory, integrate
from .validate import FAULTS, SUITES, run_validation

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_PARSE_ERROR = 2
EXIT_ASSUMPTION_FAILED = 3
EXIT_NON_FINITE_STATE = 4


def check_overriding_of_output(path: Path, *, override: bool = False) -> None:
    """Check if output file exists."""
    if path.exists() and not override:
        error_msg = f"Output '{path}' already exists. Use -f (force) to override it."
        raise FileExistsError(error_msg)


def positive_float(value: str) -> float:
    """Parse strictly positive float."""
    try:
        number = float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"'{value}' is not a number.") from exc
    if not number > 0:
        raise argparse.ArgumentTypeError(f"'{value}' must be positive.")
    return number


def alpha_list(value: str) -> list[float]:
    """Parse comma separated list of positive gains."""
    return [positive_float(item) for item in value.split(",") if item.strip()]


def _sim_config(bundle: ScenarioBundle, args: argparse.Namespace) -> SimConfig:
    return bundle.default_simconfig.replace(t_final=args.t_final, h=args.step, record_every=args.record_every)


def _adaptive_policy(bundle: ScenarioBundle) -> GainPolicy:
    if bundle.lyapunov is None:
        error_msg = f"Scenario '{bundle.name}' has no Lyapunov specification for the adaptive gain."
        raise ValueError(error_msg)
    return GainPolicy.adaptive(bundle.lyapunov)


def _gain(bundle: ScenarioBundle, args: argparse.Namespace) -> GainPolicy:
    if args.adaptive:
        return _adaptive_policy(bundle)
    if args.alpha is not None:
        return GainPolicy.constant(args.alpha)
    if bundle.gain_policy is not None:
        return bundle.gain_policy
    return GainPolicy.constant(bundle.default_alphas[0])


def _reference_run(bundle: ScenarioBundle, cfg: SimConfig) -> Trajectory:
    """Run state feedback u = u* + lambda(x): the observer starts on the plant state."""
    gain = GainPolicy.constant(max(bundle.default_alphas))
    return integrate(bundle.closed_loop(gain), bundle.reference_z0(), cfg, label="state feedback")


def _constant_input_run(bundle: ScenarioBundle, cfg: SimConfig, gain: GainPolicy) -> Trajectory:
    cls = bundle.closed_loop(gain, law=bundle.constant_input_law())
    return integrate(cls, bundle.z0, cfg, label="u = u*")


def _boxes(bundle: ScenarioBundle, args: argparse.Namespace) -> tuple[CompactBox | None, CompactBox | None]:
    n = bundle.shifted.n
    K1 = CompactBox.symmetric(args.k1_radius, n) if args.k1_radius is not None else bundle.K1
    K2 = CompactBox.symmetric(args.k2_radius, n) if args.k2_radius is not None else bundle.K2
    return K1, K2


def analyze_command(args: argparse.Namespace) -> int:
    """Run analyze command."""
    bundle = load_scenario(args.scenario)
    K1, K2 = _boxes(bundle, args)
    report = analysis.analyze(
        bundle.shifted,
        law=bundle.law,
        W=bundle.lyapunov,
        K1=K1,
        K2=K2,
        grid=args.grid,
        samples=args.samples,
    )
    report.notes[:0] = bundle.notes
    if report.observability.singular_inputs:
        u_star = float(bundle.equilibrium.u_star[0])
        physical = ", ".join(f"{candidate.u + u_star:.9g}" for candidate in report.observability.singular_inputs)
        report.notes.append(f"Singular inputs at physical u = {physical}.")
    print(report.format_table())  # noqa: T201
    print(json.dumps(report.to_dict(), indent=2))  # noqa: T201
    if not report.assumptions_hold:
        settings.logger.warning(f"Assumptions do not hold for scenario '{bundle.name}'.")
        return EXIT_ASSUMPTION_FAILED
    return EXIT_OK


def simulate_command(args: argparse.Namespace) -> int:
    """Run simulate command."""
    bundle = load_scenario(args.scenario)
    cfg = _sim_config(bundle, args)
    gain = _gain(bundle, args)
    out_dir = Path(args.out_dir)
    out = Path(args.out) if args.out else Path(f"{bundle.name}_{gain.label}.csv")
    check_overriding_of_output(out_dir / out, override=args.force)

    trajs = [integrate(bundle.closed_loop(gain), bundle.z0, cfg, label=gain.label)]
    if args.reference:
        trajs.append(_reference_run(bundle, cfg))
    if args.constant_input:
        trajs.append(_constant_input_run(bundle, cfg, gain))

    builder = RunPackageBuilder(f"{bundle.name}-simulation", out_dir)
    builder.add_trajectory(trajs[0], str(out))
    for traj in trajs[1:]:
        builder.add_trajectory(traj, f"{out.stem}_{resource_name(traj.label)}.csv")
    builder.save_package()
    if args.svg:
        plot_runs(trajs, bundle.output_transform, out_dir / args.svg, title=bundle.name)
    return EXIT_OK


def _sweep_member(task: tuple[str, float, dict]) -> Trajectory:
    """Simulate one sweep member (module level to be picklable)."""
    scenario, alpha, cfg = task
    bundle = load_scenario(scenario)
    settings.logger.debug(f"Sweep member alpha = {alpha:g}.")
    return integrate(bundle.closed_loop(GainPolicy.constant(alpha)), bundle.z0, SimConfig.from_dict(cfg))


def sweep_command(args: argparse.Namespace) -> int:
    """Run sweep command."""
    bundle = load_scenario(args.scenario)
    cfg = _sim_config(bundle, args)
    alphas = sorted(args.alphas or bundle.default_alphas)
    out_dir = Path(args.out_dir)
    out = Path(args.out) if args.out else Path(f"{bundle.name}_sweep.csv")
    check_overriding_of_output(out_dir / out, override=args.force)

    tasks = [(args.scenario, alpha, cfg.to_dict()) for alpha in alphas]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as executor:
            trajs = list(executor.map(_sweep_member, tasks))
    else:
        trajs = [_sweep_member(task) for task in tasks]
    trajs.append(_reference_run(bundle, cfg))

    builder = RunPackageBuilder(f"{bundle.name}-sweep", out_dir)
    builder.add_combined(trajs, str(out))
    builder.save_package()
    print(sweep_summary(trajs).to_string(float_format=lambda value: f"{value:.6e}"))  # noqa: T201
    if args.svg:
        plot_runs(trajs, bundle.output_transform, out_dir / args.svg, title=f"{bundle.name} gain sweep")
    return EXIT_OK


def validate_command(args: argparse.Namespace) -> int:
    """Run validate command."""
    only = [name.strip() for name in args.only.split(",")] if args.only else None
    results = run_validation(only=only, inject_fault=args.inject_fault)
    for result in results:
        print(result.format())  # noqa: T201
    failed = [result for result in results if not result.passed]
    if failed:
        print(f"First failing check: {failed[0].suite}: {failed[0].name}", file=sys.stderr)  # noqa: T201
        return EXIT_VALIDATION_FAILED
    return EXIT_OK


def export_scenario_command(args: argparse.Namespace) -> int:
    """Run export-scenario command."""
    bundle = load_scenario(args.scenario)
    if args.adaptive:
        bundle.gain_policy = _adaptive_policy(bundle)
    path = Path(args.out) if args.out else settings.SCENARIO_DIR / f"{bundle.name}.json"
    check_overriding_of_output(path, override=args.force)
    save_scenario(bundle, path)
    return EXIT_OK


def _add_output_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", help="Output CSV file name (relative to --out-dir).")
    parser.add_argument("--svg", help="Write SVG plot with this file name (relative to --out-dir).")
    parser.add_argument("--out-dir", default=str(settings.RESULTS_DIR), help="Directory for results.")
    parser.add_argument("-f", "--force", dest="force", action="store_true", help="Override outputs if they exist.")


def _add_sim_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--t-final", type=positive_float, help="Simulation horizon in seconds.")
    parser.add_argument("--step", type=positive_float, help="Integration step in seconds.")
    parser.add_argument("--record-every", type=int, help="Record every n-th step.")


def build_parser() -> argparse.ArgumentParser:
    """Return CLI parser."""
    parser = argparse.ArgumentParser(prog="dissiped")
    subparsers = parser.add_subparsers()

    analyze_parser = subparsers.add_parser("analyze", help="Check the stabilization assumptions.")
    analyze_parser.add_argument("scenario", help="Built-in scenario name or scenario JSON file.")
    analyze_parser.add_argument("--k1-radius", type=positive_float, help="Half width of the observer initial box.")
    analyze_parser.add_argument("--k2-radius", type=positive_float, help="Half width of the error initial box.")
    analyze_parser.add_argument("--grid", type=int, default=200, help="Grid size of the singular input scan.")
    analyze_parser.add_argument("--samples", type=int, default=2000, help="Samples for the gain bound.")
    analyze_parser.set_defaults(func=analyze_command)

    simulate_parser = subparsers.add_parser("simulate", help="Simulate plant and observer.")
    simulate_parser.add_argument("scenario", help="Built-in scenario name or scenario JSON file.")
    gain_group = simulate_parser.add_mutually_exclusive_group()
    gain_group.add_argument("--alpha", type=positive_float, help="Constant observer gain.")
    gain_group.add_argument("--adaptive", action="store_true", help="Use the state dependent observer gain.")
    simulate_parser.add_argument("--reference", action="store_true", help="Add the state feedback run.")
    simulate_parser.add_argument("--constant-input", action="store_true", help="Add the run with u = u*.")
    _add_sim_arguments(simulate_parser)
    _add_output_arguments(simulate_parser)
    simulate_parser.set_defaults(func=simulate_command)

    sweep_parser = subparsers.add_parser("sweep", help="Simulate several observer gains.")
    sweep_parser.add_argument("scenario", help="Built-in scenario name or scenario JSON file.")
    sweep_parser.add_argument("--alphas", type=alpha_list, help="Comma separated observer gains.")
    sweep_parser.add_argument("--jobs", type=int, default=1, help="Number of worker processes.")
    _add_sim_arguments(sweep_parser)
    _add_output_arguments(sweep_parser)
    sweep_parser.set_defaults(func=sweep_command)

    validate_parser = subparsers.add_parser("validate", help="Run the acceptance suites.")
    validate_parser.add_argument("--only", help=f"Comma separated suites out of: {', '.join(SUITES)}.")
    validate_parser.add_argument("--inject-fault", choices=FAULTS, help="Run with a deliberately broken observer.")
    validate_parser.set_defaults(func=validate_command)

    export_parser = subparsers.add_parser("export-scenario", help="Write scenario as JSON.")
    export_parser.add_argument("scenario", help="Built-in scenario name or scenario JSON file.")
    export_parser.add_argument("--out", help="Output JSON path.")
    export_parser.add_argument(
        "--adaptive",
        action="store_true",
        help="Store the state dependent observer gain as the scenario gain.",
    )
    export_parser.add_argument("-f", "--force", dest="force", action="store_true", help="Override file if it exists.")
    export_parser.set_defaults(func=export_scenario_command)
    return parser


def run(argv: list[str] | None = None) -> int:
    """Parse arguments, run command and return exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_OK
    try:
        return args.func(args)
    except NonFiniteStateError as exc:
        settings.logger.error(str(exc))
        return EXIT_NON_FINITE_STATE
    except (DissipedError, FileExistsError, KeyError, ValueError) as exc:
        settings.logger.error(str(exc))
        return EXIT_PARSE_ERROR


def main() -> None:
    """CLI entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
