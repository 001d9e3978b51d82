"""
Sylvester LCU Toolkit - Command Line Front Door
Loads or generates AX + XB = C instances, synthesizes the LCU solution,
verifies it against the dense oracle and writes JSON/CSV artifacts
"""

import argparse
import json
import sys
from dataclasses import replace
from typing import List, Optional

from linalg.dense_ops import vectorization_self_test
from services.error_handler import (EXIT_BUDGET, EXIT_PASS, EXIT_USAGE, EXIT_VERIFICATION_FAIL,
                                    PipelineErrorHandler, SylvesterError, setup_logging)
from services.pipeline import MODES, RunConfig, gen_poisson, gen_random, get_pipeline, parse_case
from solver_config import get_solver_config
from storage.matrix_store import dumps_report, save_instance

DEFAULT_SWEEP_KAPPAS = '2,5,10,20'


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", help="Instance JSON file.")
    parser.add_argument("--generate", help="Generator: 'poisson' or a case name (Normal, BZero, ...).")
    parser.add_argument("--n", type=int, default=2, help="Dimension of generated instances.")
    parser.add_argument("--kappa", type=float, help="Target κ for random generators.")
    parser.add_argument("--epsilon", type=float, default=0.1)
    parser.add_argument("--beta", type=float, default=0.5, help="LCHS kernel exponent (PositiveHermitianPart).")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--case", help="Force a case instead of classifying.")
    parser.add_argument("--term-budget", type=int, help="Override QSYLV_TERM_BUDGET for this run.")
    parser.add_argument(
        "--manual-params",
        help='JSON object {"delta_t", "delta_omega", "r_count", "j_count"} replacing calibration.',
    )
    parser.add_argument("--out", help="Report (solve) or instance (generate) output path.")
    parser.add_argument("--csv", help="Append a CSV row per run.")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="sylvester-lcu",
        description="Synthesize and verify LCU solutions of the Sylvester equation AX + XB = C.",
    )
    parser.add_argument("--log-level", help="Override QSYLV_LOG_LEVEL.")
    verbs = parser.add_subparsers(dest="verb", required=True)

    solve = verbs.add_parser("solve", help="Run the full pipeline on one instance.")
    _add_run_flags(solve)
    solve.add_argument("--mode", choices=MODES, default="lcu-only")

    estimate = verbs.add_parser("estimate", help="Classify and report query-count estimates only.")
    _add_run_flags(estimate)

    generate = verbs.add_parser("generate", help="Write a generated instance to --out.")
    _add_run_flags(generate)

    sweep = verbs.add_parser("sweep", help="Generated runs over several κ, one CSV row each.")
    _add_run_flags(sweep)
    sweep.add_argument("--mode", choices=MODES, default="lcu-only")
    sweep.add_argument("--kappas", default=DEFAULT_SWEEP_KAPPAS, help="Comma-separated κ targets.")

    unitary = verbs.add_parser("verify-unitary", help="Assemble the full block-encoding and check it.")
    _add_run_flags(unitary)

    return parser.parse_args(argv)


def build_config(args: argparse.Namespace) -> RunConfig:
    manual = None
    if args.manual_params:
        try:
            manual = json.loads(args.manual_params)
        except json.JSONDecodeError as e:
            raise ValueError(f"--manual-params is not valid JSON: {e.msg}")
        if not isinstance(manual, dict):
            raise ValueError("--manual-params must be a JSON object")
    mode = {
        'estimate': 'estimate',
        'verify-unitary': 'full-unitary',
    }.get(args.verb, getattr(args, 'mode', 'lcu-only'))
    return RunConfig(
        input_path=args.input, generator=args.generate, n=args.n, kappa=args.kappa,
        epsilon=args.epsilon, beta=args.beta, mode=mode, term_budget=args.term_budget,
        manual_params=manual, seed=args.seed, case=args.case,
        output_path=args.out, csv_path=args.csv,
    )


def _generate(args: argparse.Namespace) -> int:
    if not args.generate or not args.out:
        print("❌ generate needs --generate and --out")
        return EXIT_USAGE
    if args.generate.lower() == 'poisson':
        inst = gen_poisson(args.n)
    else:
        if args.kappa is None:
            print("❌ --kappa is required for random generators")
            return EXIT_USAGE
        inst = gen_random(parse_case(args.generate), args.n, args.kappa, args.seed)
    save_instance(inst, args.out)
    print(f"✅ Instance written to {args.out} ({'; '.join(inst.notes)})")
    return 0


def _print_outcome(outcome) -> None:
    report = outcome.report
    print(f"📐 Case: {report['case']}  κ = {report['instance']['kappa']:.6g}  mode: {report['mode']}")
    if 'estimate' in report:
        est = report['estimate']
        print(f"📊 Estimate: Q ≈ {est['q_est']:.6g}, G ≈ {est['g_est']:.6g} ({est['formula']})")
    if 'program' in report:
        prog = report['program']
        print(f"🧮 Terms: {prog['term_count']}  y = {prog['y']:.6g}  x = {prog['x']:.6g}  "
              f"max time = {prog['max_evolution_time']:.6g}")
    if 'block_check' in report:
        check = report['block_check']
        print(f"🔲 Block-encoding ({check['dimension']}×{check['dimension']}): "
              f"block error {check['block_error']:.3e}, unitarity defect {check['unitarity_defect']:.3e}")
    if 'verification' in report:
        ver = report['verification']
        print(f"🔍 residual_rel = {ver['residual_rel']:.3e}  mult_err = {ver['mult_err']:.3e}  "
              f"criterion: {ver['criterion']}")
    print(f"{'✅ PASS' if outcome.passed else '❌ FAIL'} in {report['wall_time']:.2f}s")
    for path in outcome.artifacts:
        print(f"💾 {path}")


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    handler = PipelineErrorHandler()
    try:
        config = get_solver_config()
    except SylvesterError as e:
        record = handler.capture_error(e)
        print(f"❌ {record['stage']}: {record['error_message']}")
        return record['exit_code']
    setup_logging(args.log_level or config.log_level, config.log_dir)

    try:
        handler.enter_stage('startup')
        vectorization_self_test()
        handler.enter_stage('config')

        if args.verb == 'generate':
            return _generate(args)

        run_config = build_config(args)
        pipeline = get_pipeline()

        if args.verb == 'sweep':
            if run_config.generator is None:
                print("❌ sweep needs --generate")
                return EXIT_USAGE
            kappas = [float(k) for k in args.kappas.split(',') if k.strip()]
            rows = pipeline.sweep(replace(run_config, csv_path=None), kappas)
            if run_config.csv_path:
                pipeline.store.append_rows(rows, run_config.csv_path)
                print(f"💾 {len(rows)} rows appended to {run_config.csv_path}")
            else:
                print(dumps_report({'rows': rows}))
            failed = sum(1 for row in rows if not row['pass'])
            complete = len(rows) == len(kappas) and not failed
            print(f"{'✅' if complete else '⚠️'} {len(rows)}/{len(kappas)} sweep points completed, "
                  f"{failed} failed verification")
            if not rows:
                return EXIT_BUDGET
            return EXIT_VERIFICATION_FAIL if failed else EXIT_PASS

        outcome = pipeline.run(run_config)
        _print_outcome(outcome)
        if not run_config.output_path:
            print(dumps_report(outcome.report))
        return outcome.exit_code

    except Exception as e:
        record = handler.capture_error(e)
        print(f"❌ {record['stage']}: {record['error_type']}: {record['error_message']}")
        return record['exit_code']


if __name__ == '__main__':
    sys.exit(main())
