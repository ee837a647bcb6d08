"""
Command-line driver

Every subcommand writes one CSV (to --out or stdout) and returns an exit code:
0 on success, 1 on usage or setup errors, 2 when a bound or sanity check is
violated.
"""

import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config

from .bounds import REPORT_COLUMNS, estimate_dbar, report, sample_theta
from .cftp import (CouplingTrace, UniformStream, coupled_sample, perfect_sample, reconstruct,
                   select_detector)
from .errors import CoalescenceViolation, InfinichainError
from .estimates import wilson
from .geom_conc import conc_table
from .house_of_cards import CALIBRATION_RANGE, HocSpec, bound_exponential, hoc_table, vk_dp
from .kernel import Kernel, RenewalKernel
from .kernel_spec import KERNELS_DIR, load_kernel
from .markov_approx import canonical_table, pk_empirical
from .partition import TruncatedPartition, canonical_partition, default_partition, renewal_partition
from .report_writer import ReportWriter
from .run_monitor import RunMonitor
from .utility.logger import setup_logger
from .utility.utils import format_float, parse_float_list, parse_int_list, replica_key

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATED = 2

TRACE_COLUMNS = ['seed', 'k', 'i', 'x', 'xk', 'range', 'disagree']
DBAR_COLUMNS = ['kernel', 'k', 'dbar_hat', 'sigma', 'dbar_ci', 'n_disagree', 'n_sites']
HOC_COLUMNS = ['k', 'v_dp', 'v_comb', 'v_mc', 'ci', 'bound_i', 'bound_ii', 'bound_iii']
CONC_COLUMNS = ['alpha', 'n', 'x', 'exact', 'chernoff', 'ratio']
SELFTEST_COLUMNS = ['check', 'passed', 'detail']

# (rows, fieldnames, violated)
Outcome = Tuple[List[Dict], Sequence[str], bool]

EPILOG = """
Examples:
  # 1000 stationary symbols of a renewal chain
  python app.py sample --kernel renewal_p04 --n 1000 --seed 7

  # coupled run of a chain and its 4-step approximation
  python app.py couple --kernel mixture_geo8 --k 4 --horizon 500

  # empirical d-bar next to every bound, 4 worker processes
  python app.py bounds --kernel renewal_p04 --k 2,4,8 --replicas 100000 --workers 4

  # house of cards v_k for a constant r, with a plot
  python app.py hoc --r const:0.5 --kmax 20 --out out/hoc.csv --plot out/hoc.png

  # Chernoff bounds against exact negative-binomial tails
  python app.py conc --alpha 0.2,0.5,0.8 --n 10,100

  # quick end-to-end checks on the shipped kernels
  python app.py selftest
"""


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; 2 is reserved for violated bounds here"""

    def error(self, message):
        self.print_usage()
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=parse_int_list, default=[0],
                        help='Seed or seed list (e.g. 7 or 1,2,3 or 1-10)')
    common.add_argument('--workers', type=int, help='Worker processes. Overrides INFINICHAIN_WORKERS.')
    common.add_argument('--window-cap', type=int,
                        help='Backward search cap for coalescence. Overrides INFINICHAIN_WINDOW_CAP.')
    common.add_argument('--out', type=str, help='CSV output file (default: stdout)')
    common.add_argument('--log-level', type=str, help='Overrides LOG_LEVEL')

    kernel_args = argparse.ArgumentParser(add_help=False)
    kernel_args.add_argument('--kernel', type=str, required=True,
                             help='Kernel file, or the name of a file under kernels/')

    plot_args = argparse.ArgumentParser(add_help=False)
    plot_args.add_argument('--plot', type=str, help='Also draw the CSV to this image (needs --out)')

    parser = _Parser(
        prog='infinichain',
        description='Perfect simulation and d-bar bounds for chains of infinite order',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG
    )
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    p = sub.add_parser('sample', parents=[common, kernel_args], help='Perfect stationary samples')
    p.add_argument('--n', type=int, default=1000, help='Symbols per seed')
    p.add_argument('--partition', choices=['default', 'canonical', 'renewal'], default='default')

    p = sub.add_parser('couple', parents=[common, kernel_args], help='Coupled run of X and X^[k]')
    p.add_argument('--k', type=parse_int_list, required=True, help='Approximation order(s)')
    p.add_argument('--horizon', type=int, default=1000, help='Recorded steps per run')
    p.add_argument('--partition', choices=['default', 'canonical', 'renewal'], default='default')
    p.add_argument('--pk-samples', type=int, default=0,
                   help='Estimate P^[k] from this many perfect samples instead of the exact table')
    p.add_argument('--validate', action='store_true', help='Re-check coalescence with probe pasts')

    p = sub.add_parser('dbar', parents=[common, kernel_args, plot_args], help='Empirical d-bar estimate')
    p.add_argument('--k', type=parse_int_list, required=True)
    p.add_argument('--replicas', type=int, default=1000)
    p.add_argument('--horizon', type=int, default=1)

    p = sub.add_parser('bounds', parents=[common, kernel_args, plot_args], help='d-bar against every bound')
    p.add_argument('--k', type=parse_int_list, required=True)
    p.add_argument('--replicas', type=int, default=1000)
    p.add_argument('--theta-replicas', type=int, help='Replicas for theta and ell samples (default: --replicas)')
    p.add_argument('--horizon', type=int, default=1)

    p = sub.add_parser('hoc', parents=[common, plot_args], help='House of cards v_k and its bounds')
    p.add_argument('--r', type=str, required=True,
                   help='const:R | exp:C,RHO | harmonic:R | power:C,A | seq:R0,R1,...')
    p.add_argument('--kmax', type=int, default=20)
    p.add_argument('--mc-replicas', type=int, default=0, help='Also estimate v_k by Monte Carlo')

    p = sub.add_parser('conc', parents=[common, plot_args], help='Geometric-sum concentration')
    p.add_argument('--alpha', type=parse_float_list, default=[0.2, 0.5, 0.8])
    p.add_argument('--n', dest='ns', type=parse_int_list, default=[10, 100])
    p.add_argument('--x', type=parse_float_list, help='x grid (default: 20 points in (0, 2/alpha])')

    p = sub.add_parser('selftest', parents=[common], help='End-to-end checks on the shipped kernels')
    p.add_argument('--replicas', type=int, default=20, help='Seeds per coalescence check')

    return parser


def _apply_overrides(args, config: Config):
    if args.workers is not None:
        config.WORKERS = args.workers
        logger.info(f"   CLI override: workers = {args.workers}")
    if args.window_cap is not None:
        config.WINDOW_CAP = args.window_cap
        logger.info(f"   CLI override: window cap = {args.window_cap}")
    if args.log_level:
        config.LOG_LEVEL = args.log_level
        logger.info(f"   CLI override: log level = {args.log_level}")


def _check_positive(args, names: Sequence[str]):
    for name in names:
        value = getattr(args, name, None)
        if value is not None and value < 1:
            raise ValueError(f"--{name.replace('_', '-')} must be >= 1")
    for k in getattr(args, 'k', None) or []:
        if k < 0:
            raise ValueError("--k values must be >= 0")


def _partition(kernel: Kernel, choice: str, tol: float):
    if choice == 'canonical':
        return canonical_partition(kernel, tol)
    if choice == 'renewal':
        if not isinstance(kernel, RenewalKernel):
            raise ValueError(f"{kernel.kernel_id} is not a renewal kernel")
        return renewal_partition(kernel, tol)
    return default_partition(kernel, tol)


# subcommands

def cmd_sample(args, config: Config) -> Outcome:
    kernel = load_kernel(args.kernel, config.STATE_CAP)
    partition = _partition(kernel, args.partition, config.LEFTOVER_TOL)
    rows = []
    for seed in args.seed:
        symbols = perfect_sample(partition, seed, args.n, window_cap=config.WINDOW_CAP,
                                 probe_depth=config.PROBE_DEPTH)
        start = -len(symbols) + 1
        rows.extend({'seed': seed, 'i': start + j, 'x': int(x)} for j, x in enumerate(symbols))
    return rows, ['seed', 'i', 'x'], False


def cmd_couple(args, config: Config) -> Outcome:
    kernel = load_kernel(args.kernel, config.STATE_CAP)
    partition = _partition(kernel, args.partition, config.LEFTOVER_TOL)
    rows, violated = [], False
    for k in args.k:
        if args.pk_samples:
            table = pk_empirical(kernel, k, args.pk_samples, args.seed[0], context_cap=config.CONTEXT_CAP,
                                 window_cap=config.WINDOW_CAP)
        else:
            table = canonical_table(kernel, k, config.STATE_CAP)
        truncated = TruncatedPartition(partition, k, table, config.LEFTOVER_TOL)
        for seed in args.seed:
            trace: CouplingTrace = coupled_sample(kernel, k, seed, args.horizon, partition=partition,
                                                  truncated=truncated, window_cap=config.WINDOW_CAP,
                                                  probe_depth=config.PROBE_DEPTH, validate=args.validate)
            p_x, p_xk = trace.stationarity_pvalues()
            logger.info(f"k={k} seed={seed}: theta0={trace.theta0} ({trace.method}), "
                        f"{trace.n_disagree} disagreements, half-window p-values {p_x:.3f}/{p_xk:.3f}")
            if not trace.key_bound_consistent():
                logger.error(f"k={k} seed={seed}: disagreement without a preceding range > k")
                violated = True
            rows.extend(dict(row, k=k) for row in trace.to_rows())
    return rows, TRACE_COLUMNS, violated


def cmd_dbar(args, config: Config) -> Outcome:
    kernel = load_kernel(args.kernel, config.STATE_CAP)
    rows = []
    for k in args.k:
        estimate = estimate_dbar(kernel, k, args.horizon, args.replicas, args.seed[0], workers=config.WORKERS,
                                 window_cap=config.WINDOW_CAP, probe_depth=config.PROBE_DEPTH,
                                 state_cap=config.STATE_CAP)
        rows.append({'kernel': kernel.kernel_id, 'k': k, 'dbar_hat': estimate.value, 'sigma': estimate.sigma,
                     'dbar_ci': estimate.ci.ci_text(), 'n_disagree': estimate.n_disagree,
                     'n_sites': estimate.n_sites})
    return rows, DBAR_COLUMNS, False


def cmd_bounds(args, config: Config) -> Outcome:
    kernel = load_kernel(args.kernel, config.STATE_CAP)
    result = report(kernel, args.k, horizon=args.horizon, n_replicas=args.replicas,
                    n_theta_replicas=args.theta_replicas or args.replicas, seed=args.seed[0],
                    workers=config.WORKERS, window_cap=config.WINDOW_CAP, probe_depth=config.PROBE_DEPTH,
                    state_cap=config.STATE_CAP)
    if result.theta_mean is not None:
        logger.info(f"E|theta[0]| ~ {result.theta_mean:.4g} +- {result.theta_se:.2g}")
    return result.to_rows(), REPORT_COLUMNS, result.violated


def cmd_hoc(args, config: Config) -> Outcome:
    spec = HocSpec.parse(args.r)
    rows = hoc_table(spec, args.kmax, mc_replicas=args.mc_replicas, seed=args.seed[0])
    violated = False
    for row in rows:
        for column in ('bound_i', 'bound_ii', 'bound_iii'):
            if column == 'bound_i' and row['k'] <= CALIBRATION_RANGE[1]:
                # the calibrated envelope is only claimed past its calibration window
                continue
            if row[column] is not None and row['k'] >= 1 and row['v_dp'] > row[column] * (1.0 + 1e-12):
                logger.error(f"{spec!r}: v_{row['k']}={row['v_dp']:.6g} above {column}={row[column]:.6g}")
                violated = True
    return rows, HOC_COLUMNS, violated


def cmd_conc(args, config: Config) -> Outcome:
    rows = conc_table(args.alpha, args.ns, args.x)
    violated = any(row['exact'] > row['chernoff'] * (1.0 + 1e-12) for row in rows)
    return rows, CONC_COLUMNS, violated


def _coalescence_check(kernel: Kernel, seeds: Sequence[int], config: Config) -> Tuple[int, int]:
    partition = default_partition(kernel, config.LEFTOVER_TOL)
    detector = select_detector(partition)
    violations = 0
    for key in seeds:
        uniforms = UniformStream(key)
        theta = detector(partition, uniforms, window_cap=config.WINDOW_CAP).theta0
        try:
            reconstruct(partition, uniforms, theta, n_window=config.PROBE_DEPTH, probes=config.PROBE_PASTS,
                        window_cap=config.WINDOW_CAP)
        except CoalescenceViolation as exc:
            logger.error(str(exc))
            violations += 1
    return violations, len(seeds)


def cmd_selftest(args, config: Config) -> Outcome:
    rows: List[Dict] = []
    seed = args.seed[0]

    def record(check: str, passed: bool, detail: str):
        rows.append({'check': check, 'passed': passed, 'detail': detail})
        (logger.info if passed else logger.error)(f"[selftest] {check}: {'ok' if passed else 'FAILED'} ({detail})")

    keys = [replica_key(seed, r) for r in range(args.replicas)]
    for path in sorted(KERNELS_DIR.glob('*.txt')):
        kernel = load_kernel(path, config.STATE_CAP)
        violations, total = _coalescence_check(kernel, keys, config)
        record(f"coalescence:{kernel.kernel_id}", violations == 0, f"{violations} of {total} seeds disagree")

    markov = load_kernel('markov_o1', config.STATE_CAP)
    trace = coupled_sample(markov, markov.order, seed, 10000, window_cap=config.WINDOW_CAP)
    record('markov_exact_order', trace.n_disagree == 0, f"{trace.n_disagree} disagreements over 10000 steps")

    v = vk_dp(HocSpec.constant(0.5), 20)
    worst = max(abs(v[k] - 0.5) for k in range(1, 21))
    record('hoc_constant_identity', worst < 1e-12, f"max |v_k - 0.5| = {format_float(worst)}")

    spec = HocSpec.exponential(0.5, 0.1)
    v = vk_dp(spec, 60)
    exceed = [k for k in range(1, 61) if v[k] > bound_exponential(spec, k)]
    record('hoc_exponential_bound', not exceed, f"{len(exceed)} of 60 k above 2(e^0.5 0.1)^k")

    conc = conc_table([0.2, 0.5, 0.8], [10, 100])
    bad = sum(1 for row in conc if row['exact'] > row['chernoff'] * (1.0 + 1e-12))
    record('chernoff_domination', bad == 0, f"{bad} of {len(conc)} tail points above the bound")

    renewal = load_kernel('renewal_p04', config.STATE_CAP)
    n_theta = max(1000, 50 * args.replicas)
    thetas = sample_theta(default_partition(renewal, config.LEFTOVER_TOL), n_theta, seed,
                          workers=config.WORKERS, window_cap=config.WINDOW_CAP)
    k = 2
    estimate = wilson(int(np.count_nonzero(thetas > k)), n_theta)
    target = (1.0 - renewal.alpha2) ** (k + 1)
    record('renewal_theta_law', estimate.within(target),
           f"P(theta < -{k}) = {estimate.value:.4f} {estimate.ci_text()} vs {target:.4f}")

    monitor_stats = RunMonitor(config).get_host_info()
    rows.append({'check': 'host', 'passed': True,
                 'detail': f"{monitor_stats['physical_cores']} cores, {config.WORKERS} workers"})
    return rows, SELFTEST_COLUMNS, not all(row['passed'] for row in rows)


COMMANDS: Dict[str, Callable[..., Outcome]] = {
    'sample': cmd_sample,
    'couple': cmd_couple,
    'dbar': cmd_dbar,
    'bounds': cmd_bounds,
    'hoc': cmd_hoc,
    'conc': cmd_conc,
    'selftest': cmd_selftest,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    config = Config()
    if args.log_level:
        config.LOG_LEVEL = args.log_level
    try:
        config.validate()
    except ValueError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    for name in ('modules', 'config'):
        setup_logger(name, config.LOG_LEVEL, config.LOG_DIR, config.LOG_TO_FILE and name == 'modules')

    try:
        _apply_overrides(args, config)
        _check_positive(args, ('workers', 'window_cap', 'n', 'horizon', 'replicas', 'theta_replicas', 'kmax'))
        if getattr(args, 'plot', None) and not args.out:
            raise ValueError("--plot draws the CSV file, so it needs --out")
        config.validate()
    except ValueError as exc:
        logger.error(f"Invalid arguments: {exc}")
        return EXIT_USAGE

    config.log_summary()
    monitor = RunMonitor(config)
    monitor.log_start(args.command)

    try:
        rows, fieldnames, violated = COMMANDS[args.command](args, config)
    except (InfinichainError, ValueError, FileNotFoundError) as exc:
        logger.error(f"{args.command} failed: {exc}", exc_info=True)
        return EXIT_USAGE

    ReportWriter(args.out).write_rows(rows, fieldnames)
    if getattr(args, 'plot', None):
        _plot(args.command, args.out, args.plot)
    monitor.log_summary(args.command)

    if violated:
        logger.error(f"{args.command}: a bound or sanity check was violated")
        return EXIT_VIOLATED
    return EXIT_OK


def _plot(command: str, csv_path: str, image_path: str):
    try:
        from .plots import PLOTTERS
        PLOTTERS[command](csv_path, image_path)
    except ImportError:
        logger.warning("matplotlib is not installed; --plot skipped")
