"""Command-line interface.

Exit codes: 0 success, 1 failed check or experiment, 2 invalid input or
configuration, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .errors import ConfigurationError, DeconvError, DomainError, VerificationError
from .estimator import (
    EstimatorConfig,
    confidence_interval,
    default_bandwidth,
    estimate_density,
    log_kde,
    variance_bounds,
)
from .experiment import (
    NOISE_FAMILIES,
    PRESETS,
    ExperimentError,
    ExperimentSpec,
    load_preset,
    load_report,
    persist_report,
    preset_data,
    resolve_workers,
    run_mse_experiment,
)
from .kernel import make_kernel, verify_ft_integrability, verify_moments
from .mellin import ErrorDensity, decay_constants, verify_ordinary_smooth
from .processes import (
    CirParams,
    MDependentParams,
    NoiseSpec,
    contaminate,
    simulate_cir,
    simulate_m_dependent,
    simulate_noise,
)
from .series import read_series, write_series

log = logging.getLogger("mellin_deconv")

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_IO = 0, 1, 2, 3


def _float_list(text: str) -> List[float]:
    text = text.strip()
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 12) for k in range(count)]
    return [float(v) for v in text.split(",") if v.strip()]


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON file supplying option values (unknown keys rejected)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: $MELLIN_DECONV_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mellin-deconv",
        description="Density estimation under multiplicative measurement error via Mellin deconvolution.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sim = sub.add_parser("simulate", help="simulate a series and write CSV + JSON sidecar")
    _add_common(sim)
    sim.add_argument("--generator", choices=["cir", "m_dependent", "noise"], default="cir")
    sim.add_argument("--theta1", type=float, default=1.0)
    sim.add_argument("--theta2", type=float, default=0.5)
    sim.add_argument("--theta3", type=float, default=1.0)
    sim.add_argument("--delta", type=float, default=1.0, help="sampling step")
    sim.add_argument("--method", choices=["exact", "euler"], default="exact", help="CIR sampler")
    sim.add_argument("--m-dep", type=int, default=30)
    sim.add_argument("--shape", type=float, default=2.0, help="Weibull shape")
    sim.add_argument("--scale", type=float, default=5.0, help="Weibull scale")
    sim.add_argument("--recycle-prob", type=float, default=0.5)
    sim.add_argument("--scheme", choices=["innovation", "value"], default="innovation")
    sim.add_argument("--noise", default=None,
                     help="noise family; multiplies the signal by it (or is the output for --generator noise)")
    sim.add_argument("--n", type=int, default=2000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--output", "-o", type=Path, default=Path("series.csv"))

    est = sub.add_parser("estimate", help="estimate f_X from a series CSV")
    _add_common(est)
    est.add_argument("--input", "-i", type=Path, required=False)
    est.add_argument("--noise", required=False, help=f"error law: {', '.join(NOISE_FAMILIES)}, degenerate, U(a,b), B(a,b)")
    est.add_argument("--kappa", type=float, default=None, help="override the decay exponent")
    est.add_argument("--kernel-order", type=int, default=2)
    est.add_argument("--bandwidth", type=float, default=None, help="fixed bandwidth (default n^(-1/(1+2k+2s)))")
    est.add_argument("--smoothness", type=float, default=2.0, help="Holder exponent s for the bandwidth rule")
    est.add_argument("--x-grid", default="0.5:4.5:0.5", help="comma list or start:stop:step")
    est.add_argument("--level", type=float, default=0.95)
    est.add_argument("--quad-p-max", type=float, default=10.0)
    est.add_argument("--quad-step", type=float, default=None)
    est.add_argument("--clamp", action="store_true", help="truncate negative estimates at zero")
    est.add_argument("--output", "-o", type=Path, default=Path("estimate.csv"))

    ver = sub.add_parser("verify", help="check kernel and error-law assumptions")
    _add_common(ver)
    ver.add_argument("--kernel-order", type=int, default=2)
    ver.add_argument("--noise", default="u01")
    ver.add_argument("--kappa", type=float, default=None)
    ver.add_argument("--p-max", type=float, default=1000.0)
    ver.add_argument("--tol", type=float, default=1e-8)
    ver.add_argument("--json", dest="as_json", action="store_true", help="emit JSON instead of text")
    ver.add_argument("--output", "-o", type=Path, default=None)

    exp = sub.add_parser("experiment", help="run a Monte Carlo MSE study")
    _add_common(exp)
    exp.add_argument("--preset", choices=PRESETS, default=None)
    exp.add_argument("--spec", type=Path, default=None, help="ExperimentSpec JSON")
    exp.add_argument("--noise", default=None, help="override the noise family")
    exp.add_argument("--seed", type=int, default=None, help="override master seed")
    exp.add_argument("--replications", type=int, default=None)
    exp.add_argument("--n", type=int, default=None)
    exp.add_argument("--output", "-o", type=Path, default=Path("report"),
                     help="output prefix; writes PREFIX.csv and PREFIX.json")

    rep = sub.add_parser("report", help="print a saved JSON report")
    _add_common(rep)
    rep.add_argument("input", type=Path)
    rep.add_argument("--reference", choices=PRESETS, default=None,
                     help="show the ratio to a bundled reference MSE column")
    rep.add_argument("--csv", type=Path, default=None, help="also write the flat CSV table")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    try:
        config = json.loads(args.config.read_text())
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read config {args.config}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{args.config}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(config, dict):
        raise ConfigurationError(f"{args.config}: top level must be an object")
    subparser = _subparsers(parser)[args.subcommand]
    allowed = {a.dest for a in subparser._actions if a.dest not in ("help", "config")}
    normalised = {k.replace("-", "_"): v for k, v in config.items()}
    unknown = sorted(set(normalised) - allowed)
    if unknown:
        raise ConfigurationError(f"{args.config}: unknown key(s) {', '.join(unknown)}")
    # Flags left at their defaults take the config value.
    defaults = {a.dest: a.default for a in subparser._actions}
    for key, value in normalised.items():
        if getattr(args, key, None) == defaults.get(key):
            if key in ("input", "output", "spec") and value is not None:
                value = Path(value)
            setattr(args, key, value)
    return args


def _subparsers(parser) -> Dict[str, argparse.ArgumentParser]:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return dict(action.choices)
    return {}


def _noise_law(name: str, kappa: Optional[float] = None) -> ErrorDensity:
    return ErrorDensity.from_name(name, kappa=kappa)


# -- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    seed = int(args.seed)
    x_seed, u_seed = (seed, 0, 0), (seed, 0, 1)
    if args.generator == "noise":
        if args.noise is None:
            raise ConfigurationError("--generator noise needs --noise FAMILY")
        series = simulate_noise(NoiseSpec(_noise_law(args.noise)), args.n, u_seed)
    else:
        if args.generator == "cir":
            params = CirParams(args.theta1, args.theta2, args.theta3, args.delta)
            series = simulate_cir(params, args.n, x_seed, method=args.method)
        else:
            params = MDependentParams(args.m_dep, args.shape, args.scale, args.recycle_prob, args.scheme)
            series = simulate_m_dependent(params, args.n, x_seed)
        if args.noise is not None:
            U = simulate_noise(NoiseSpec(_noise_law(args.noise)), args.n, u_seed)
            series = contaminate(series, U)
            series.meta.update(seed=seed, generator=f"{args.generator}*{args.noise}")
    series.meta["seed"] = seed
    write_series(series, args.output)
    log.info("wrote %d values to %s", len(series), args.output)
    return EXIT_OK


def cmd_estimate(args) -> int:
    if args.input is None or args.noise is None:
        raise ConfigurationError("estimate needs --input and --noise")
    Y = read_series(args.input)
    g = _noise_law(args.noise, args.kappa)
    K = make_kernel(args.kernel_order)
    x = _float_list(args.x_grid)
    if args.bandwidth is not None:
        b = args.bandwidth
    elif g.kappa > 0:
        b = default_bandwidth(Y.n, g.kappa, args.smoothness)
    else:
        b = Y.n ** (-1.0 / (1.0 + 2.0 * args.smoothness))
    cfg = EstimatorConfig(b, smoothness_s=args.smoothness, quad_p_max=args.quad_p_max,
                          quad_step=args.quad_step, clamp_nonnegative=args.clamp)
    est = estimate_density(Y, g, K, cfg, x)
    C1, C2 = decay_constants(g) if g.kappa > 0 else (1.0, 1.0)
    vb = variance_bounds(g, K, log_kde(Y, x, b), est.x_grid, C1, C2)
    lo, hi = confidence_interval(est, vb, args.level, g.kappa)
    if args.clamp:
        lo = np.maximum(lo, 0.0)
        hi = np.maximum(hi, 0.0)
    with open(args.output, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "f_hat", "ci_lo", "ci_hi"])
        for row in zip(est.x_grid, est.values, lo, hi):
            writer.writerow([repr(float(v)) for v in row])
    log.info("bandwidth %.6g, imaginary residual %.3g", b, est.imag_residual)
    return EXIT_OK


def run_checks(kernel_order: int, noise: str, kappa=None, p_max: float = 1000.0, tol: float = 1e-8):
    K = make_kernel(kernel_order)
    g = _noise_law(noise, kappa)
    checks = []
    mom = verify_moments(K, tol, raise_on_fail=False)
    checks.append({"check": "kernel_moments", "passed": mom.passed,
                   "residuals": list(mom.residuals), "tol": tol})
    if g.kappa > 0:
        i1, i2 = verify_ft_integrability(K, g.kappa)
        ok = all(math.isfinite(v) and v > 0 for v in (i1, i2))
        checks.append({"check": "ft_integrability", "passed": ok, "I1": i1, "I2": i2})
    smooth = verify_ordinary_smooth(g, p_max)
    checks.append({"check": "ordinary_smooth", "passed": smooth.passed, "kappa": smooth.kappa,
                   "c_low": smooth.c_low, "C_high": smooth.C_high, "D_deriv": smooth.D_deriv,
                   "tail_slope": smooth.tail_slope})
    if g.kappa > 0:
        C1, C2 = decay_constants(g, max(100.0, p_max))
    else:
        C1 = C2 = 1.0
    checks.append({"check": "decay_constants", "passed": bool(0 < C1 <= C2 and math.isfinite(C2)),
                   "C1": C1, "C2": C2})
    checks = [{k: _plain(v) for k, v in c.items()} for c in checks]
    return {"kernel_order": kernel_order, "noise": g.name, "kappa": float(g.kappa), "checks": checks,
            "passed": all(c["passed"] for c in checks)}


def _plain(v):
    # numpy scalars are not JSON serialisable
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v.item() if isinstance(v, np.generic) else v


def cmd_verify(args) -> int:
    result = run_checks(args.kernel_order, args.noise, args.kappa, args.p_max, args.tol)
    if args.as_json:
        text = json.dumps(result, indent=2)
    else:
        lines = [f"kernel order {result['kernel_order']}, noise {result['noise']}, kappa {result['kappa']:g}"]
        for c in result["checks"]:
            extras = ", ".join(f"{k}={_short(v)}" for k, v in c.items() if k not in ("check", "passed"))
            lines.append(f"  {'PASS' if c['passed'] else 'FAIL'}  {c['check']}: {extras}")
        text = "\n".join(lines)
    if args.output is not None:
        args.output.write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK if result["passed"] else EXIT_FAIL


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, list):
        return "[" + ", ".join(f"{x:.2e}" for x in v) + "]"
    return str(v)


def cmd_experiment(args) -> int:
    if (args.preset is None) == (args.spec is None):
        raise ConfigurationError("experiment needs exactly one of --preset or --spec")
    if args.preset is not None:
        spec = load_preset(args.preset, noise=args.noise)
    else:
        try:
            data = json.loads(Path(args.spec).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{args.spec}: line {exc.lineno}: {exc.msg}") from None
        spec = ExperimentSpec.from_dict(data)
        if args.noise is not None:
            spec = spec.with_(noise=NoiseSpec(_noise_law(args.noise), spec.noise.dependence,
                                              spec.noise.m_dep, spec.noise.recycle_prob))
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.replications is not None:
        overrides["replications"] = args.replications
    if args.n is not None:
        overrides["n"] = args.n
    if overrides:
        spec = spec.with_(**overrides)
    report = run_mse_experiment(spec, resolve_workers(args.threads))
    prefix = Path(args.output)
    persist_report(report, prefix.with_suffix(".csv"))
    persist_report(report, prefix.with_suffix(".json"))
    log.info("wrote %s.{csv,json}", prefix)
    return EXIT_OK


def cmd_report(args) -> int:
    report = load_report(args.input)
    ref = None
    if args.reference is not None:
        family = _family_key(report)
        ref = preset_data(args.reference)["reference_mse"].get(family)
        if ref is None or len(ref) != len(report.x_grid):
            raise ConfigurationError(f"no reference column for {report.noise_family} on this grid")
    header = f"{'x':>6}  {'mse':>12}  {'bias':>12}  {'variance':>12}"
    if ref:
        header += f"  {'reference':>12}  {'ratio':>7}"
    print(f"{report.noise_family}, n={report.n}, replications={report.replications}, "
          f"bandwidth={report.bandwidth:.6g}")
    print(header)
    for i, x in enumerate(report.x_grid):
        line = f"{x:6g}  {report.mse[i]:12.6g}  {report.bias[i]:12.4g}  {report.variance[i]:12.6g}"
        if ref:
            line += f"  {ref[i]:12.6g}  {report.mse[i] / ref[i]:7.3f}"
        print(line)
    if args.csv is not None:
        persist_report(report, args.csv)
    return EXIT_OK


def _family_key(report) -> str:
    noise = report.spec.get("noise", {})
    params = tuple(float(v) for v in noise.get("params", ()))
    for key in NOISE_FAMILIES:
        g = ErrorDensity.from_name(key)
        if (g.family, g.params) == (noise.get("family"), params):
            return key
    return report.noise_family


_COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "verify": cmd_verify,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.subcommand](args)
    except (ExperimentError, VerificationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DeconvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
