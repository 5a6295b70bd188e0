"""Command-line front end.

Subcommands: ``reduce`` builds a reduced model and writes the model file,
``validate`` runs seeded Monte Carlo co-simulation and writes CSV files plus
figures, ``check-assumptions`` grades the stability assumptions of a
system/generator pair, ``lyapunov`` estimates a Lyapunov spectrum.

Exit codes: 0 success, 2 certificate/construction failure, 3 solver
singularity, 4 path divergence, 5 I/O or parse error, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys as _sys

import numpy as np

from . import formats, harness
from .errors import (
    CertificateFailed,
    DivergenceError,
    MatrixFormatError,
    NoSolution,
    NotPlaceable,
    SingularSystem,
    StomorError,
)
from .rom import dominant_poles
from .sde import NoiseCoupling, check_assumptions, lyapunov_exponents

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CERTIFICATE = 2
EXIT_SINGULAR = 3
EXIT_DIVERGENCE = 4
EXIT_IO = 5


def _parse_poles(text: str):
    if text == "dominant":
        return None
    return [complex(tok.replace("i", "j")) for tok in text.split(",") if tok.strip()]


def _parse_probe_times(text: str):
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _add_sources(parser):
    parser.add_argument("--system", required=True,
                        help="system file, 'random:n=..,margin=..,f_scale=..,"
                             "g_scale=..,seed=..' or 'mechfixture:SEED'")
    parser.add_argument("--generator", required=True,
                        help="generator file or 'example1:SEED'")


def cmd_reduce(args) -> int:
    config = harness.ExperimentConfig(
        system=args.system, generator=args.generator, method=args.method,
        poles=_parse_poles(args.poles), gr_rule=args.gr_rule, fr_rule=args.fr_rule)
    model, diagnostics = harness.run_reduction(config)
    formats.save_model(model, args.out)
    print(f"wrote {args.out} (kind={model.kind}, order={model.order})")
    if model.time_varying_output:
        print("  note: the output map is time varying; evaluating it requires "
              "co-simulation against the system/generator pair (see 'validate')")
    for cert in model.certificates:
        verdict = "pass" if cert.passed else "FAIL"
        print(f"  certificate {cert.name}: {verdict} ({cert.detail})")
    for key in sorted(diagnostics):
        print(f"  {key} = {diagnostics[key]:.6g}")
    return EXIT_OK


def cmd_validate(args) -> int:
    randomize = None
    if args.randomize_omega0:
        randomize = True
    elif args.fixed_omega0:
        randomize = False
    config = harness.ExperimentConfig(
        system=args.system, generator=args.generator,
        dt=args.dt, horizon=args.horizon, burn_in_fraction=args.burn_in,
        n_paths=args.paths, base_seed=args.seed,
        coupling=NoiseCoupling.coerce(args.coupling),
        probe_times=_parse_probe_times(args.probe_times),
        tail_fraction=args.tail_fraction,
        randomize_omega0=randomize, square_wave=args.square_wave)
    model = formats.load_model(args.model)
    report = harness.run_validation(config, model, csv_dir=args.csv_dir,
                                    figures=not args.no_figures)
    print(f"{report.n_paths} paths, {len(report.diverged)} diverged")
    print(f"tail mean |e| = {report.tail_mean:.6g} "
          f"({100 * report.tail_ratio:.3g}% of output RMS {report.tail_rms_output:.6g})")
    print(f"steady output mean {report.output_steady.mean:.6g} "
          f"vs model {report.rom_steady.mean:.6g}")
    print(f"steady output mean-square {report.output_steady.meansq:.6g} "
          f"vs model {report.rom_steady.meansq:.6g}")
    if args.csv_dir:
        print(f"wrote CSV and figures under {args.csv_dir}")
    return EXIT_OK


def cmd_check_assumptions(args) -> int:
    sys_ = harness.resolve_system(args.system)
    gen = harness.resolve_generator(args.generator)
    report = check_assumptions(sys_, gen, seed=args.seed, dt=args.dt,
                               horizon=args.horizon,
                               reorth_interval=args.reorth_interval,
                               tolerance=args.tolerance)
    fmt = lambda arr: ", ".join(f"{v:+.4f}" for v in arr)
    print(f"system exponents:    {fmt(report.system_exponents.exponents)} "
          f"(converged={report.system_exponents.converged})")
    print(f"generator exponents: {fmt(report.generator_exponents.exponents)} "
          f"(converged={report.generator_exponents.converged})")
    print(f"system contraction:  {'pass' if report.assumption_system_pass else 'FAIL'}")
    print(f"generator neutrality: {'pass' if report.assumption_generator_pass else 'FAIL'}")
    if report.commuting and report.shortcut_spectrum is not None:
        eigs = ", ".join(f"{v:.4g}" for v in report.shortcut_spectrum.eigenvalues)
        print(f"commuting shortcut: spectrum of S - J^2/2 = {{{eigs}}}")
    else:
        print("commuting shortcut: not applicable (S and J do not commute)")
    return EXIT_OK


def cmd_lyapunov(args) -> int:
    A = formats.load_matrix(args.A)
    F = formats.load_matrix(args.F) if args.F else np.zeros_like(A)
    spec = lyapunov_exponents(A, F, seed=args.seed, dt=args.dt,
                              horizon=args.horizon,
                              reorth_interval=args.reorth_interval)
    for i, lam in enumerate(spec.exponents):
        print(f"lambda_{i + 1} = {lam:+.6f}")
    print(f"horizon {spec.horizon:g}s, reorthonormalize every "
          f"{spec.reorthonormalization_interval} steps, converged={spec.converged}")
    if args.csv:
        formats.write_csv(args.csv, ["index", "exponent"],
                          np.column_stack([np.arange(1, len(spec.exponents) + 1),
                                           spec.exponents]))
        print(f"wrote {args.csv}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stomor",
        description="moment-matching model reduction for linear stochastic systems")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", help="build a reduced-order model")
    _add_sources(p)
    p.add_argument("--method", required=True, choices=["exact", "mean", "meansquare"])
    p.add_argument("--poles", default="dominant",
                   help="comma-separated complex targets (e.g. '-1,-2+3j,-2-3j') "
                        "or 'dominant' (default: dominant eigenvalues of A)")
    p.add_argument("--gr-rule", default=None,
                   help="'zero' or 'scale:ALPHA' (default scale:0.05; "
                        "meansquare defaults to zero)")
    p.add_argument("--fr-rule", default="exactlike", choices=["exactlike", "neg_grl"],
                   help="moment-mean model diffusion rule")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("validate", help="Monte Carlo validation of a model file")
    _add_sources(p)
    p.add_argument("--model", required=True)
    p.add_argument("--paths", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--burn-in", type=float, default=0.2, dest="burn_in")
    p.add_argument("--tail-fraction", type=float, default=0.1)
    p.add_argument("--coupling", default="shared", choices=["shared", "independent"])
    p.add_argument("--probe-times", default="1.5,2.5,5,7.5,10")
    p.add_argument("--square-wave", action="store_true",
                   help="drive with u(t) = -0.05 sign(sin(2 pi t / 10)) "
                        "instead of the generator")
    p.add_argument("--randomize-omega0", action="store_true",
                   help="draw a fresh generator start per path (default for ensembles)")
    p.add_argument("--fixed-omega0", action="store_true",
                   help="use the generator's omega0 on every path")
    p.add_argument("--csv-dir", default=None)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("check-assumptions",
                       help="estimate Lyapunov spectra and grade the stability assumptions")
    _add_sources(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=200.0)
    p.add_argument("--reorth-interval", type=int, default=100)
    p.add_argument("--tolerance", type=float, default=0.02)
    p.set_defaults(func=cmd_check_assumptions)

    p = sub.add_parser("lyapunov", help="estimate the Lyapunov spectrum of (A, F)")
    p.add_argument("--A", required=True, help="drift matrix file")
    p.add_argument("--F", default=None, help="diffusion matrix file (default zero)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=100.0)
    p.add_argument("--reorth-interval", type=int, default=100)
    p.add_argument("--csv", default=None, help="optional CSV output")
    p.set_defaults(func=cmd_lyapunov)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "reduce" and args.gr_rule is None:
        args.gr_rule = "zero" if args.method == "meansquare" else "scale:0.05"
    try:
        return args.func(args)
    except (CertificateFailed, NoSolution, NotPlaceable) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_CERTIFICATE
    except SingularSystem as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_SINGULAR
    except DivergenceError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        if exc.diverged:
            for path_index, step in exc.diverged[:20]:
                print(f"  path {path_index} diverged at step {step}", file=_sys.stderr)
        return EXIT_DIVERGENCE
    except (MatrixFormatError, OSError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_IO
    except (StomorError, ValueError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    _sys.exit(main())
