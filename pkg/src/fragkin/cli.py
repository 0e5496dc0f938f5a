"""Command line interface: ``fragkin {certify,run,probe,picard,report}``.

Exit codes: 0 success, 2 configuration error, 3 certificate FAIL without
``--override-certificate``, 4 blow-up abort, 5 numerical fault.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfiguration, load_config, load_preset, norm_specs, PRESETS
from .diagnostics import DiagnosticsSeries, boundedness_report, sample
from .diffusion import (
    green_bound_check,
    hypercontractivity_probe,
    size_monotonicity_check,
    vector_hypercontractivity_probe,
)
from .grids import SpaceGrid
from .initial import initial_field
from .integrator import (
    Models,
    NoContraction,
    NumericalFault,
    PositivityStagnation,
    RunState,
    SolverConfig,
    picard_solve,
    run,
)
from .io import CheckpointCorrupt, checkpoint_read, checkpoint_write, emit_csv, emit_series, read_series
from .kernels import CertificateReport, check_hypotheses, moment_report

logger = logging.getLogger("fragkin")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CERTIFICATE = 3
EXIT_BLOWUP = 4
EXIT_NUMERICAL = 5


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# helpers


def _load(args: argparse.Namespace) -> RunConfiguration:
    if args.config and args.preset:
        raise CliError("give either --config or --preset, not both", EXIT_CONFIG)
    try:
        if args.config:
            return load_config(args.config)
        if args.preset:
            return load_preset(args.preset)
    except ConfigError as exc:
        raise CliError("configuration error:\n  " + "\n  ".join(exc.errors), EXIT_CONFIG) from None
    except OSError as exc:
        raise CliError(f"cannot read configuration: {exc}", EXIT_CONFIG) from None
    raise CliError("one of --config or --preset is required", EXIT_CONFIG)


def build_models(cfg: RunConfiguration) -> Models:
    try:
        return Models(cfg.space_grid(), cfg.size_grid(), cfg.rate_model(), cfg.frag_kernel_model(),
                      cfg.coag_kernel_model())
    except (ValueError, OSError) as exc:
        raise CliError(f"configuration error: {exc}", EXIT_CONFIG) from None


def certify(cfg: RunConfiguration, models: Models) -> CertificateReport:
    if models.frag is None or models.coag is None:
        raise CliError("the certificate needs both a fragmentation and a coagulation kernel", EXIT_CONFIG)
    report = moment_report(models.frag)
    return check_hypotheses(models.rates, models.frag, models.coag, cfg.analysis.p, cfg.analysis.ell,
                            cfg.analysis.delta, report, size=models.size,
                            space_coords=models.space.coordinates())


def solver_config(cfg: RunConfiguration) -> SolverConfig:
    s = cfg.solver
    return SolverConfig(dt=s.dt, t_end=s.t_end, safety=s.safety, mode=s.mode, picard_kmax=s.picard_kmax,
                        picard_tol=s.picard_tol, picard_nodes=s.picard_nodes,
                        positivity_policy=s.positivity_policy, output_every=s.output_every,
                        checkpoint_every=s.checkpoint_every, max_rejections=s.max_rejections,
                        blowup_factor=s.blowup_factor)


def _initial(cfg: RunConfiguration, models: Models, seed: int):
    ck = cfg.checkpoint_path()
    if ck is not None:
        try:
            state = checkpoint_read(ck)
        except CheckpointCorrupt as exc:
            raise CliError(f"checkpoint error: {exc}", EXIT_CONFIG) from None
        if state.u.space != models.space or state.u.size != models.size:
            raise CliError("checkpoint grids do not match the configuration", EXIT_CONFIG)
        return state
    ic = cfg.initial_condition
    params = {k: getattr(ic, k) for k in ("size_profile", "number", "scale", "width", "space_profile", "amplitude",
                                          "mode", "bump_width")}
    return initial_field(models.space, models.size, params, seed=seed)


@contextmanager
def _sink(path: str | None) -> Iterator[Any]:
    if path is None or path == "-":
        yield sys.stdout.buffer
        return
    with open(path, "wb") as fh:
        yield fh


@contextmanager
def _thread_limit(n: int | None) -> Iterator[None]:
    if n is None:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # the limit is then recorded only
        yield
        return
    with threadpool_limits(limits=n):
        yield


def _write_json(obj: Any, path: str | None) -> None:
    text = json.dumps(obj, indent=2, allow_nan=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# --------------------------------------------------------------------------
# subcommands


def cmd_certify(args: argparse.Namespace) -> int:
    cfg = _load(args)
    report = certify(cfg, build_models(cfg))
    sys.stdout.write(report.text() + "\n")
    if args.out:
        _write_json(report.to_dict(), args.out)
    return EXIT_OK if report.passed else EXIT_CERTIFICATE


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args)
    models = build_models(cfg)
    extra: dict[str, Any] = {"seed": args.seed, "threads": args.threads, "certificate": None,
                             "override_certificate": bool(args.override_certificate)}
    if cfg.analysis.certify:
        report = certify(cfg, models)
        extra["certificate"] = "PASS" if report.passed else "FAIL"
        if not report.passed:
            if not args.override_certificate:
                sys.stderr.write(report.text() + "\n")
                raise CliError("certificate FAIL; rerun with --override-certificate to proceed", EXIT_CERTIFICATE)
            logger.warning("running despite certificate FAIL on %s", ", ".join(report.failed))
    try:
        scfg = solver_config(cfg)
    except ValueError as exc:
        raise CliError(f"configuration error: {exc}", EXIT_CONFIG) from None
    series = DiagnosticsSeries(models.space, models.size, norm_specs(cfg),
                               models.rates.beta_envelope(models.size.nodes))
    initial = _initial(cfg, models, args.seed)
    ck_hook = None
    if args.checkpoint:
        ck_path = args.checkpoint
        if not scfg.checkpoint_every:
            scfg.checkpoint_every = scfg.total_steps

        def ck_hook(state):
            checkpoint_write(state, ck_path)
    else:
        scfg.checkpoint_every = 0
    if isinstance(initial, RunState):
        # a resumed run starts its series at the checkpointed state
        initial.diagnostics = series
        sample(series, initial)
    try:
        with _thread_limit(args.threads):
            run(scfg, initial, models, series=series, checkpoint=ck_hook)
    except (NumericalFault, PositivityStagnation) as exc:
        raise CliError(f"numerical fault: {exc}", EXIT_NUMERICAL) from None
    with _sink(args.out) as sink:
        if args.csv:
            emit_csv(series, sink)
        else:
            emit_series(series, sink, cfg.sha256, extra)
    if series.abort is not None:
        sys.stderr.write(f"blow-up abort: {json.dumps(series.abort)}\n")
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_probe(args: argparse.Namespace) -> int:
    cfg = _load(args)
    models = build_models(cfg)
    size, rates = models.size, models.rates
    # the probes measure the heat semigroup itself, so they get their own grid
    # on the same torus, fine enough to resolve a decade of kernels
    run_space = models.space
    space = SpaceGrid(run_space.dim, run_space.extent, max(run_space.points, 512 if run_space.dim == 1 else 256))
    out: dict[str, Any] = {"probe_points": space.points}
    kinds = ["green", "hyper", "monotone"] if args.kind == "all" else [args.kind]
    impulse = np.zeros(space.shape)
    impulse[(space.points // 2,) * space.dim] = 1.0 / space.cell_volume
    # a decade of times whose kernels are resolved (width >= 4 cells) and
    # narrow enough for the torus (sqrt(4 t) <= L / 8)
    t_lo = 8.0 * space.spacing ** 2
    t_hi = 10.0 * t_lo
    try:
        if "green" in kinds:
            reports = [green_bound_check(1.0, t, space) for t in (t_lo, t_hi)]
            out["green"] = [r.to_dict() for r in reports]
        if "hyper" in kinds:
            ts = list(np.geomspace(t_lo, t_hi, 6))
            out["hyper"] = {f"{p:g}->{q:g}": hypercontractivity_probe(impulse, space, p, q, ts).to_dict()
                            for p, q in ((1.0, np.inf), (2.0, np.inf))}
            if rates.mode == "power":
                out["hyper"]["vector"] = vector_hypercontractivity_probe(
                    impulse, space, size, rates, 1.0, np.inf, cfg.analysis.ell, ts).to_dict()
        if "monotone" in kinds:
            if rates.mode != "power":
                raise CliError("size-monotonicity probe needs power rates", EXIT_CONFIG)
            x = space.coordinates()[0]
            phi = np.exp(-0.5 * ((x - 0.5 * space.extent) / (0.05 * space.extent)) ** 2)
            pairs = list(zip(size.nodes[:-1:max(1, size.count // 5)], size.nodes[1::max(1, size.count // 5)]))[:5]
            out["monotone"] = size_monotonicity_check(phi, space, rates, 0.05, pairs).to_dict()
    except ValueError as exc:
        raise CliError(f"probe error: {exc}", EXIT_CONFIG) from None
    _write_json(out, args.out)
    return EXIT_OK


def cmd_picard(args: argparse.Namespace) -> int:
    cfg = _load(args)
    models = build_models(cfg)
    u0 = _initial(cfg, models, args.seed)
    if isinstance(u0, RunState):
        u0 = u0.u
    try:
        report = picard_solve(u0, cfg.solver.picard_horizon, solver_config(cfg), models, p=1.0, ell=cfg.analysis.ell)
    except NoContraction as exc:
        raise CliError(str(exc), EXIT_NUMERICAL) from None
    except ValueError as exc:
        raise CliError(f"configuration error: {exc}", EXIT_CONFIG) from None
    _write_json(report.to_dict(), args.out)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        header, series = read_series(Path(args.series).read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read series: {exc}", EXIT_CONFIG) from None
    cert = header.get("certificate")
    report = boundedness_report(series, None if cert is None else cert == "PASS")
    sys.stdout.write(report.summary + "\n")
    if args.out:
        _write_json(report.to_dict(), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fragkin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fragkin {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="configuration file")
        p.add_argument("--preset", choices=PRESETS, help="shipped scenario")
        p.add_argument("--out", help="output path ('-' for stdout)")
        p.add_argument("--threads", type=int, default=None, help="BLAS/FFT worker threads")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized initial data")

    p = sub.add_parser("certify", help="check every hypothesis on rates and kernels")
    common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("run", help="integrate in time and stream diagnostics")
    common(p)
    p.add_argument("--csv", action="store_true", help="flatten the series to CSV instead of NDJSON")
    p.add_argument("--checkpoint", help="checkpoint path (written every checkpoint_every steps and at the end)")
    p.add_argument("--override-certificate", action="store_true", help="run even if the certificate fails")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("probe", help="heat-kernel and semigroup probes")
    common(p)
    p.add_argument("--kind", choices=("green", "hyper", "monotone", "all"), default="all")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("picard", help="fixed-point iteration of the mild formulation")
    common(p)
    p.set_defaults(func=cmd_picard)

    p = sub.add_parser("report", help="boundedness verdicts for a stored series")
    p.add_argument("series", help="NDJSON series written by 'fragkin run'")
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"fragkin: {exc}\n")
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
