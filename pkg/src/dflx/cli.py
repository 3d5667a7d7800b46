"""Command-line front end: ``dflx <subcommand> [flags]``.

Exit codes: 0 on success, 1 on usage or input errors (bad flags, malformed
files, out-of-range parameters), 2 when a computed invariant fails or a
requested scan is empty.  Reports are canonical JSON that embed the run
manifest; the full manifest (with timestamp) is written to
``<report>.manifest.json``.  Without an output path the report goes to stdout.

``--config FILE`` reads ``key = value`` lines (``#`` starts a comment; keys are
flag names without the leading dashes).  Flags given on the command line win.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .errors import (
    DflxError,
    FormatError,
    GeneratorError,
    IntegrationError,
    InvalidInputError,
    ValidationError,
)
from .io import RunManifest, canonical_json, emit_csv, emit_json, file_hash, read_field, write_field

RESIDUAL_TOL = 1e-10


class UsageError(Exception):
    """Bad command line or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise UsageError(message)


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------


def parse_range(text: str) -> List[int]:
    """``"a..b"`` (inclusive) or a single integer; ``b < a`` gives an empty list."""
    text = str(text).strip()
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            return list(range(int(a), int(b) + 1))
        return [int(text)]
    except ValueError as exc:
        raise UsageError(f"malformed range {text!r}; expected a..b") from exc


def parse_floats(text: str) -> List[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"malformed list {text!r}; expected comma-separated numbers") from exc


def read_config(path: str) -> dict:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value.strip().strip('"').strip("'")
    return out


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _apply_config(sub: argparse.ArgumentParser, config: dict) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help",)}
    defaults = {}
    for key, value in config.items():
        if key not in actions or key == "config":
            raise UsageError(f"unknown config key {key!r}")
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            v = value.lower()
            if v not in _TRUE | _FALSE:
                raise UsageError(f"config key {key!r} expects true/false, got {value!r}")
            defaults[key] = v in _TRUE
        elif action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r} must be one of {list(action.choices)}")
        else:
            defaults[key] = value  # argparse applies ``type`` to string defaults
    sub.set_defaults(**defaults)


def _require(args, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required flag(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _params(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}


def _field_manifest(args, command: str, paths: Sequence[str]) -> tuple[RunManifest, list]:
    fields = [read_field(p) for p in paths]
    manifest = RunManifest(
        subcommand=command,
        parameters=_params(args),
        input_hashes={str(p): file_hash(p) for p in paths},
        grid=fields[0].grid.describe() if fields else None,
    )
    return manifest, fields


def _emit(report: dict, manifest: RunManifest, out: Optional[str]) -> None:
    if out:
        emit_json(out, report, manifest)
    else:
        sys.stdout.write(canonical_json({"manifest": manifest.reproducible(), "report": report}) + "\n")


def _select(f, component: Optional[int]):
    from .spectral import VectorField

    if component is None or not isinstance(f, VectorField):
        return f
    return f.component(int(component))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    from .generators import (
        LacunarySpec,
        abc_flow,
        ccfs_field,
        critical_window,
        lacunary_field,
        random_divfree,
        taylor_green,
        verify_lacunary,
    )
    from .flux import total_flux
    from .littlewood_paley import build_partition
    from .spectral import GridSpec, divergence_defect, lp_norm

    _require(args, "kind", "out")
    grid = GridSpec.cube(args.grid, args.domain_length)
    measured: dict = {}
    if args.kind == "lacunary":
        _require(args, "alpha", "beta")
        part = build_partition(grid)
        spec = LacunarySpec(
            args.alpha, args.beta, seed=args.seed, phase_mode=args.phase_mode,
            damping=args.damping, vertical=not args.horizontal_only,
        )
        u = lacunary_field(grid, spec, part)
        measured["lacunary"] = verify_lacunary(u, spec, part)
    elif args.kind == "ccfs":
        part = build_partition(grid)
        u = ccfs_field(grid, seed=args.seed, part=part)
        measured["flux"] = {N: total_flux(u, part, N) for N in critical_window(part)}
    elif args.kind == "tg":
        u = taylor_green(grid, args.amplitude)
    elif args.kind == "abc":
        u = abc_flow(grid, args.amplitude, args.amplitude, args.amplitude)
    else:
        u = random_divfree(grid, spectrum_slope=args.slope, seed=args.seed, rms=args.rms)
    measured.update(divergence_defect=divergence_defect(u), energy=0.5 * lp_norm(u, 2) ** 2)
    write_field(args.out, u)
    manifest = RunManifest("generate", _params(args), grid=grid.describe())
    sidecar = str(Path(args.out).with_suffix(".json"))
    emit_json(sidecar, measured, manifest)
    return 0


def cmd_lp(args) -> int:
    from .littlewood_paley import block_norms, build_partition
    from .spectral import parse_exponent

    _require(args, "field")
    manifest, (f,) = _field_manifest(args, "lp", [args.field])
    part = build_partition(f.grid)
    js = parse_range(args.j_range) if args.j_range else part.j_values
    bad = [j for j in js if not (part.j_min <= j <= part.j_max)]
    if bad:
        raise InvalidInputError(f"block indices {bad} outside {part.j_min}..{part.j_max}")
    p = parse_exponent(args.p)
    norms = block_norms(f, part, p, js)
    _emit({"p": p, "j_max": part.j_max, "norms": norms}, manifest, args.out)
    return 0


def cmd_besov(args) -> int:
    from .besov import dyadic_besov, vmo_indicator
    from .littlewood_paley import build_partition

    _require(args, "field", "alpha")
    manifest, (f,) = _field_manifest(args, "besov", [args.field])
    f = _select(f, args.component)
    part = build_partition(f.grid)
    rep = dyadic_besov(f, args.alpha, args.p, args.q, part, fd=args.fd).to_dict()
    if not args.tail:
        rep.pop("tail")
        rep.pop("is_cN")
    if args.vmo:
        dx = max(f.grid.spacing)
        eps = [e for e in (2 * dx, 4 * dx, 8 * dx, 16 * dx) if e < f.grid.domain_length / 4]
        rep["vmo"] = vmo_indicator(f, args.alpha, args.p, eps)
    _emit(rep, manifest, args.out)
    return 0


def cmd_mollify(args) -> int:
    from .mollifier import cet_commutator, commutator_rate, make_mollifier, mollify, rate_check_lemma22
    from .spectral import VectorField, lp_norm

    _require(args, "field")
    if args.eps is None and not args.rates:
        raise UsageError("mollify needs --eps, --rates or both")
    if args.eps is None and args.out:
        raise UsageError("--out needs --eps")
    paths = [args.field] + ([args.commutator] if args.commutator else [])
    manifest, fields = _field_manifest(args, "mollify", paths)
    f = fields[0]
    fs = _select(f, args.component or 1)
    gs = _select(fields[1], args.component or 1) if args.commutator else None
    report: dict = {}
    if args.eps is not None:
        m = make_mollifier(f.grid, args.eps)
        report.update({"epsilon": m.epsilon, "raw_mass": m.raw_mass})
        if args.out:
            if isinstance(f, VectorField):
                out = VectorField(f.grid, np.stack([mollify(c, m).values for c in f.components]))
            else:
                out = mollify(f, m)
            write_field(args.out, out)
        if gs is not None:
            comm = cet_commutator(fs, gs, m)
            report["commutator_norms"] = {str(p): lp_norm(comm, p) for p in (1.5, 2, 3)}
    if args.rates:
        _require(args, "alpha")
        eps = parse_floats(args.rates)
        report["rate_k0"] = rate_check_lemma22(fs, args.alpha, eps, k=0)
        if gs is not None:
            beta = args.alpha if args.beta is None else args.beta
            report["commutator_rate"] = commutator_rate(fs, gs, eps, args.alpha + beta)
    if args.report or not args.out:
        _emit(report, manifest, args.report)
    return 0


def cmd_flux(args) -> int:
    from .flux import FluxReport, flux_scan, mollifier_flux_decomposition
    from .mollifier import make_mollifier

    _require(args, "field", "alpha", "beta", "n_range")
    for name in ("alpha", "beta"):
        v = getattr(args, name)
        if not (0.0 < v < 1.0):
            raise InvalidInputError(f"{name}={v} outside the range (0, 1)")
    Ns = parse_range(args.n_range)
    if not Ns:
        raise ValidationError(f"empty N range {args.n_range!r}: nothing to scan")
    manifest, (u,) = _field_manifest(args, "flux", [args.field])
    from .littlewood_paley import build_partition

    part = build_partition(u.grid)
    rep = flux_scan(u, part, Ns, args.alpha, args.beta, args.vertical_axis, min_points=1)
    body = rep.to_dict()
    if args.mollifier:
        body["mollifier"] = []
        for e in parse_floats(args.mollifier):
            d = mollifier_flux_decomposition(u, make_mollifier(u.grid, e), args.vertical_axis)
            body["mollifier"].append({"epsilon": e, **d})
    _emit(body, manifest, args.report)
    if args.csv:
        emit_csv(args.csv, FluxReport.CSV_HEADER, rep.csv_rows(), manifest)
    worst = rep.checked_residual()
    if not worst <= RESIDUAL_TOL:
        raise ValidationError(f"decomposition identity residual {worst:.3g} exceeds {RESIDUAL_TOL}")
    return 0


def cmd_evolve(args) -> int:
    from .dynamics import EvolutionConfig, energy_balance_report, evolve

    _require(args, "init", "nu", "dt", "t_end", "out")
    manifest, (u0,) = _field_manifest(args, "evolve", [args.init])
    steps = args.t_end / args.dt
    if args.snapshots < 1 or abs(steps - round(steps)) > 1e-9 * max(1.0, steps) or round(steps) % args.snapshots:
        raise InvalidInputError("--snapshots must divide the number of steps t_end/dt")
    cfg = EvolutionConfig(
        args.nu, args.dt, args.t_end, dealias=args.dealias, M=args.M,
        snapshot_every=int(round(steps)) // args.snapshots,
    )
    traj = evolve(u0, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, (_, f) in enumerate(traj.snapshots):
        write_field(out / f"snap_{i:04d}.dfx", f)
    rows = [(t, e, d) for t, e, d in zip(traj.times, traj.energy, traj.dissipation)]
    emit_csv(out / "series.csv", ["t", "energy", "dissipation"], rows, manifest)
    report = {
        "config": cfg.to_dict(),
        "cutoff": traj.cutoff,
        "snapshot_times": [t for t, _ in traj.snapshots],
        "note": "verdicts concern the computed Galerkin trajectory only",
    }
    if len(traj.snapshots) >= 3:
        report["energy_balance"] = energy_balance_report(traj)
    emit_json(out / "report.json", report, manifest)
    return 0


def cmd_verify(args) -> int:
    from .verify import expand, run_suites

    names = [s.strip() for s in args.suite.split(",") if s.strip()]
    order = expand(names)
    results = run_suites(order, args.jobs)
    for r in results:
        sys.stderr.write(r.summary() + "\n")
    body = {"suites": []}
    for r in results:
        d = r.to_dict()
        if not args.timings:
            d.pop("runtime_s")
        body["suites"].append(d)
    body["passed"] = all(r.passed for r in results)
    manifest = RunManifest("verify", _params(args))
    _emit(body, manifest, args.out)
    return 0 if body["passed"] else 2


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dflx", description="Dyadic energy-flux diagnostics for periodic 3-D velocity fields.")
    p.add_argument("--version", action="version", version=f"dflx {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name: str, func, help_: str) -> argparse.ArgumentParser:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="key = value file; command-line flags override it")
        s.set_defaults(func=func)
        return s

    g = add("generate", cmd_generate, "synthesise a field and write it as DFX1")
    g.add_argument("--kind", choices=["lacunary", "ccfs", "tg", "abc", "random"])
    g.add_argument("--grid", type=int, default=64)
    g.add_argument("--domain-length", type=float, default=2 * math.pi)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--damping", action="store_true")
    g.add_argument("--phase-mode", choices=["random", "aligned"], default="random")
    g.add_argument("--horizontal-only", action="store_true")
    g.add_argument("--slope", type=float, default=-5.0 / 3.0, help="random: energy spectrum slope")
    g.add_argument("--rms", type=float, default=1.0, help="random: root-mean-square speed")
    g.add_argument("--amplitude", type=float, default=1.0, help="tg/abc amplitude")
    g.add_argument("--out")

    s = add("lp", cmd_lp, "per-block L^p norms")
    s.add_argument("--field")
    s.add_argument("--j-range")
    s.add_argument("--p", default="2")
    s.add_argument("--out")

    b = add("besov", cmd_besov, "dyadic Besov report")
    b.add_argument("--field")
    b.add_argument("--alpha", type=float)
    b.add_argument("--p", default="3")
    b.add_argument("--q", default="inf")
    b.add_argument("--component", type=int, choices=[1, 2, 3])
    b.add_argument("--fd", action="store_true", help="add the finite-difference seminorm")
    b.add_argument("--tail", action="store_true", help="add the top-shell tail and its verdict")
    b.add_argument("--vmo", action="store_true", help="add the VMO-type oscillation indicator")
    b.add_argument("--out")

    m = add("mollify", cmd_mollify, "mollification, commutators and rate fits")
    m.add_argument("--field")
    m.add_argument("--eps", type=float)
    m.add_argument("--commutator", help="second field G for (fG)^eps - f^eps G^eps")
    m.add_argument("--rates", help="comma-separated eps values for rate fits")
    m.add_argument("--alpha", type=float)
    m.add_argument("--beta", type=float)
    m.add_argument("--component", type=int, choices=[1, 2, 3])
    m.add_argument("--out", help="mollified field (DFX1)")
    m.add_argument("--report", help="JSON report")

    f = add("flux", cmd_flux, "dyadic flux scan and decomposition")
    f.add_argument("--field")
    f.add_argument("--alpha", type=float)
    f.add_argument("--beta", type=float)
    f.add_argument("--n-range")
    f.add_argument("--vertical-axis", type=int, default=3, choices=[1, 2, 3])
    f.add_argument("--mollifier", help="comma-separated eps values for the mollifier decomposition")
    f.add_argument("--report")
    f.add_argument("--csv")

    e = add("evolve", cmd_evolve, "Galerkin Euler / Navier-Stokes evolution")
    e.add_argument("--init")
    e.add_argument("--nu", type=float)
    e.add_argument("--dt", type=float)
    e.add_argument("--t-end", type=float)
    e.add_argument("--snapshots", type=int, default=10)
    e.add_argument("--dealias", choices=["spherical", "two-thirds"], default="spherical")
    e.add_argument("--M", type=int)
    e.add_argument("--out")

    v = add("verify", cmd_verify, "run verification suites")
    v.add_argument("--suite", default="identities", help="suite or group name(s), comma-separated")
    v.add_argument("--jobs", type=int, help="worker processes (default: DFLX_THREADS or 1)")
    v.add_argument("--timings", action="store_true", help="include runtimes in the JSON")
    v.add_argument("--out")
    return p


def _config_path(argv: Sequence[str]) -> Optional[str]:
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(
                ["generate", "lp", "besov", "mollify", "flux", "evolve", "verify"]))
        cfg = _config_path(argv)
        if cfg:
            subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
            _apply_config(subparsers.choices[args.command], read_config(cfg))
            args = parser.parse_args(argv)
        return int(args.func(args))
    except UsageError as exc:
        sys.stderr.write(f"dflx: usage error: {exc}\n")
        return 1
    except (InvalidInputError, FormatError) as exc:
        sys.stderr.write(f"dflx: error: {exc}\n")
        return 1
    except (ValidationError, GeneratorError, IntegrationError) as exc:
        sys.stderr.write(f"dflx: validation failed: {exc}\n")
        return 2
    except DflxError as exc:
        sys.stderr.write(f"dflx: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
