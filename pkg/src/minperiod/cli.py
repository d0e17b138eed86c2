"""Command line front end: ``bound``, ``verify``, ``hunt`` and ``analytic``.

Exit codes: 0 validated / passed, 2 search exhausted without a validated
certificate, 3 verification failure, 4 configuration error.

A run can be described by an INI file (``--config``) whose ``[run]``
section mirrors the flags and whose optional ``[system]`` section defines
a custom polynomial system::

    [run]
    system = henon_heiles
    mode = lie_span
    d_lib = 2
    c_hi = 2000
    c_lo = 100

    [system]            ; only for custom systems
    variables = x y
    equations = -y
                x
    symmetry = -1 -1
    time_scale = 1
    constraint = 1 - x^2 - y^2
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .certify import (
    CertificateFormatError,
    ValidationError,
    attempt_certificate,
    finalize,
    loads_certificate,
    verify_text,
    write_certificate,
)
from .polycore import PolynomialParseError
from .sdpengine import NoValidatedStart, SearchConfig, SearchStep, minimize_C
from .sosbuilder import AssemblyError, DegreeConfig, assemble_identity, build_library
from .systems import BUILTINS, SystemSpec, analytic_lorenz_check, get_system, system_from_config

EXIT_OK, EXIT_NO_CERT, EXIT_VERIFY, EXIT_CONFIG = 0, 2, 3, 4

log = logging.getLogger("minperiod")

# Degrees and C bracket used when neither flags nor config give them.
DEFAULTS = {
    "lorenz_rescaled": dict(mode="parity", d_lib=1, d_a=4, d_b=2, c_hi="100000", c_lo="100"),
    "lorenz": dict(mode="parity", d_lib=1, d_a=4, d_b=2, c_hi="10000", c_lo="1"),
    "henon_heiles": dict(mode="lie_span", d_lib=2, c_hi="2000", c_lo="100"),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    system: SystemSpec | None = None
    degrees: DegreeConfig | None = None
    search: SearchConfig | None = None
    out: Path | None = None
    seed: int = 0
    prune_threshold: float = 1e-7
    prune_rounds: int = 0
    extras: dict = field(default_factory=dict)


def _fraction(text, what) -> Fraction:
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{what}: not a rational number: {text!r}") from None


def _read_ini(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str
    try:
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    return cp


def _system_from_section(sec, name: str) -> SystemSpec:
    eqs = [ln.strip() for ln in sec.get("equations", "").splitlines() if ln.strip()]
    if not eqs:
        raise ConfigError("[system] needs 'equations'")
    params = {}
    for item in sec.get("parameters", "").split():
        k, _, v = item.partition("=")
        params[k] = v
    sym = sec.get("symmetry", "").split() or None
    try:
        return system_from_config(
            eqs,
            variables=sec.get("variables", "").split() or None,
            symmetry=sym,
            time_scale=sec.get("time_scale", "1"),
            constraint=sec.get("constraint", "").strip() or None,
            name=name,
            parameters=params,
            conserved=sec.get("conserved", "").strip() or None,
        )
    except ValueError as exc:  # includes polynomial parse errors
        raise ConfigError(f"[system]: {exc}") from None


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge config file and flags (flags win) into a RunConfig."""
    run: dict = {}
    cp = None
    if getattr(args, "config", None):
        cp = _read_ini(args.config)
        if cp.has_section("run"):
            run.update(dict(cp["run"]))
    flag_map = {"system": "system", "mode": "mode", "d_lib": "d_lib", "da": "d_a", "db": "d_b",
                "drho": "d_rho", "c_hi": "c_hi", "c_lo": "c_lo", "rel_tol": "rel_tol", "seed": "seed",
                "out": "out", "prune_rounds": "prune_rounds", "prune_threshold": "prune_threshold",
                "max_iter": "max_iter"}
    for attr, key in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            run[key] = val
    name = run.get("system", "lorenz_rescaled")
    if cp is not None and cp.has_section("system"):
        system = _system_from_section(cp["system"], name)
    elif name in BUILTINS:
        system = get_system(name)
    else:
        raise ConfigError(f"unknown system {name!r}; give a [system] section or one of {sorted(BUILTINS)}")
    for k, v in DEFAULTS.get(name, {}).items():
        run.setdefault(k, v)
    mode = run.get("mode", "parity")
    if "d_lib" not in run:
        raise ConfigError("library degree missing: pass --dg (parity) or --dw (lie_span)")
    try:
        d_lib = int(run["d_lib"])
        if mode == "lie_span" and not any(k in run for k in ("d_a", "d_b")):
            preset = DegreeConfig.lie_span_preset(d_lib)
            d_rho = int(run["d_rho"]) if "d_rho" in run else preset.d_rho
            degrees = DegreeConfig("lie_span", d_lib, preset.d_a, preset.d_b,
                                   d_rho if system.constraint is not None else None)
        else:
            if "d_a" not in run or "d_b" not in run:
                raise ConfigError("need --da and --db")
            d_rho = run.get("d_rho")
            if system.constraint is not None and d_rho is None:
                d_rho = 2 * d_lib - 1 if mode == "lie_span" else int(run["d_a"]) - 1
            degrees = DegreeConfig(mode, d_lib, int(run["d_a"]), int(run["d_b"]),
                                   int(d_rho) if system.constraint is not None else None)
        search = SearchConfig(
            _fraction(run.get("c_hi", "100000"), "c_hi"),
            _fraction(run.get("c_lo", "1"), "c_lo"),
            rel_tol=float(run.get("rel_tol", 1e-4)),
            max_iter=int(run.get("max_iter", 60)),
            prune_threshold=float(run.get("prune_threshold", 1e-7)),
            prune_rounds=int(run.get("prune_rounds", 5 if mode == "lie_span" else 0)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    out = Path(run["out"]) if run.get("out") else None
    return RunConfig(args.command, system, degrees, search, out, int(run.get("seed", 0)),
                     search.prune_threshold, search.prune_rounds)


# subcommands ----------------------------------------------------------------------
def run_bound(cfg: RunConfig, progress=None):
    """Library -> identity -> bisection with exact validation -> bound + file."""
    system, degrees, search = cfg.system, cfg.degrees, cfg.search
    library = build_library(system, degrees)
    base = assemble_identity(system, library, degrees, search.C_hi)

    def attempt(C):
        return attempt_certificate(base.with_C(C), search.prune_rounds, search.prune_threshold)

    result = minimize_C(attempt, search, progress=progress)
    bound = finalize(result.certificate, system)
    if cfg.out is not None:
        write_certificate(result.certificate, cfg.out)
    return bound, result


def table_row(bound) -> str:
    c = bound.C
    return (f"| {bound.system} | {bound.degrees} | C = {c} (~{float(c):.8g}) | "
            f"{float(bound.time_scale * 2):g}*pi/sqrt(C) >= {bound.render(4)} |")


def run_verify(path) -> tuple[bool, list[str]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        return False, [f"verify: FAIL (io) {exc}"]
    rep = verify_text(text)
    return rep.passed, rep.lines()


def run_hunt(cert_path, n_starts=100, seed=0, section=(3, 0.0), box=1.0, n_keep=6) -> list[str]:
    from .orbitlab import IntegrationError, NoConvergence, prime_period, refine_orbit, residual_scan, same_orbit

    text = Path(cert_path).read_text()
    rep = verify_text(text)
    if not rep.passed:
        raise ValidationError(rep.stage, rep.message)
    identity, y, digest = loads_certificate(text)
    from .certify import RationalCertificate

    cert = RationalCertificate(tuple(y), identity, identity.C, digest)
    system = identity.system
    bound = rep.bound.approx
    seeds = residual_scan(cert, system, section=section, n_starts=n_starts, box=box, seed=seed, n_keep=n_keep)
    lines = [f"{len(seeds)} seeds from residual minimization on x{section[0] + 1} = {section[1]}"]
    found = []
    for s in seeds:
        if not s.T == s.T:  # nan: never returned to the section
            continue
        try:
            orb = refine_orbit(system, s.x0, s.T, section=section)
        except (NoConvergence, IntegrationError) as exc:
            lines.append(f"  seed residual={s.residual:.3e}: refinement failed ({exc})")
            continue
        orb.residual = s.residual
        orb = prime_period(system, orb, section=section)
        if not any(same_orbit(orb, o, system) for o in found):
            found.append(orb)
    found.sort(key=lambda o: o.T)
    for o in found:
        lines.append("  " + o.report(system.names, bound))
    return lines


def run_analytic(sigma, rho, beta) -> list[str]:
    res = analytic_lorenz_check(sigma, rho, beta)
    return [
        f"sigma={sigma} rho={rho} beta={beta}",
        f"C g^2 - (L g)^2 + L V = {res.residual}  (expected {res.expected}): {'PASS' if res.passed else 'FAIL'}",
        f"C = {res.C}; symmetric orbits have T >= 2*pi/sqrt(C) ~ {res.bound:.6f}",
    ]


# argument parsing -------------------------------------------------------------------
def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="minperiod", description="Validated lower bounds on periods of polynomial ODEs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="search for the smallest validated C")
    b.add_argument("--config")
    b.add_argument("--system")
    b.add_argument("--mode", choices=("parity", "lie_span"))
    g = b.add_mutually_exclusive_group()
    g.add_argument("--dg", dest="d_lib", type=int, help="library degree (parity mode)")
    g.add_argument("--dw", dest="d_lib", type=int, help="library degree (lie_span mode)")
    b.add_argument("--da", type=int)
    b.add_argument("--db", type=int)
    b.add_argument("--drho", type=int)
    b.add_argument("--c-hi", dest="c_hi")
    b.add_argument("--c-lo", dest="c_lo")
    b.add_argument("--rel-tol", dest="rel_tol", type=float)
    b.add_argument("--max-iter", dest="max_iter", type=int)
    b.add_argument("--prune-rounds", dest="prune_rounds", type=int)
    b.add_argument("--prune-threshold", dest="prune_threshold", type=float)
    b.add_argument("--seed", type=int)
    b.add_argument("--out", help="certificate file to write")

    v = sub.add_parser("verify", help="re-check a certificate file from scratch")
    v.add_argument("certificate")

    h = sub.add_parser("hunt", help="look for short orbits near the certificate's zero set")
    h.add_argument("certificate")
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--n-starts", dest="n_starts", type=int, default=100)
    h.add_argument("--section-var", dest="section_var", type=int, default=4, help="1-based index")
    h.add_argument("--section-value", dest="section_value", type=float, default=0.0)
    h.add_argument("--box", type=float, default=1.0)

    a = sub.add_parser("analytic", help="check the closed-form Lorenz certificate")
    a.add_argument("--sigma", default="10")
    a.add_argument("--rho", default="28")
    a.add_argument("--beta", default="8/3")
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "analytic":
            try:
                lines = run_analytic(_fraction(args.sigma, "sigma"), _fraction(args.rho, "rho"),
                                     _fraction(args.beta, "beta"))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            print("\n".join(lines))
            return EXIT_OK
        if args.command == "verify":
            ok, lines = run_verify(args.certificate)
            print("\n".join(lines))
            return EXIT_OK if ok else EXIT_VERIFY
        if args.command == "hunt":
            try:
                lines = run_hunt(args.certificate, args.n_starts, args.seed,
                                 (args.section_var - 1, args.section_value), args.box)
            except (ValidationError, CertificateFormatError) as exc:
                print(f"hunt: certificate failed verification: {exc}")
                return EXIT_VERIFY
            print("\n".join(lines))
            return EXIT_OK

        cfg = build_run_config(args)

        def progress(step: SearchStep):
            print(step.line(), file=sys.stderr, flush=True)

        try:
            bound, result = run_bound(cfg, progress)
        except NoValidatedStart as exc:
            print(f"bound: {exc}")
            return EXIT_NO_CERT
        except ValidationError as exc:
            print(f"bound: refused to issue a bound: {exc}")
            return EXIT_NO_CERT
        print(table_row(bound))
        print(f"bracket: validated C = {result.C_star}, failed C = {result.C_bad}, "
              f"{len(result.history)} solves")
        if cfg.out is not None:
            print(f"certificate written to {cfg.out}")
        return EXIT_OK
    except (ConfigError, AssemblyError, PolynomialParseError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
