"""Command-line interface: ``fedosov validate|quantize|star|check CONFIG``.

Every command prints one JSON report on stdout.  Exit codes: 0 pass,
1 validation or check failure, 2 parse or I/O error, 3 internal invariant
violation (the report names the identity).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Any, Sequence

from fedosov import __version__
from fedosov.exactring import INF, ParseError, RingError, SingularError, format_poly, matrix_invert
from fedosov.pipeline import ConfigError, Job, JobConfig, load_config, run_suite
from fedosov.poissongeom import InvariantError, StructureError, check_skew

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_INVARIANT = 0, 1, 2, 3


def _report(command: str, cfg: JobConfig | None, passed: bool, **body: Any) -> dict:
    rep: dict = {"tool": "fedosov", "version": __version__, "command": command}
    if cfg is not None:
        rep["config"] = cfg.raw
    rep["pass"] = passed
    rep.update(body)
    return rep


def _emit(rep: dict, out=None) -> None:
    text = json.dumps(rep, indent=2, sort_keys=False, ensure_ascii=False)
    (out or sys.stdout).write(text + "\n")


def _validate(job: Job) -> tuple[bool, dict]:
    """Parsing, skewness, Jacobi and invertibility.  Returns ``(ok, payload)``."""
    pi = job.pi
    payload: dict = {}
    try:
        check_skew(pi, "Poisson matrix")
        skew = True
    except StructureError as exc:
        skew = False
        payload["error"] = str(exc)
    payload["skew"] = skew
    if not skew:
        return False, payload
    rep = job.jacobi()
    # in jet mode the residuals must also be known through the configured order
    jac_prec = min((v.prec for v in rep.residuals.values()), default=INF)
    jac_ok = rep.passed and jac_prec >= job.target
    payload["jacobi"] = {"pass": jac_ok,
                         "residuals": {",".join(map(str, k)): job.show(v) for k, v in rep.nonzero().items()}}
    if job.cfg.mode == "symplectic_coordinates":
        try:
            matrix_invert(pi)
            payload["invertible"] = True
        except (SingularError, RingError):
            payload["invertible"] = False
        return jac_ok and payload["invertible"], payload
    # explicit basis: nondegeneracy lives in phi, checked with the rest of the basis data
    if not jac_ok:
        return False, payload
    try:
        job.structure
        payload["explicit_data"] = True
    except StructureError as exc:
        payload["explicit_data"] = False
        payload["error"] = str(exc)
    ok = payload["explicit_data"]
    return ok, payload


def _dump(job: Job, targets: Sequence[str]) -> dict:
    return {t: job.dump(t) for t in targets}


def cmd_validate(job: Job, args) -> tuple[int, dict]:
    ok, payload = _validate(job)
    return (EXIT_OK if ok else EXIT_FAIL), _report("validate", job.cfg, ok, **payload)


def _quantize_payload(job: Job) -> dict:
    fc = job.connection
    return {
        "D_max": fc.D_max,
        "hbar_order": fc.N_hbar,
        "iterations": fc.iterations,
        "r_is_zero": fc.r.is_zero(),
        "r": job.weyl_json(fc.r),
        "alpha": job.weyl_json(fc.curv.alpha),
        "beta": job.weyl_json(fc.curv.beta),
        "checks": {**{k: v for k, v in fc.curv.checks.items()}, **fc.checks},
    }


def cmd_quantize(job: Job, args) -> tuple[int, dict]:
    ok, payload = _validate(job)
    if not ok:
        return EXIT_FAIL, _report("quantize", job.cfg, False, validation=payload)
    body = _quantize_payload(job)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                json.dump({"tool": "fedosov", "version": __version__, **body}, fh, indent=2,
                          ensure_ascii=False)
                fh.write("\n")
        except OSError as exc:
            raise ConfigError(f"cannot write {args.out}: {exc.strerror}") from None
        body["out"] = args.out
    return EXIT_OK, _report("quantize", job.cfg, True, **body)


def cmd_star(job: Job, args) -> tuple[int, dict]:
    a, b = job.parse(args.a), job.parse(args.b)
    ok, payload = _validate(job)
    if not ok:
        return EXIT_FAIL, _report("star", job.cfg, False, validation=payload)
    coeffs = job.star(a, b, args.order)
    return EXIT_OK, _report("star", job.cfg, True, a=format_poly(a), b=format_poly(b),
                            F=[job.show(c) for c in coeffs])


def cmd_check(job: Job, args) -> tuple[int, dict]:
    ok, payload = _validate(job)
    if not ok:
        return EXIT_FAIL, _report("check", job.cfg, False, validation=payload)
    order = job.cfg.hbar_order if args.order is None else args.order
    if order > job.cfg.hbar_order:
        raise ConfigError(f"order {order} exceeds hbar_order {job.cfg.hbar_order}")
    seed = job.cfg.seed if args.seed is None else args.seed
    outs = run_suite(job, args.suite, order, seed, samples=args.samples, max_degree=args.max_degree,
                     fault_order=args.fault_order)
    passed = all(o.passed for o in outs)
    return (EXIT_OK if passed else EXIT_FAIL), _report(
        "check", job.cfg, passed, suite=args.suite, order=order, seed=seed,
        checks=[o.to_json_obj() for o in outs])


COMMANDS = {"validate": cmd_validate, "quantize": cmd_quantize, "star": cmd_star, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedosov", description="Exact Fedosov deformation quantization.")
    p.add_argument("--version", action="version", version=f"fedosov {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("config", help="JSON job configuration")
        sp.add_argument("--dump", action="append", default=[], metavar="r|alpha|beta|tau:EXPR",
                        help="include an intermediate artifact in the report (repeatable)")
        sp.add_argument("--timing", action="store_true",
                        help="record wall-clock time (makes the report non-reproducible)")

    common(sub.add_parser("validate", help="parse and check the Poisson data"))
    q = sub.add_parser("quantize", help="solve for the flat connection")
    common(q)
    q.add_argument("--out", metavar="FILE", help="write r, alpha, beta and diagnostics here")
    s = sub.add_parser("star", help="expand a star b")
    common(s)
    s.add_argument("--a", required=True, metavar="EXPR")
    s.add_argument("--b", required=True, metavar="EXPR")
    s.add_argument("--order", type=int, metavar="N")
    c = sub.add_parser("check", help="run verification suites")
    common(c)
    c.add_argument("--suite", choices=["all", "assoc", "identities", "moyal"], default="all")
    c.add_argument("--order", type=int, metavar="N")
    c.add_argument("--seed", type=int, metavar="K")
    c.add_argument("--samples", type=int, default=10, help="associativity triples (default 10)")
    c.add_argument("--max-degree", type=int, default=3, help="sample monomial degree bound (default 3)")
    c.add_argument("--fault-order", type=int, metavar="K",
                   help="negative control: perturb F_K by d_1(a)*b before checking")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    cfg: JobConfig | None = None
    try:
        cfg = load_config(args.config)
        job = Job(cfg)
        code, rep = COMMANDS[args.command](job, args)
        if args.dump and code != EXIT_FAIL:
            rep["dump"] = _dump(job, args.dump)
    except (ConfigError, ParseError) as exc:
        code, rep = EXIT_PARSE, _report(args.command, cfg, False, error=str(exc))
    except InvariantError as exc:
        code, rep = EXIT_INVARIANT, _report(args.command, cfg, False, error=str(exc),
                                            identity=exc.identity)
    except (StructureError, SingularError, RingError) as exc:
        code, rep = EXIT_FAIL, _report(args.command, cfg, False, error=str(exc))
    if args.timing:
        rep["timing_s"] = round(time.perf_counter() - start, 3)
    rep["exit_code"] = code
    _emit(rep)
    return code


if __name__ == "__main__":
    sys.exit(main())
