"""Job configuration and the end-to-end pipeline behind the CLI.

A job is one JSON document.  In jet mode the configured order ``M`` is the
precision every reported result is exact to; the computation itself runs in
jets of order ``M + guard`` because each derivative of a jet loses one
degree of certainty.  Every check then requires its residual to vanish and
to be known through degree ``M``.
"""

from __future__ import annotations

import json
import multiprocessing
import os
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import jsonschema
from gmpy2 import mpq

from fedosov.exactring import (
    INF,
    BaseRing,
    Matrix,
    ParseError,
    Poly,
    RingError,
    SingularError,
    format_poly,
    matrix_invert,
    poly_parse,
)
from fedosov.fedosovsolver import FedosovConnection, SolverError, build_connection
from fedosov.poissongeom import (
    InvariantError,
    JacobiReport,
    PoissonStructure,
    StructureError,
    explicit_structure,
    jacobi_check,
    nabla,
    phi_invariance_residuals,
    symplectic_structure,
)
from fedosov.verifier import (
    AssocReport,
    CheckReport,
    SampleResidual,
    all_monomials,
    associativity_check,
    bracket_of,
    center_check,
    connection_star_fn,
    coboundary,
    f1_of,
    antisymmetric_part,
    first_order_check,
    gauge_equivalence_check,
    hochschild_cocycle_check,
    jacobi_f1_check,
    moyal_agreement_check,
    random_element,
    random_weyl,
    random_weyl_term,
    sample_tuples,
    transpose_cocycle_check,
    unit_check,
    with_fault,
)
from fedosov.weylcore import (
    Weyl,
    commutator,
    dbar,
    hbar_commutator,
    op_d,
    op_delta,
    op_partial,
    weyl_product,
)

WORKERS_ENV = "FEDOSOV_WORKERS"


class ConfigError(ValueError):
    """Malformed configuration or expression (exit code 2)."""


_POLY_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": ["string", "integer"]}}}

CONFIG_SCHEMA: dict = {
    "type": "object",
    "required": ["variables", "base", "hbar_order", "mode", "poisson"],
    "properties": {
        "variables": {"type": "array", "items": {"type": "string", "pattern": "^[A-Za-z_][A-Za-z0-9_]*$"},
                      "minItems": 1, "uniqueItems": True},
        "base": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["polynomial", "jet"]},
                "max_degree": {"type": "integer", "minimum": 1},
                "guard": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "hbar_order": {"type": "integer", "minimum": 0},
        "weyl_degree": {"type": "integer", "minimum": 0},
        "mode": {"enum": ["symplectic_coordinates", "explicit_basis"]},
        "poisson": {
            "type": "object",
            "properties": {"matrix": _POLY_MATRIX, "symplectic_form": _POLY_MATRIX},
            "additionalProperties": False,
        },
        "explicit": {
            "type": "object",
            "required": ["V", "phi", "C"],
            "properties": {
                "V": _POLY_MATRIX,
                "phi": _POLY_MATRIX,
                "omega": _POLY_MATRIX,
                "C": {"type": "array", "items": {"type": "array", "items": _POLY_MATRIX["items"]}},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class JobConfig:
    variables: tuple[str, ...]
    base_type: str
    max_degree: int | None
    guard: int | None
    hbar_order: int
    weyl_degree: int | None
    mode: str
    poisson: dict
    explicit: dict | None
    seed: int
    raw: dict = field(compare=False)

    @property
    def D_max(self) -> int:
        return 2 * self.hbar_order if self.weyl_degree is None else self.weyl_degree

    def guard_for(self, D_max: int) -> int:
        if self.guard is not None:
            return self.guard
        return D_max + 2 * self.hbar_order

    def work_ring(self, D_max: int | None = None) -> BaseRing:
        if self.base_type == "polynomial":
            return BaseRing.polynomial(self.variables)
        D = self.D_max if D_max is None else D_max
        return BaseRing.jets(self.variables, self.max_degree + self.guard_for(D))

    @property
    def target(self) -> float:
        """Precision every reported result must reach."""
        return INF if self.base_type == "polynomial" else self.max_degree


def parse_config(obj: Any) -> JobConfig:
    try:
        jsonschema.validate(obj, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"config {path or '<root>'}: {exc.message}") from None
    base = obj["base"]
    if base["type"] == "jet" and "max_degree" not in base:
        raise ConfigError("config base: jet mode needs max_degree")
    pois = obj["poisson"]
    if ("matrix" in pois) == ("symplectic_form" in pois):
        raise ConfigError("config poisson: give exactly one of matrix, symplectic_form")
    if obj["mode"] == "explicit_basis":
        if "explicit" not in obj:
            raise ConfigError("config: explicit_basis mode needs an explicit section")
        if "matrix" not in pois:
            raise ConfigError("config poisson: explicit_basis mode needs matrix")
    return JobConfig(
        variables=tuple(obj["variables"]),
        base_type=base["type"],
        max_degree=base.get("max_degree") if base["type"] == "jet" else None,
        guard=base.get("guard"),
        hbar_order=obj["hbar_order"],
        weyl_degree=obj.get("weyl_degree"),
        mode=obj["mode"],
        poisson=pois,
        explicit=obj.get("explicit"),
        seed=obj.get("seed", 0),
        raw=obj,
    )


def load_config(path: str) -> JobConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return parse_config(obj)


# -- parallel map ------------------------------------------------------------------------------

_TASK: tuple | None = None


def _run_task(i: int):
    fn, items = _TASK  # type: ignore[misc]
    return fn(items[i])


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def pool_map(fn: Callable, items: Sequence) -> list:
    """Order-preserving map; fans out to forked workers when ``FEDOSOV_WORKERS > 1``."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1 or "fork" not in multiprocessing.get_all_start_methods():
        return [fn(x) for x in items]
    global _TASK
    _TASK = (fn, items)
    try:
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            return pool.map(_run_task, range(len(items)))
    finally:
        _TASK = None


# -- the job ------------------------------------------------------------------------------------

class Job:
    """Lazily built structure and connection for one configuration."""

    def __init__(self, cfg: JobConfig, D_max: int | None = None):
        self.cfg = cfg
        self.D_max = cfg.D_max if D_max is None else D_max
        self.ring = cfg.work_ring(self.D_max)
        self.target = cfg.target
        self._pi: Matrix | None = None
        self._structure: PoissonStructure | None = None
        self._fc: FedosovConnection | None = None
        self._star = None

    # parsing

    def parse(self, text: str | int) -> Poly:
        try:
            return poly_parse(str(text), self.ring)
        except ParseError as exc:
            raise ConfigError(f"cannot parse {text!r}: {exc}") from None

    def parse_matrix(self, rows: list, name: str) -> Matrix:
        mat = [[self.parse(e) for e in row] for row in rows]
        if not mat or any(len(r) != len(mat) for r in mat):
            raise ConfigError(f"{name} must be a non-empty square matrix")
        return mat

    def show(self, p: Poly) -> str:
        """Print a result modulo the configured jet order."""
        if self.cfg.base_type == "jet":
            p = p.truncate(self.cfg.max_degree)
        return format_poly(p)

    # stages

    @property
    def pi(self) -> Matrix:
        if self._pi is None:
            pois = self.cfg.poisson
            m = len(self.cfg.variables)
            if "matrix" in pois:
                pi = self.parse_matrix(pois["matrix"], "poisson.matrix")
            else:
                form = self.parse_matrix(pois["symplectic_form"], "poisson.symplectic_form")
                if len(form) != m:
                    raise ConfigError(f"symplectic_form must be {m}x{m}")
                try:
                    pi = matrix_invert(form)
                except (SingularError, RingError) as exc:
                    raise StructureError(f"symplectic form is not invertible: {exc}") from exc
            if len(pi) != m:
                raise ConfigError(f"poisson matrix must be {m}x{m}")
            self._pi = pi
        return self._pi

    def jacobi(self) -> JacobiReport:
        return jacobi_check(self.pi)

    @property
    def structure(self) -> PoissonStructure:
        if self._structure is None:
            if self.cfg.mode == "symplectic_coordinates":
                self._structure = symplectic_structure(self.pi)
            else:
                ex = self.cfg.explicit
                V = [[self.parse(e) for e in row] for row in ex["V"]]
                phi = self.parse_matrix(ex["phi"], "explicit.phi")
                omega = self.parse_matrix(ex["omega"], "explicit.omega") if "omega" in ex else None
                C = [[[self.parse(e) for e in ck] for ck in row] for row in ex["C"]]
                self._structure = explicit_structure(self.pi, V, phi, omega, C)
        return self._structure

    @property
    def connection(self) -> FedosovConnection:
        if self._fc is None:
            try:
                self._fc = build_connection(self.structure, self.cfg.hbar_order, self.D_max)
            except SolverError as exc:
                raise InvariantError("fixed point contraction", str(exc)) from exc
        return self._fc

    @property
    def star_fn(self):
        if self._star is None:
            self._star = connection_star_fn(self.connection)
        return self._star

    def star(self, a: Poly, b: Poly, order: int | None = None) -> list[Poly]:
        N = self.cfg.hbar_order if order is None else order
        if N > self.cfg.hbar_order:
            raise ConfigError(f"order {N} exceeds hbar_order {self.cfg.hbar_order}")
        return self.star_fn(a, b, N)

    def weyl_json(self, w: Weyl) -> list[dict]:
        out = []
        for t in w.to_json_obj():
            if self.cfg.base_type == "jet":
                key = (tuple(t["y"]), sum(1 << (i - 1) for i in t["forms"]), t["hbar"])
                c = w.terms[key].truncate(self.cfg.max_degree)
                if c.is_zero():
                    continue
                t["coeff"] = format_poly(c)
            out.append(t)
        return out

    def dump(self, what: str) -> Any:
        fc = self.connection
        if what == "r":
            return self.weyl_json(fc.r)
        if what == "alpha":
            return self.weyl_json(fc.curv.alpha)
        if what == "beta":
            return self.weyl_json(fc.curv.beta)
        if what.startswith("tau:"):
            return self.weyl_json(fc.tau(self.parse(what[4:])))
        raise ConfigError(f"unknown dump target {what!r}; use r, alpha, beta or tau:<expr>")

    def rng(self, salt: int = 0) -> random.Random:
        return random.Random(self.cfg.seed * 1000003 + salt)


# -- suites ------------------------------------------------------------------------------------

@dataclass
class Outcome:
    name: str
    passed: bool
    payload: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {"name": self.name, "pass": self.passed, **self.payload}


def _from_report(rep: CheckReport | AssocReport, name: str | None = None) -> Outcome:
    """Summarize a verifier report: sample count plus the first few failing samples."""
    obj = rep.to_json_obj()
    for k in ("name", "pass", "samples"):
        obj.pop(k, None)
    failing = [s.to_json_obj() for s in rep.samples if any(not r.is_zero() for r in s.residuals)]
    obj["sample_count"] = len(rep.samples)
    obj["failing"] = failing[:5]
    return Outcome(name or getattr(rep, "name", "associativity"), rep.passed, obj)


def _weyl_check(name: str, pairs: list[tuple[str, Weyl]], target: float) -> Outcome:
    """Each entry is a residual element that must vanish to precision ``target``."""
    bad = [label for label, w in pairs if not w.is_zero()]
    prec = min((w.xprec for _, w in pairs), default=INF)
    ok = not bad and prec >= target
    payload: dict = {"samples": len(pairs), "failed": bad[:5]}
    if prec != INF:
        payload["prec"] = int(prec)
    if target != INF:
        payload["target_prec"] = int(target)
    return Outcome(name, ok, payload)


def assoc_suite(job: Job, order: int, seed: int, samples: int = 10, max_degree: int = 3,
                fault_order: int | None = None) -> Outcome:
    fn = job.star_fn
    if fault_order is not None:
        if not 0 <= fault_order <= order:
            raise ConfigError(f"fault order must lie in 0..{order}")
        fn = with_fault(fn, fault_order)
    triples = sample_tuples(job.ring, seed, samples, 3, max_degree)
    rep = associativity_check(fn, triples, order, seed, pool_map, job.target)
    out = _from_report(rep, "associativity")
    out.payload["first_failing_order"] = rep.first_failing_order()
    if fault_order is not None:
        out.payload["fault_order"] = fault_order
    return out


def moyal_suite(job: Job, order: int, max_degree: int = 4) -> Outcome:
    pi = job.pi
    if any(not (p.is_constant() and p.exact) for row in pi for p in row):
        return Outcome("moyal_agreement", False, {"error": "Poisson matrix is not constant"})
    mons = all_monomials(job.ring, max_degree)
    pairs = [(a, b) for a in mons for b in mons]
    rep = moyal_agreement_check(job.star_fn, pi, pairs, order, pool_map, job.target)
    out = _from_report(rep, "moyal_agreement")
    return out


def structure_suite(job: Job) -> list[Outcome]:
    P = job.structure
    fc = job.connection
    outs = [Outcome(f"curvature: {k}", v) for k, v in fc.curv.checks.items()]
    outs += [Outcome(f"connection: {k}", v) for k, v in fc.checks.items()]
    inv = phi_invariance_residuals(P)
    bad = [list(k) for k, v in inv.items() if not v.is_zero()]
    prec = min((v.prec for v in inv.values()), default=INF)
    outs.append(Outcome("φ-invariance", not bad and prec >= job.target,
                        {"failed": bad[:5], "prec": None if prec == INF else int(prec)}))
    outs.append(Outcome("r is zero" if fc.r.is_zero() else "r is nonzero", True,
                        {"r_terms": len(fc.r.nonzero_terms()), "iterations": fc.iterations}))
    return outs


def weyl_suite(job: Job, count: int = 20) -> list[Outcome]:
    """Identities of the Weyl complex and the connection on random elements."""
    P, fm, ring, n, T = job.structure, job.structure.fm, job.ring, job.structure.n, job.target
    fc = job.connection
    rng = job.rng(1)
    homot, koszul, dd, pp, dder, nder, cent, super_jac = [], [], [], [], [], [], [], []
    for i in range(count):
        p, q = rng.randint(0, 3), rng.randint(0, n)
        x = random_weyl_term(ring, n, rng, p, q, rng.randint(0, 1))
        homot.append((f"#{i}", op_partial(op_d(x, fm), fm) + op_d(op_partial(x, fm), fm)
                      - x.scale(p + q)))
        if p + q:
            koszul.append((f"#{i}", op_d(op_delta(x, fm), fm) + op_delta(op_d(x, fm), fm) - x))
        u = random_weyl(ring, n, rng)
        dd.append((f"#{i}", op_d(op_d(u, fm), fm)))
        pp.append((f"#{i}", op_partial(op_partial(u, fm), fm)))
        a = random_weyl(ring, n, rng, parity=i % 2, max_y=2)
        b = random_weyl(ring, n, rng, max_y=2)
        sign = -1 if i % 2 else 1
        for label, op, out in (("d", lambda w: op_d(w, fm), dder), ("∇", lambda w: nabla(w, P), nder)):
            lhs = op(weyl_product(a, b, fm))
            rhs = weyl_product(op(a), b, fm) + weyl_product(a, op(b), fm).scale(sign)
            out.append((f"#{i}", lhs - rhs))
        f = Weyl.base(random_element(ring, rng), n)
        cent.append((f"#{i}", commutator(f, u, fm)))
        c = random_weyl(ring, n, rng, terms=2, max_y=2, max_forms=0)
        a0 = random_weyl(ring, n, rng, terms=2, max_y=2, max_forms=0)
        b0 = random_weyl(ring, n, rng, terms=2, max_y=2, max_forms=0)
        jac = (commutator(a0, commutator(b0, c, fm), fm) - commutator(commutator(a0, b0, fm), c, fm)
               - commutator(b0, commutator(a0, c, fm), fm))
        super_jac.append((f"#{i}", jac))
    outs = [
        _weyl_check("homotopy (∂d+d∂)x=(p+q)x", homot, T),
        _weyl_check("(dδ+δd)a=a off (0,0)", koszul, T),
        _weyl_check("d²=0", dd, T),
        _weyl_check("∂²=0", pp, T),
        _weyl_check("d derivation law", dder, T),
        _weyl_check("∇ derivation law", nder, T),
        _weyl_check("centrality [f,a]=0", cent, T),
        _weyl_check("Jacobi for commutator", super_jac, T),
        _weyl_check("d=(1/ħ)ad d̄", [(f"#{i}", op_d(w, fm) - hbar_commutator(dbar(n, ring), w, fm))
                                   for i, w in enumerate(random_weyl(ring, n, rng) for _ in range(5))],
                    T),
    ]
    # connection-level identities
    b = fc.curv.b
    ad_b = []
    for i in range(5):
        w = random_weyl(ring, n, rng, max_forms=0, max_y=2)
        lhs = hbar_commutator(b, w, fm)
        rhs = nabla(nabla(w, P), P) + op_d(nabla(w, P), fm) + nabla(op_d(w, fm), P)
        ad_b.append((f"#{i}", lhs - rhs))
    outs.append(_weyl_check("(1/ħ)ad b=∇²+d∇+∇d on samples", ad_b, T))
    flat, conj, inv = [], [], []
    for i in range(count):
        f = random_element(ring, rng)
        flat.append((format_poly(f), fc.D(fc.tau(f))))
        w = random_weyl(ring, n, rng, max_y=2).truncate(job.D_max)
        w = Weyl(w.n, w.ring, w.terms, job.D_max)
        conj.append((f"#{i}", op_d(fc.Q(w), fm) - fc.Q(fc.D(w))))
        inv.append((f"#{i}", fc.Q(fc.Q_inverse(w)) - w))
    outs += [
        _weyl_check("flat sections D(τa)=0", flat, T),
        _weyl_check("conjugation d∘Q=Q∘D", conj, T),
        _weyl_check("Q(Q⁻¹w)=w", inv, T),
    ]
    return outs


def deformation_suite(job: Job, seed: int) -> list[Outcome]:
    """First-order law, unit and center, Jacobi of F_1 and the Hochschild checks."""
    fn = job.star_fn
    N, T, ring = job.cfg.hbar_order, job.target, job.ring
    outs = []
    pairs = [t for t in sample_tuples(ring, seed + 1, 20, 2, 3)]
    if N >= 1:
        outs.append(_from_report(first_order_check(fn, job.pi, pairs, T)))
    rng = job.rng(2)
    elements = [random_element(ring, rng) for _ in range(10)]
    outs.append(_from_report(unit_check(fn, elements, N, T)))
    outs.append(_from_report(center_check(fn, [ring.const(mpq(1, 2)), ring.const(-3)],
                                          elements[:3], N, T)))
    triples = sample_tuples(ring, seed + 2, 5, 3, 2)
    if N >= 1:
        F1 = f1_of(fn)
        outs.append(_from_report(jacobi_f1_check(F1, triples, T)))
        A = antisymmetric_part(F1)
        checks = [("hochschild_cocycle[bracket]", hochschild_cocycle_check(bracket_of(job.pi), triples)),
                  ("hochschild_cocycle[F1]", hochschild_cocycle_check(A, triples)),
                  ("transpose_cocycle[F1]", transpose_cocycle_check(A, triples))]
        for name, rep in checks:
            rep.target = T
            outs.append(_from_report(rep, name))
        # second order, so its coboundary is nonzero (a derivation's would vanish)
        q1 = lambda p: p.diff(0).diff(0)  # noqa: E731
        g = gauge_equivalence_check(A, coboundary(A, q1), q1, pairs[:5])
        g.target = T
        outs.append(_from_report(g))
    return outs


def stability_suite(job: Job, seed: int, samples: int = 10, max_degree: int = 3) -> Outcome:
    """F_0..F_N unchanged when D_max grows by two."""
    wider = Job(job.cfg, job.D_max + 2)
    pairs = sample_tuples(job.ring, seed, samples, 2, max_degree)
    diffs = []
    prec = INF
    for a, b in pairs:
        got = job.star(a, b)
        again = wider.star(wider.parse(format_poly(a)), wider.parse(format_poly(b)))
        for k, (u, v) in enumerate(zip(got, again)):
            su, sv = job.show(u), wider.show(v)
            prec = min(prec, u.prec, v.prec)
            if su != sv:
                diffs.append({"a": format_poly(a), "b": format_poly(b), "k": k, "F": su, "F'": sv})
    ok = not diffs and prec >= job.target
    payload = {"D_max": job.D_max, "D_max_refined": wider.D_max, "pairs": len(pairs),
               "differences": diffs[:5]}
    if prec != INF:
        payload["prec"] = int(prec)
    return Outcome("truncation stability", ok, payload)


def run_suite(job: Job, suite: str, order: int, seed: int, *, samples: int = 10,
              max_degree: int = 3, fault_order: int | None = None) -> list[Outcome]:
    outs: list[Outcome] = []
    if suite in ("all", "identities"):
        outs += structure_suite(job)
        outs += weyl_suite(job)
        outs += deformation_suite(job, seed)
        outs.append(stability_suite(job, seed, samples, max_degree))
    if suite in ("all", "moyal"):
        constant = all(p.is_constant() and p.exact for row in job.pi for p in row)
        if constant:
            outs.append(moyal_suite(job, order))
        elif suite == "moyal":
            outs.append(Outcome("moyal_agreement", False, {"error": "Poisson matrix is not constant"}))
    if suite in ("all", "assoc"):
        outs.append(assoc_suite(job, order, seed, samples, max_degree, fault_order))
    return outs
