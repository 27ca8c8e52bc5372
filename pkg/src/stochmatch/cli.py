"""Command-line front end: instance files, LP solving, evaluation, verification.

Exit codes: 0 success, 1 a check failed, 2 usage/config error,
3 numerical or resource error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import oracles
from .errors import InvalidParameterError, ResourceError, SolverError, StochMatchError
from .instances import (Arrival, Edge, EdgeArrivalInstance, GeneralArrival,
                        GeneralVertexArrivalInstance, Scenario, VertexArrivalInstance,
                        gen_correlation, gen_random, gen_tightness, validate)
from .relaxation import solve_instance
from .rounding_edge import build_edge_schedule, monte_carlo_edge
from .rounding_vertex import build_general_schedule, build_schedule, monte_carlo

log = logging.getLogger("stochmatch")

FORMAT_VERSION = 1
EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

REPORT_HEADER = ("section", "name", "value", "stderr")
LP_HEADER = ("variable", "weight", "value")
VERIFY_HEADER = ("instance", "kind", "check", "worst_slack", "tolerance", "passed", "detail")


class InstanceFormatError(StochMatchError, ValueError):
    pass


# -- instance files ----------------------------------------------------------

def _num(x) -> str:
    return repr(float(x))


def instance_to_dict(instance) -> dict:
    if isinstance(instance, VertexArrivalInstance):
        return {"format_version": FORMAT_VERSION, "kind": "vertex",
                "offline_count": instance.offline_count,
                "arrivals": [{"probability": _num(a.probability),
                              "edges": [{"offline": u, "weight": _num(w)} for u, w in a.edges]}
                             for a in instance.arrivals]}
    if isinstance(instance, EdgeArrivalInstance):
        return {"format_version": FORMAT_VERSION, "kind": "edge",
                "offline_a_count": instance.offline_a_count,
                "offline_b_count": instance.offline_b_count,
                "edges": [{"a": e.a, "b": e.b, "probability": _num(e.probability),
                           "weight": _num(e.weight)} for e in instance.edges]}
    if isinstance(instance, GeneralVertexArrivalInstance):
        return {"format_version": FORMAT_VERSION, "kind": "general",
                "offline_count": instance.offline_count,
                "arrivals": [{"neighbors": list(a.neighbors),
                              "scenarios": [{"mass": _num(s.mass),
                                             "weights": [_num(w) for w in s.weights]}
                                            for s in a.scenarios]}
                             for a in instance.arrivals]}
    raise TypeError(f"unsupported instance type {type(instance).__name__}")


def _get(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise InstanceFormatError(f"{where}: missing field {key!r}")
    return obj[key]


def _float(obj, key, where):
    raw = _get(obj, key, where)
    if isinstance(raw, bool) or not isinstance(raw, (str, int, float)):
        raise InstanceFormatError(f"{where}.{key}: expected a decimal string, got {raw!r}")
    try:
        return float(raw)
    except ValueError:
        raise InstanceFormatError(f"{where}.{key}: {raw!r} is not a decimal number") from None


def _int(obj, key, where):
    raw = _get(obj, key, where)
    if isinstance(raw, str) and raw.strip().lstrip("-").isdigit():
        raw = int(raw)
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise InstanceFormatError(f"{where}.{key}: expected an integer, got {raw!r}")
    return raw


def _list(obj, key, where):
    raw = _get(obj, key, where)
    if not isinstance(raw, list):
        raise InstanceFormatError(f"{where}.{key}: expected a list")
    return raw


def instance_from_dict(doc: dict):
    """Parse and validate an instance document; errors name the offending field."""
    if not isinstance(doc, dict):
        raise InstanceFormatError("instance document must be a JSON object")
    version = _get(doc, "format_version", "document")
    if version != FORMAT_VERSION:
        raise InstanceFormatError(f"format_version: unsupported value {version!r}")
    kind = _get(doc, "kind", "document")
    if kind == "vertex":
        arrivals = []
        for t, a in enumerate(_list(doc, "arrivals", "document")):
            at = f"arrivals[{t}]"
            edges = tuple((_int(e, "offline", f"{at}.edges[{j}]"),
                           _float(e, "weight", f"{at}.edges[{j}]"))
                          for j, e in enumerate(_list(a, "edges", at)))
            arrivals.append(Arrival(_float(a, "probability", at), edges))
        inst = VertexArrivalInstance(_int(doc, "offline_count", "document"), tuple(arrivals))
    elif kind == "edge":
        edges = tuple(Edge(_int(e, "a", f"edges[{k}]"), _int(e, "b", f"edges[{k}]"),
                           _float(e, "probability", f"edges[{k}]"),
                           _float(e, "weight", f"edges[{k}]"))
                      for k, e in enumerate(_list(doc, "edges", "document")))
        inst = EdgeArrivalInstance(_int(doc, "offline_a_count", "document"),
                                   _int(doc, "offline_b_count", "document"), edges)
    elif kind == "general":
        arrivals = []
        for t, a in enumerate(_list(doc, "arrivals", "document")):
            at = f"arrivals[{t}]"
            nbrs = tuple(_int({"n": u}, "n", f"{at}.neighbors[{j}]")
                         for j, u in enumerate(_list(a, "neighbors", at)))
            scen = []
            for i, s in enumerate(_list(a, "scenarios", at)):
                si = f"{at}.scenarios[{i}]"
                ws = tuple(_float({"w": w}, "w", f"{si}.weights[{j}]")
                           for j, w in enumerate(_list(s, "weights", si)))
                scen.append(Scenario(_float(s, "mass", si), ws))
            arrivals.append(GeneralArrival(nbrs, tuple(scen)))
        inst = GeneralVertexArrivalInstance(_int(doc, "offline_count", "document"),
                                            tuple(arrivals))
    else:
        raise InstanceFormatError(f"kind: unknown model kind {kind!r}")
    problems = validate(inst)
    if problems:
        raise InstanceFormatError("; ".join(problems))
    return inst


def save_instance(instance, path) -> None:
    text = json.dumps(instance_to_dict(instance), indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def load_instance(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") \
            from None
    return instance_from_dict(doc)


# -- configuration -----------------------------------------------------------

NAMED_KINDS = ("correlation", "tightness")
RANDOM_KINDS = ("vertex", "edge", "general")


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    instance_path: str | None = None
    kind: str | None = None
    n: int | None = None
    epsilon: float | None = None
    trials: int = 100_000
    seed: int = 1
    tolerances: oracles.Tolerances = field(default_factory=oracles.Tolerances)
    out: str | None = None
    count: int = 50
    named: bool = True
    corrupt: float = 0.0

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidParameterError(f"--trials must be >= 1, got {self.trials}")
        if not 0 <= self.seed < 2**64:
            raise InvalidParameterError(f"--seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.command in ("solve-lp", "run", "exact"):
            if (self.instance_path is None) == (self.kind is None):
                raise InvalidParameterError("give exactly one of --instance or --kind")
        if self.command == "gen" and self.kind is None:
            raise InvalidParameterError("gen needs --kind")
        if self.count < 0:
            raise InvalidParameterError("--count must be >= 0")

    def instance(self):
        if self.instance_path is not None:
            return load_instance(self.instance_path)
        return generate(self.kind, n=self.n, epsilon=self.epsilon, seed=self.seed)


def generate(kind, *, n=None, epsilon=None, seed=1):
    if kind == "correlation":
        return gen_correlation(0.01 if epsilon is None else epsilon)
    if kind == "tightness":
        return gen_tightness(8 if n is None else n)
    if kind in RANDOM_KINDS:
        return gen_random(kind, seed)
    raise InvalidParameterError(f"unknown --kind {kind!r}")


def parse_tolerances(pairs) -> oracles.Tolerances:
    tol = oracles.Tolerances()
    names = {f.name for f in fields(tol)}
    for item in pairs or ():
        name, sep, value = item.partition("=")
        if not sep or name not in names:
            raise InvalidParameterError(f"--tol expects NAME=VALUE with NAME in "
                                        f"{sorted(names)}, got {item!r}")
        try:
            tol = replace(tol, **{name: float(value)})
        except ValueError:
            raise InvalidParameterError(f"--tol {name}: {value!r} is not a number") from None
    return tol


# -- reports -----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _key(k) -> str:
    return ":".join(map(str, k)) if isinstance(k, tuple) else str(k)


def write_csv(rows, header, out) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    text = buf.getvalue()
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    return text


def lp_rows(instance):
    lp, x = solve_instance(instance)
    rows = [(f"x[{_key(k)}]", w, v) for k, w, v in zip(lp.variables, lp.objective, x.values)]
    rows.append(("objective", None, x.objective(lp)))
    return rows


def evaluate(instance, trials=None, seed=1):
    """Rows of the ``run`` / ``exact`` report; Monte Carlo only when ``trials`` is given."""
    lp, x = solve_instance(instance)
    lpopt = x.objective(lp)
    rows = [("summary", "lpopt", lpopt, None)]
    exact_alg = opt = None
    edge_exact = {}
    covariances = []
    try:
        opt = oracles.optimal_online(instance).value
        if instance.kind == "edge":
            dist = oracles.exact_edge_rounding(instance, x)
            exact_alg = dist.expected_weight
            edge_exact = dict(zip(lp.variables, dist.match_prob))
        else:
            build = build_schedule if instance.kind == "vertex" else build_general_schedule
            dist = oracles.exact_vertex_rounding(instance, build(instance, x))
            exact_alg = dist.expected_total
            edge_exact = dict(dist.edge_match)
            B = instance.offline_count
            for t in range(1, instance.online_count + 1):
                for u in range(B):
                    for v in range(u + 1, B):
                        covariances.append((t, u, v, dist.covariance(t, u, v)))
    except ResourceError as exc:
        log.warning("exact oracles skipped: %s", exc)
    rows.append(("summary", "opt", opt, None))
    rows.append(("summary", "exact_alg", exact_alg, None))
    mc = None
    if trials is not None:
        if instance.kind == "edge":
            mc = monte_carlo_edge(instance, x, trials, seed)
        else:
            mc = monte_carlo(instance, x, trials, seed)
        rows.append(("summary", "mc_mean", mc.mean, mc.stderr))
        rows.append(("summary", "trials", trials, None))
    rows.append(("summary", "ratio_alg_opt",
                 exact_alg / opt if exact_alg is not None and opt else None, None))
    rows.append(("summary", "ratio_alg_lpopt",
                 exact_alg / lpopt if exact_alg is not None and lpopt else None, None))
    for k, v in zip(lp.variables, x.values):
        rows.append(("edge", f"x[{_key(k)}]", v, None))
    # in the general model the matched indicators are per (t, u), not per scenario
    pairs = list(lp.variables) if instance.kind != "general" else \
        sorted({(k[0], k[2]) for k in lp.variables})
    for k in pairs:
        if k in edge_exact:
            rows.append(("edge", f"exact[{_key(k)}]", edge_exact[k], None))
        if mc is not None:
            rows.append(("edge", f"freq[{_key(k)}]", mc.frequencies[k], mc.frequency_stderr(k)))
    for t, u, v, c in covariances:
        rows.append(("covariance", f"cov[t={t}:{u},{v}]", c, None))
    return rows


def build_corpus(count, seed, named=True):
    corpus = []
    if named:
        corpus.append(("correlation-0.01", gen_correlation(0.01)))
        corpus += [(f"tightness-{n}", gen_tightness(n)) for n in range(2, 11)]
    for kind in RANDOM_KINDS:
        corpus += [(f"{kind}-{seed + k}", gen_random(kind, seed + k)) for k in range(count)]
    return corpus


def verify_corpus(config: ExperimentConfig):
    rows, failed = [], []
    for name, inst in build_corpus(config.count, config.seed, config.named):
        lp, x = solve_instance(inst)
        if config.corrupt:
            x = x.perturbed(config.corrupt)
        report = oracles.verify_all(inst, x, config.tolerances, optimal=not config.corrupt)
        for c in report.checks:
            rows.append((name, inst.kind, c.name, c.worst_slack, c.tolerance,
                         "true" if c.passed else "false", c.detail))
        if not report.passed:
            failed.append((name, inst, report))
    return rows, failed


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochmatch", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, source=True):
        if source:
            sp.add_argument("--instance", help="instance file (JSON)")
            sp.add_argument("--kind", choices=NAMED_KINDS + RANDOM_KINDS,
                            help="generate the instance instead of loading it")
            sp.add_argument("--n", type=int, help="size of the tightness family")
            sp.add_argument("--epsilon", type=float, help="v3 arrival probability (correlation)")
        sp.add_argument("--seed", type=int, default=1)
        sp.add_argument("--tol", action="append", metavar="NAME=VALUE")
        sp.add_argument("--out", help="output path (default: stdout)")

    g = sub.add_parser("gen", help="write a generated instance file")
    g.add_argument("--kind", choices=NAMED_KINDS + RANDOM_KINDS, required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out")

    common(sub.add_parser("solve-lp", help="solve the LP relaxation, CSV of masses"))
    r = sub.add_parser("run", help="LP + Monte Carlo + exact evaluation")
    common(r)
    r.add_argument("--trials", type=int, default=100_000)
    common(sub.add_parser("exact", help="LP + exact oracles only"))
    v = sub.add_parser("verify", help="check every exact guarantee on a seeded fuzz corpus")
    common(v, source=False)
    v.add_argument("--count", type=int, default=50, help="random instances per model")
    v.add_argument("--no-named", action="store_true", help="skip the named instances")
    v.add_argument("--corrupt", type=float, default=0.0, help=argparse.SUPPRESS)
    return p


def _config(args) -> ExperimentConfig:
    return ExperimentConfig(
        command=args.command,
        instance_path=getattr(args, "instance", None),
        kind=getattr(args, "kind", None),
        n=getattr(args, "n", None),
        epsilon=getattr(args, "epsilon", None),
        trials=getattr(args, "trials", 100_000),
        seed=args.seed,
        tolerances=parse_tolerances(getattr(args, "tol", None)),
        out=args.out,
        count=getattr(args, "count", 50),
        named=not getattr(args, "no_named", False),
        corrupt=getattr(args, "corrupt", 0.0),
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        config = _config(args)
        if config.command == "gen":
            inst = generate(config.kind, n=config.n, epsilon=config.epsilon, seed=config.seed)
            if config.out:
                save_instance(inst, config.out)
            else:
                sys.stdout.write(json.dumps(instance_to_dict(inst), indent=2) + "\n")
            return EXIT_OK
        if config.command == "verify":
            rows, failed = verify_corpus(config)
            write_csv(rows, VERIFY_HEADER, config.out)
            if failed:
                where = Path(config.out).parent if config.out else Path.cwd()
                dump = where / "verify_failures"
                dump.mkdir(parents=True, exist_ok=True)
                for name, inst, report in failed:
                    save_instance(inst, dump / f"{name}.json")
                    for c in report.failures():
                        print(f"FAIL {name} {c.name} slack={c.worst_slack:.3g} {c.detail}",
                              file=sys.stderr)
                print(f"{len(failed)} instance(s) failed; saved to {dump}", file=sys.stderr)
                return EXIT_CHECK
            return EXIT_OK
        inst = config.instance()
        if config.command == "solve-lp":
            write_csv(lp_rows(inst), LP_HEADER, config.out)
        elif config.command == "run":
            write_csv(evaluate(inst, config.trials, config.seed), REPORT_HEADER, config.out)
        elif config.command == "exact":
            write_csv(evaluate(inst), REPORT_HEADER, config.out)
        return EXIT_OK
    except (InvalidParameterError, InstanceFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, ResourceError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except StochMatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
