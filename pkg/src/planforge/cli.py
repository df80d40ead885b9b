"""``planforge`` command line: generate, sense, benchmark, analyze.

Exit codes: 0 ok, 1 usage or configuration error, 2 generation budget
exhausted, 3 I/O error.  Progress goes to stderr; data goes to files.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import BudgetExhausted, PlanforgeError

log = logging.getLogger("planforge")

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="experiment seed (falls back to $PLANFORGE_SEED, then 0)")
    common.add_argument("--jobs", type=int, default=None,
                        help="worker processes (benchmark defaults to 1 for stable timings)")
    common.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")

    p = _Parser(prog="planforge", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="generate a dataset of verified planning problems")
    g.add_argument("--config", help="generation config YAML (robot, scene, variations, queries, ...)")
    g.add_argument("--robot", help="robot adapter YAML (urdf_file, base_offset, tool_offsets)")
    g.add_argument("--scene", help="nominal scene YAML")
    g.add_argument("--variations", help="variation spec YAML")
    g.add_argument("--queries", help="query YAML (queries and start/goal pairs)")
    g.add_argument("--count", type=int, help="number of problems N (>= 1)")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--name", help="dataset name recorded in the manifest (default: directory name)")
    g.add_argument("--representations", help="comma list from geometric,pointcloud,octree (default geometric)")
    g.add_argument("--cameras", help="camera YAML, needed for pointcloud/octree representations")
    g.add_argument("--resolution", type=float, help="octree leaf size in meters (default 0.05)")
    g.add_argument("--verify-timeout", type=float, help="seconds for the feasibility check (default 60)")
    g.add_argument("--no-verify", action="store_true", help="skip the planner feasibility check")

    s = sub.add_parser("sense", parents=[common], help="add point clouds and octrees to an existing dataset")
    s.add_argument("--dataset", required=True, help="dataset directory")
    s.add_argument("--cameras", required=True, help="camera YAML")
    s.add_argument("--resolution", type=float, default=0.05, help="octree leaf size in meters (> 0)")

    b = sub.add_parser("benchmark", parents=[common], help="run planners on a dataset and write a CSV")
    b.add_argument("--dataset", required=True, help="dataset directory")
    b.add_argument("--planners", required=True,
                   help="comma list of NAME[:RANGE] with NAME in rrt_connect,biest,rrt_star (range default 0.5)")
    b.add_argument("--repeats", type=_positive_int, default=1, help="runs per problem and planner")
    b.add_argument("--timeout", type=_positive_float, default=60.0, help="seconds per run")
    b.add_argument("--out", required=True, help="results CSV; traces go to the same stem with .jsonl")
    b.add_argument("--sweep-range", help="A:B:STEP inclusive range grid; overrides planner ranges")
    b.add_argument("--problems", help="comma list of 1-based problem indices (default all)")
    b.add_argument("--representation", default="geometric", help="scene representation to plan against")
    b.add_argument("--resolution", type=_positive_float, default=0.05, help="path validation resolution")
    b.add_argument("--serial", action="store_true", help="force one worker regardless of --jobs")

    a = sub.add_parser("analyze", parents=[common], help="summaries and ordering analyses of results")
    a.add_argument("--results", required=True, help="results CSV or JSONL written by benchmark")
    a.add_argument("--mode", required=True, choices=["summary", "adversarial", "prefix", "normcost", "sweep"],
                   help="summary | adversarial | prefix | normcost | sweep")
    a.add_argument("--out", required=True, help="report file; gnuplot data files use it as a prefix")
    a.add_argument("--prefixes", default="5,10,50,100",
                   help="comma list of prefix sizes (clipped to the problem count)")
    a.add_argument("--favor", help="planner label NAME@RANGE whose adversarial ordering prefix mode uses")
    return p


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("PLANFORGE_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"PLANFORGE_SEED must be an integer, got '{env}'") from None
    return 0


def _jobs(args, default: int) -> int:
    return max(1, args.jobs) if args.jobs is not None else default


# -- generate / sense ---------------------------------------------------------------

def cmd_generate(args) -> int:
    from .dataset import GenerationInputs, generate_dataset
    from .problems import IkParams
    over = dict(robot=args.robot, scene=args.scene, variations=args.variations, queries=args.queries,
                count=args.count, cameras=args.cameras, resolution=args.resolution, name=args.name)
    if args.representations:
        over["representations"] = tuple(r.strip() for r in args.representations.split(",") if r.strip())
    if args.verify_timeout is not None:
        over["verify_timeout"] = args.verify_timeout
    if args.no_verify:
        over["verify_timeout"] = 0.0
    over["seed"] = _seed(args)
    for key in ("robot", "scene", "variations", "queries", "cameras"):
        if over.get(key) and not os.path.exists(over[key]):
            raise UsageError(f"{key} file not found: {over[key]}")
    if args.config:
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        if args.seed is None and not os.environ.get("PLANFORGE_SEED"):
            over.pop("seed")
        inputs = GenerationInputs.from_config(args.config, **over)
    else:
        missing = [k for k in ("robot", "scene", "variations", "queries", "count") if over.get(k) is None]
        if missing:
            raise UsageError(f"missing --{missing[0]} (or give --config)")
        inputs = GenerationInputs(**{k: v for k, v in over.items() if v is not None}, ik=IkParams())
    if inputs.count is None or int(inputs.count) < 1:
        raise UsageError("--count must be >= 1")
    ds = generate_dataset(inputs, args.out, progress=log.info)
    counts = ds.manifest.stage_failures
    print(f"generated {len(ds)} problems in {ds.root}; discarded drafts: "
          f"sampling={counts['sampling']} ik={counts['ik']} verify={counts['verify']}", file=sys.stderr)
    return EXIT_OK


def cmd_sense(args) -> int:
    from .dataset import sense_dataset
    if not args.resolution > 0:
        raise UsageError("--resolution must be > 0")
    if not os.path.isdir(args.dataset):
        raise UsageError(f"dataset directory not found: {args.dataset}")
    if not os.path.exists(args.cameras):
        raise UsageError(f"camera file not found: {args.cameras}")
    ds = sense_dataset(args.dataset, args.cameras, args.resolution)
    print(f"sensed {len(ds)} problems in {ds.root}", file=sys.stderr)
    return EXIT_OK


# -- benchmark ---------------------------------------------------------------------------

def parse_planners(spec: str) -> list[tuple[str, float]]:
    from .planners import PLANNER_NAMES
    out = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, rng = item.partition(":")
        if name not in PLANNER_NAMES:
            raise UsageError(f"unknown planner '{name}'; valid names: {', '.join(PLANNER_NAMES)}")
        try:
            r = float(rng) if rng else 0.5
        except ValueError:
            raise UsageError(f"bad range in '{item}'") from None
        if not r > 0:
            raise UsageError(f"range must be > 0 in '{item}'")
        out.append((name, r))
    if not out:
        raise UsageError("--planners is empty")
    return out


def parse_sweep(text: str) -> list[float]:
    from .benchmark import sweep_grid
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"--sweep-range expects A:B:STEP, got '{text}'") from None
    if not (a > 0 and b >= a and step > 0):
        raise UsageError("--sweep-range needs 0 < A <= B and STEP > 0")
    return sweep_grid(a, b, step)


def cmd_benchmark(args) -> int:
    from .benchmark import QuerySpec, export, run_experiment
    from .dataset import Dataset
    from .planners import PlannerParams
    planners = parse_planners(args.planners)
    ranges = parse_sweep(args.sweep_range) if args.sweep_range else None
    if not os.path.isdir(args.dataset):
        raise UsageError(f"dataset directory not found: {args.dataset}")
    ds = Dataset.open(args.dataset)
    if args.representation not in ds.manifest.representations:
        raise UsageError(f"dataset has no '{args.representation}' representation")
    if args.problems:
        problems = [int(x) for x in args.problems.split(",") if x.strip()]
        bad = [p for p in problems if not 1 <= p <= len(ds)]
        if bad:
            raise UsageError(f"problem indices {bad} outside 1..{len(ds)}")
    else:
        problems = list(range(1, len(ds) + 1))
    grid = [(n, r) for n, _ in planners for r in ranges] if ranges else planners
    grid = list(dict.fromkeys(grid))
    specs = [QuerySpec(PlannerParams(n, r, args.timeout, args.resolution), ds.root, i, args.repeats,
                       args.representation) for n, r in grid for i in problems]
    jobs = 1 if args.serial else _jobs(args, 1)
    records = run_experiment(specs, jobs, _seed(args),
                             progress=lambda r: log.info("%s problem %d run %d: %s %.3fs", r.label, r.problem,
                                                         r.run, "ok" if r.success else "fail", r.time_s))
    export(records, "csv", args.out)
    export(records, "jsonl", os.path.splitext(args.out)[0] + ".jsonl")
    print(f"wrote {len(records)} records to {args.out}", file=sys.stderr)
    return EXIT_OK


# -- analyze ---------------------------------------------------------------------------------

def _write(path: str, lines: list[str]) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _g(x: float) -> str:
    return repr(float(x))


def _load_results(path: str, need_traces: bool = False):
    from .benchmark import load_records
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if need_traces and not path.endswith(".jsonl"):
        side = os.path.splitext(path)[0] + ".jsonl"
        if os.path.exists(side):
            path = side
    return load_records(path)


def _prefixes(text: str, n: int) -> list[int]:
    try:
        ks = sorted({int(x) for x in text.split(",") if x.strip()})
    except ValueError:
        raise UsageError(f"--prefixes expects integers, got '{text}'") from None
    if not ks or ks[0] < 1:
        raise UsageError("--prefixes must be positive")
    ks = [k for k in ks if k <= n]
    if n and n not in ks:
        ks.append(n)
    return ks


def _prefix_block(rows, title: str) -> list[str]:
    from .benchmark import winner_flip, winners
    lines = [f"# {title}", "prefix\tplanner\tmean_time_s\tci_low\tci_high"]
    lines += [f"{r.prefix}\t{r.planner}\t{_g(r.mean_time)}\t{_g(r.ci_low)}\t{_g(r.ci_high)}" for r in rows]
    w = winners(rows)
    lines.append("winners\t" + "\t".join(f"{k}:{v}" for k, v in sorted(w.items())))
    small, large, flip = winner_flip(rows)
    lines.append(f"winner_flip\t{'yes' if flip else 'no'}\tprefix_{min(w)}={small}\tprefix_{max(w)}={large}")
    return lines


def _dat(path: str, rows) -> None:
    labels = sorted({r.planner for r in rows})
    ks = sorted({r.prefix for r in rows})
    by = {(r.prefix, r.planner): r for r in rows}
    lines = ["# prefix " + " ".join(f"{l}_mean {l}_lo {l}_hi" for l in labels)]
    for k in ks:
        lines.append(" ".join([str(k)] + [f"{by[(k, l)].mean_time!r} {by[(k, l)].ci_low!r} {by[(k, l)].ci_high!r}"
                                          for l in labels]))
    _write(path, lines)


def cmd_analyze(args) -> int:
    from .benchmark import (adversarial_order, aggregate, normalized_cost_curves, prefix_curves, sweep_table)
    records = _load_results(args.results, need_traces=args.mode == "normcost")
    stem = os.path.splitext(args.out)[0]
    labels = sorted({r.label for r in records})
    problems = sorted({r.problem for r in records})

    if args.mode == "summary":
        lines = ["planner\trange\tn\tmean_time_s\tmedian_time_s\tsuccess_rate\tci99_low\tci99_high"]
        if records:
            for (name, rng), s in aggregate(records).items():
                lines.append(f"{name}\t{rng:g}\t{s.n}\t{_g(s.mean)}\t{_g(s.median)}\t{_g(s.success_rate)}"
                             f"\t{_g(s.ci_low)}\t{_g(s.ci_high)}")
        _write(args.out, lines)
        return EXIT_OK

    if args.mode == "sweep":
        lines = ["planner\trange\tmean_time_s\tn"]
        lines += [f"{p}\t{r:g}\t{_g(t)}\t{n}" for p, r, t, n in sweep_table(records)]
        _write(args.out, lines)
        for p in sorted({r.planner for r in records}):
            _write(f"{stem}.{p}.dat", ["# range mean_time_s"] +
                   [f"{r!r} {t!r}" for q, r, t, _ in sweep_table(records) if q == p])
        return EXIT_OK

    if args.mode == "normcost":
        if not records:
            _write(args.out, ["planner\ttime_s\tmedian_normalized_cost\tci_low\tci_high"])
            return EXIT_OK
        curves = normalized_cost_curves(records)
        lines = ["planner\ttime_s\tmedian_normalized_cost\tci_low\tci_high"]
        for lab, pts in curves.items():
            lines += [f"{lab}\t{_g(p.time)}\t{_g(p.median)}\t{_g(p.ci_low)}\t{_g(p.ci_high)}" for p in pts]
            _write(f"{stem}.{lab}.dat", ["# time median lo hi"] +
                   [f"{p.time!r} {p.median!r} {p.ci_low!r} {p.ci_high!r}" for p in pts])
        _write(args.out, lines)
        return EXIT_OK

    if not records:
        _write(args.out, ["prefix\tplanner\tmean_time_s\tci_low\tci_high"])
        return EXIT_OK
    ks = _prefixes(args.prefixes, len(problems))

    if args.mode == "adversarial":
        if len(labels) != 2:
            raise UsageError(f"adversarial mode compares exactly two planner groups, found {len(labels)} "
                             f"({', '.join(labels)}); filter the results first")
        a, b = labels
        lines = []
        for favor in (a, b):
            order = adversarial_order(records, a, b, favor=favor)
            rows = prefix_curves(records, order, ks)
            lines.append(f"# ordering favoring {favor}: " + ",".join(map(str, order)))
            lines += _prefix_block(rows, f"prefix curves, ordering favoring {favor}")
            lines.append("")
            _dat(f"{stem}.favor_{favor}.dat", rows)
        _write(args.out, lines)
        return EXIT_OK

    # prefix
    if args.favor:
        if len(labels) != 2 or args.favor not in labels:
            raise UsageError(f"--favor must name one of exactly two planner groups ({', '.join(labels)})")
        a, b = labels
        order = adversarial_order(records, a, b, favor=args.favor)
        title = f"prefix curves, ordering favoring {args.favor}"
    else:
        order = problems
        title = "prefix curves, problem-index ordering"
    rows = prefix_curves(records, order, ks)
    _write(args.out, _prefix_block(rows, title))
    _dat(f"{stem}.dat", rows)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "sense": cmd_sense, "benchmark": cmd_benchmark, "analyze": cmd_analyze}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"planforge {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExhausted as exc:
        print(f"planforge {args.command}: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except PlanforgeError as exc:
        print(f"planforge {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"planforge {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
