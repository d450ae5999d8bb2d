"""Command-line entry point: ``recloss {verify,surface,train,sweep,synth}``.

Every option can also come from an INI file passed with ``--config``; the
section is named after the command and keys use the long flag names with
underscores (``batch_size = 256``). Flags override the file, the file
overrides built-in defaults, and unknown keys are rejected. Each run writes
the fully resolved configuration to ``resolved_config.ini`` in its output
directory.

Exit codes: 0 success, 1 runtime or I/O error, 2 usage error, 3 a
verification check found a counterexample.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, NamedTuple, Optional


from . import bounds
from .core import InvalidInputError
from .losses import LossKind
from .metrics import Metric
from .recsys import data as rdata
from .recsys import model as rmodel
from .recsys.train import TRACE_FIELDS, TrainConfig, TrainingDiverged, evaluate, train
from .sampling import SamplerConfig, make_rng

logger = logging.getLogger("recloss")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_COUNTEREXAMPLE = 0, 1, 2, 3
WORKERS_ENV = "RECLOSS_WORKERS"
SWEEP_FIELDS = ("loss", "negatives", "seed") + TRACE_FIELDS


class UsageError(Exception):
    pass


# -- option parsing -------------------------------------------------------------


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


def seed_int(text: str) -> int:
    value = non_negative_int(text)
    if value >= 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def non_negative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return value


def int_list(text: str) -> list:
    """``"1,2,5"`` or ranges ``"1-50"`` or a mix (``"1-3,10"``)."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                lo, hi = int(lo), int(hi)
                if hi < lo:
                    raise ValueError
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad integer list element {part!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty integer list")
    return out


def _choice_list(parse: Callable) -> Callable:
    def convert(text: str) -> list:
        items = [p.strip() for p in str(text).split(",") if p.strip()]
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        try:
            return [parse(p).value for p in items]
        except InvalidInputError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return convert


def _choice(parse: Callable) -> Callable:
    def convert(text: str) -> str:
        try:
            return parse(text).value
        except InvalidInputError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return convert


def _format_value(value) -> str:
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return "" if value is None else str(value)


class Opt(NamedTuple):
    name: str
    type: Callable
    default: object
    help: str


COMMON = [
    Opt("seed", seed_int, 0, "base seed; every random stream is derived from it"),
    Opt("out", str, None, "output directory (default: runs/<command>)"),
]

TRAIN_OPTS = [
    Opt("dataset", str, None, "interaction file (required)"),
    Opt("format", _choice(lambda v: _Fmt.parse(v)), "csv", "csv (user_id,item_id,timestamp) or movielens (::)"),
    Opt("scorer", _choice(rmodel.ScorerKind.parse), "factor", "factor or history-mean"),
    Opt("dim", positive_int, 64, "embedding dimension"),
    Opt("batch_size", positive_int, 128, "instances per batch"),
    Opt("lr", non_negative_float, 0.001, "learning rate"),
    Opt("epochs", non_negative_int, 100, "training epochs (0 = evaluate the initial model only)"),
    Opt("optimizer", _choice(lambda v: _Optim.parse(v)), "adam", "adam or sgd"),
    Opt("beta1", non_negative_float, 0.9, "adam beta1"),
    Opt("beta2", non_negative_float, 0.999, "adam beta2"),
    Opt("eps", non_negative_float, 1e-8, "adam epsilon"),
    Opt("cutoff", positive_int, 10, "metric cutoff k for NDCG@k / MRR@k"),
    Opt("init_scale", non_negative_float, 0.1, "std of the initial embeddings"),
]


class _Named:
    def __init__(self, value: str):
        self.value = value


class _Fmt:
    @staticmethod
    def parse(v: str) -> _Named:
        if v not in ("csv", "movielens"):
            raise InvalidInputError(f"unknown format {v!r}; expected csv or movielens")
        return _Named(v)


class _Optim:
    @staticmethod
    def parse(v: str) -> _Named:
        if v not in ("adam", "sgd"):
            raise InvalidInputError(f"unknown optimizer {v!r}; expected adam or sgd")
        return _Named(v)


COMMANDS: dict = {
    "verify": (
        "fuzz the deterministic inequalities and Monte Carlo check the probabilistic bounds",
        [
            Opt("fuzz", positive_int, 100_000, "random score sets per deterministic check"),
            Opt("trials", positive_int, 20_000, "Monte Carlo trials per scenario"),
            Opt("populations", int_list, [10, 100, 1000], "negative population sizes N"),
            Opt("ranks", int_list, [1, 2, 5, 20], "true ranks r+"),
            Opt("negatives", int_list, [1, 5, 100], "sampled negatives K (cells with K > N are skipped)"),
            Opt("metrics", _choice_list(Metric.parse), ["ndcg", "mrr"], "metrics to check"),
            Opt("profile", str, "tight", "scenario scores: tight or spread"),
            Opt("score_bound", non_negative_float, 10.0, "S for the gradient-sign check"),
        ],
    ),
    "surface": (
        "write bound probabilities over a (K, r+) grid as CSV",
        [
            Opt("population", positive_int, 1000, "negative population size N"),
            Opt("negatives", int_list, [1, 2, 5, 20, 50, 100], "K values (rows)"),
            Opt("ranks", int_list, list(range(1, 51)), "r+ values (columns)"),
            Opt("metric", _choice(Metric.parse), "ndcg", "ndcg or mrr"),
            Opt("losses", _choice_list(LossKind.parse), ["bpr", "cce"], "losses to tabulate"),
            Opt("gamma0", non_negative_int, None, "non-negative negatives for BCE (default: r+ - 1)"),
        ],
    ),
    "train": (
        "train one recommender and write its metric trace and model",
        TRAIN_OPTS
        + [
            Opt("loss", _choice(LossKind.parse), "bpr", "bce, bpr or cce"),
            Opt("negatives", positive_int, 1, "sampled negatives K per positive"),
        ],
    ),
    "sweep": (
        "train the cross product of losses, K values and seeds; merge traces",
        TRAIN_OPTS
        + [
            Opt("losses", _choice_list(LossKind.parse), ["bce", "bpr", "cce"], "losses"),
            Opt("negatives", int_list, [1, 2, 5, 20, 50, 100], "K values"),
            Opt("seeds", int_list, None, "training seeds, one run per seed (default: --seed)"),
        ],
    ),
    "synth": (
        "write a synthetic block-preference interaction CSV",
        [
            Opt("users", positive_int, 200, "number of users"),
            Opt("items", positive_int, 200, "number of items"),
            Opt("blocks", positive_int, 10, "number of preference blocks"),
            Opt("seq_len", positive_int, 12, "interactions per user"),
            Opt("noise", non_negative_float, 0.0, "probability of an off-block interaction"),
        ],
    ),
}


def _options(command: str) -> list:
    return COMMON + COMMANDS[command][1]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recloss", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, _) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=str, default=None, help="INI file with a [%s] section" % name)
        for opt in _options(name):
            shown = _format_value(opt.default) if opt.default is not None else "-"
            p.add_argument(
                "--" + opt.name.replace("_", "-"),
                dest=opt.name,
                type=opt.type,
                default=None,
                help=f"{opt.help} [default: {shown}]",
            )
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults < config file < flags."""
    opts = {o.name: o for o in _options(command)}
    resolved = {name: o.default for name, o in opts.items()}
    if args.config:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(args.config) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        except configparser.Error as exc:
            raise UsageError(f"bad config file {args.config}: {exc}") from None
        for section in parser.sections():
            if section != command:
                raise UsageError(f"config section [{section}] does not match command {command!r}")
        if parser.has_section(command):
            for key, text in parser.items(command):
                if key not in opts:
                    raise UsageError(f"unknown config key {key!r} for {command}")
                if not text.strip() and opts[key].default is None:
                    resolved[key] = None
                    continue
                try:
                    resolved[key] = opts[key].type(text)
                except argparse.ArgumentTypeError as exc:
                    raise UsageError(f"config key {key}: {exc}") from None
    for name in opts:
        value = getattr(args, name, None)
        if value is not None:
            resolved[name] = value
    if resolved["out"] is None:
        resolved["out"] = str(Path("runs") / command)
    return resolved


def write_resolved(command: str, cfg: dict, out: Path) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    parser[command] = {k: _format_value(v) for k, v in cfg.items()}
    with open(out / "resolved_config.ini", "w") as fh:
        parser.write(fh)


def _prepare_out(command: str, cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(command, cfg, out)
    return out


# -- commands ---------------------------------------------------------------------


def _print_counterexample(result: bounds.FuzzResult) -> None:
    ce = result.counterexample
    print(f"COUNTEREXAMPLE in {result.name}: {result.detail}", file=sys.stderr)
    if ce is not None:
        print(f"  s+ = {ce.positive_score!r}", file=sys.stderr)
        print(f"  negatives (K={ce.k}) = {ce.negative_scores.tolist()!r}", file=sys.stderr)


def _scenario_gamma0(population: int, rank: int) -> int:
    # Half of the negatives below s+ are made non-negative.
    below = population - (rank - 1)
    return rank - 1 + below // 2


def cmd_verify(cfg: dict) -> int:
    if cfg["profile"] not in ("tight", "spread"):
        raise UsageError(f"profile must be tight or spread, got {cfg['profile']!r}")
    out = _prepare_out("verify", cfg)
    seed = cfg["seed"]
    fuzzers = [
        bounds.fuzz_full_chain(cfg["fuzz"], seed=seed, stream=0),
        bounds.fuzz_sampled_lower_bounds(cfg["fuzz"], seed=seed, stream=1),
        bounds.fuzz_k1_equivalence(cfg["fuzz"], seed=seed, stream=2),
        bounds.fuzz_gradient_signs(cfg["fuzz"], bound=cfg["score_bound"], seed=seed, stream=3),
    ]
    bounds.write_csv(
        out / "fuzz_summary.csv",
        ("check", "checked", "failures"),
        ({"check": f.name, "checked": f.checked, "failures": f.failures} for f in fuzzers),
    )
    failed = False
    for f in fuzzers:
        print(f"{'PASS' if f.ok else 'FAIL'} {f.name}: {f.checked} checked, {f.failures} failures")
        if not f.ok and not failed:
            _print_counterexample(f)
            failed = True

    mc_dir = out / "monte_carlo"
    mc_dir.mkdir(exist_ok=True)
    index = []
    stream = 100
    for n in cfg["populations"]:
        for r in cfg["ranks"]:
            if r - 1 > n:
                continue
            gamma0 = _scenario_gamma0(n, r)
            scenario = bounds.make_scenario(n, r, gamma0, cfg["profile"], rng=make_rng(seed, 10, n, r))
            for k in cfg["negatives"]:
                if k > n:
                    continue
                reports = []
                for metric in cfg["metrics"]:
                    rep = bounds.monte_carlo_bound_check(
                        scenario, SamplerConfig(k, seed), metric, cfg["trials"], stream, cfg["profile"]
                    )
                    stream += 1
                    reports.append(rep)
                    for row in rep.rows:
                        if not (row.ok and row.lemma_passes == row.trials) and not failed:
                            failed = True
                            print(
                                f"COUNTEREXAMPLE in monte_carlo: N={n} r+={r} K={k} loss={row.loss} "
                                f"metric={row.metric} frequency={row.frequency} bound={row.theoretical_bound} "
                                f"std_err={row.std_err} lemma_passes={row.lemma_passes}/{row.trials}",
                                file=sys.stderr,
                            )
                name = f"N{n}_r{r}_K{k}.csv"
                bounds.write_report_csv(mc_dir / name, reports)
                ok = all(rep.ok for rep in reports)
                index.append(
                    {"file": name, "population": n, "r_plus": r, "K": k, "gamma": r - 1, "gamma0": gamma0, "passed": ok}
                )
    bounds.write_csv(out / "monte_carlo_index.csv", ("file", "population", "r_plus", "K", "gamma", "gamma0", "passed"), index)
    n_ok = sum(1 for row in index if row["passed"])
    print(f"{'PASS' if n_ok == len(index) else 'FAIL'} monte_carlo: {n_ok}/{len(index)} scenarios")
    return EXIT_COUNTEREXAMPLE if failed else EXIT_OK


def cmd_surface(cfg: dict) -> int:
    n = cfg["population"]
    bad_k = [k for k in cfg["negatives"] if not 1 <= k <= n]
    bad_r = [r for r in cfg["ranks"] if not 1 <= r <= n + 1]
    if bad_k or bad_r:
        raise UsageError(f"invalid ranges for N={n}: K outside 1..{n}: {bad_k}; r+ outside 1..{n + 1}: {bad_r}")
    if cfg["gamma0"] is not None and cfg["gamma0"] > n:
        raise UsageError(f"gamma0 must be <= N={n}")
    out = _prepare_out("surface", cfg)
    rows = []
    for loss in cfg["losses"]:
        rows.extend(bounds.surface_rows(n, cfg["negatives"], cfg["ranks"], cfg["metric"], loss, cfg["gamma0"]))
    bounds.write_csv(out / "surface.csv", bounds.SURFACE_FIELDS, rows)
    print(f"wrote {len(rows)} rows to {out / 'surface.csv'}")
    return EXIT_OK


def _train_config(cfg: dict, loss: str, negatives: int, seed: int) -> TrainConfig:
    keys = ("scorer", "dim", "batch_size", "lr", "epochs", "optimizer", "beta1", "beta2", "eps", "cutoff", "init_scale")
    return TrainConfig(loss=loss, negatives=negatives, seed=seed, **{k: cfg[k] for k in keys})


def _load_split(cfg: dict) -> rdata.SplitDataset:
    if not cfg["dataset"]:
        raise UsageError("--dataset is required")
    path = Path(cfg["dataset"])
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    dataset = rdata.load_interactions(path, cfg["format"])
    logger.info("loaded %d users, %d items (%d users dropped)", dataset.n_users, dataset.n_items, dataset.dropped_users)
    return rdata.split_leave_last(dataset)


def _format_trace(rows: list) -> list:
    return [{**row, "value": repr(float(row["value"]))} for row in rows]


def cmd_train(cfg: dict) -> int:
    split = _load_split(cfg)
    tcfg = _train_config(cfg, cfg["loss"], cfg["negatives"], cfg["seed"])
    out = _prepare_out("train", cfg)
    result = train(split, tcfg)
    bounds.write_csv(out / "trace.csv", TRACE_FIELDS, _format_trace(result.trace))
    rmodel.save_model(result.params, tcfg.scorer, out / "model.txt")
    final = evaluate(result.params, tcfg.scorer, split, tcfg.cutoff, "test")
    print(
        f"best epoch {result.best_epoch}: test NDCG@{tcfg.cutoff}={final.ndcg:.4f} "
        f"MRR@{tcfg.cutoff}={final.mrr:.4f}"
    )
    return EXIT_OK


def _sweep_cell(args):
    split, tcfg = args
    try:
        return train(split, tcfg).trace, None
    except Exception as exc:  # recorded per cell
        return None, f"{type(exc).__name__}: {exc}"


def _workers() -> int:
    text = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(text))
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {text!r}") from None


def cmd_sweep(cfg: dict) -> int:
    split = _load_split(cfg)
    if cfg["seeds"] is None:
        cfg["seeds"] = [cfg["seed"]]
    cells = [(loss, k, seed) for loss in cfg["losses"] for k in cfg["negatives"] for seed in cfg["seeds"]]
    configs = [_train_config(cfg, loss, k, seed) for loss, k, seed in cells]
    workers = _workers()
    out = _prepare_out("sweep", cfg)
    jobs = [(split, c) for c in configs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(job) for job in jobs]
    rows, failures = [], []
    for (loss, k, seed), (trace, error) in zip(cells, results):
        if error is not None:
            failures.append({"loss": loss, "negatives": k, "seed": seed, "error": error})
            print(f"FAILED cell loss={loss} K={k} seed={seed}: {error}", file=sys.stderr)
            continue
        rows.extend({"loss": loss, "negatives": k, "seed": seed, **row} for row in _format_trace(trace))
    bounds.write_csv(out / "sweep.csv", SWEEP_FIELDS, rows)
    if failures:
        bounds.write_csv(out / "sweep_failures.csv", ("loss", "negatives", "seed", "error"), failures)
    print(f"{len(cells) - len(failures)}/{len(cells)} cells completed; wrote {out / 'sweep.csv'}")
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_synth(cfg: dict) -> int:
    try:
        dataset = rdata.make_block_dataset(
            cfg["users"], cfg["items"], cfg["blocks"], cfg["seq_len"], cfg["noise"], cfg["seed"]
        )
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    out = _prepare_out("synth", cfg)
    rdata.write_interactions_csv(dataset, out / "interactions.csv")
    print(f"wrote {len(dataset.events)} interactions to {out / 'interactions.csv'}")
    return EXIT_OK


HANDLERS = {"verify": cmd_verify, "surface": cmd_surface, "train": cmd_train, "sweep": cmd_sweep, "synth": cmd_synth}


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args.command, args)
        return HANDLERS[args.command](cfg)
    except UsageError as exc:
        print(f"recloss {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, InvalidInputError, TrainingDiverged) as exc:
        print(f"recloss {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
