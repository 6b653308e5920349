"""Command-line experiment runner.

Subcommands::

    fairfedlab analyze --config cfg.json --out DIR
    fairfedlab train   --config cfg.json --out DIR [--seeds 0,1,2] [--quant-bits 10]
    fairfedlab sweep   --config cfg.json --out DIR [--workers 4]
    fairfedlab report  RUN_DIR [RUN_DIR ...] --out DIR

The output root defaults to ``$FAIRFEDLAB_OUT`` (else ``./runs``).  Outputs
depend only on the configuration and seeds, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import population as pop
from .data import (
    CsvSchema,
    Dataset,
    Preprocessor,
    SplitSpec,
    SyntheticSpec,
    generate_synthetic,
    make_clients,
    read_rows,
    split_clients,
    train_test_split,
)
from .errors import ConfigError, FairFedError, MissingSummaryError, UnsupportedError
from .fairbatch import NOTIONS
from .federation import METHODS as FED_METHODS
from .federation import ProtocolConfig, Quantizer, run_method, write_round_log
from .metrics import format_mean_std, summarize
from .models import KINDS, TrainConfig

MODES = ("analyze", "train", "sweep", "report")
SUMMARY_HEADER = ("method", "acc_mean", "acc_std", "disp_mean", "disp_std", "bits_total")
SWEEP_HEADER = ("method", "learning_rate", "alpha", "acc_mean", "acc_std", "disp_mean", "disp_std", "bits_total")
TRADEOFF_HEADER = ("method", "epsilon", "accuracy", "dp_disp")
DEFAULT_ALPHAS = (0.001, 0.05, 0.08, 0.1, 0.2, 0.5, 1.0, 2.0)
DEFAULT_LRS = (0.001, 0.005, 0.01)


@dataclass
class ExperimentConfig:
    mode: str
    population: dict | None = None
    dataset: dict | None = None
    methods: list[str] = field(default_factory=list)
    notion: str = "DP"
    model: str = "mlp-4"
    protocol: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    eps_grid: list[float] | dict | None = None
    alpha_grid: list[float] = field(default_factory=lambda: list(DEFAULT_ALPHAS))
    lr_grid: list[float] = field(default_factory=lambda: list(DEFAULT_LRS))
    val_ratio: float = 0.2
    train_ratio: float = 0.7
    delta_resolution: int = 201
    psi_resolution: int = 41
    n_points: int = 256
    out: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys {unknown}")
        if "mode" not in raw:
            raise ConfigError("configuration needs a 'mode'")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.mode == "analyze":
            if not self.population:
                raise ConfigError("analyze needs a 'population'")
            build_population(self.population)
            for m in self.methods:
                if m not in pop.METHODS:
                    raise ConfigError(f"unknown analysis method {m!r}; choose from {pop.METHODS}")
        elif self.mode in ("train", "sweep"):
            if not self.dataset:
                raise ConfigError(f"{self.mode} needs a 'dataset'")
            if self.dataset.get("kind", "synthetic") not in ("synthetic", "csv"):
                raise ConfigError("dataset kind must be 'synthetic' or 'csv'")
            if not self.methods:
                raise ConfigError(f"{self.mode} needs at least one method")
            for m in self.methods:
                if m not in FED_METHODS:
                    raise ConfigError(f"unknown method {m!r}; choose from {FED_METHODS}")
            if self.notion not in NOTIONS:
                raise ConfigError(f"notion must be one of {NOTIONS}")
            if self.model not in KINDS:
                raise ConfigError(f"model must be one of {KINDS}")
            if len(self.seeds) < 1 or len(set(self.seeds)) != len(self.seeds):
                raise ConfigError("seeds must be distinct and non-empty")
            if not 0 < self.train_ratio < 1 or not 0 < self.val_ratio < 1:
                raise ConfigError("ratios must lie strictly between 0 and 1")
            protocol_config(self)  # raises on bad hyperparameters
            if self.mode == "sweep" and (not self.alpha_grid or not self.lr_grid):
                raise ConfigError("sweep needs non-empty alpha and learning-rate grids")


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# Population analysis
# ---------------------------------------------------------------------------


def build_population(raw: dict) -> pop.PopulationSpec:
    clients = raw.get("clients") if isinstance(raw, dict) else None
    if not clients:
        raise ConfigError("population needs a non-empty 'clients' list")
    out = []
    for k, c in enumerate(clients):
        try:
            s0 = float(c.get("sigma0", c.get("sigma")))
            s1 = float(c.get("sigma1", c.get("sigma")))
            client = pop.ClientPopulation(
                pop.GroupDistribution(float(c["mu0"]), s0),
                pop.GroupDistribution(float(c["mu1"]), s1),
                float(c["q"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"client {k}: needs mu0, mu1, sigma (or sigma0/sigma1) and q") from exc
        except FairFedError as exc:
            raise ConfigError(f"client {k}: {exc}") from exc
        if client.q <= 0.0 or client.q >= 1.0:
            raise UnsupportedError(f"client {k} has q={client.q}: both groups must be present (0 < q < 1)")
        out.append(client)
    return pop.PopulationSpec(tuple(out))


def eps_values(spec) -> np.ndarray:
    if spec is None:
        return np.round(np.linspace(0.0, 0.3, 31), 12)
    if isinstance(spec, dict):
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
    return np.asarray(spec, dtype=float)


def _write_csv(path: Path, header: Sequence[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)
    return path


def _f(x: float) -> str:
    return repr(float(x))


def cmd_analyze(cfg: ExperimentConfig, out: Path) -> list[Path]:
    spec = build_population(cfg.population)
    methods = cfg.methods or list(pop.METHODS)
    grid = eps_values(cfg.eps_grid)
    written = []
    for m in methods:
        curve = pop.tradeoff_curve(spec, m, grid, n_points=cfg.n_points)
        name = "tradeoff_" + m.replace("+", "_").lower() + ".csv"
        rows = [(p.method, _f(p.epsilon), _f(p.accuracy), _f(p.dp_disp)) for p in curve]
        written.append(_write_csv(out / name, TRADEOFF_HEADER, rows))
    if spec.n_clients == 2 and spec.equal_q:
        d = pop.compute_delta(spec, cfg.delta_resolution)
        written.append(
            _write_csv(
                out / "delta.csv",
                ("delta", "eps0", "eps1", "condition_holds", "g0_at_zero", "g1_at_zero"),
                [(_f(d.delta), _f(d.eps0), _f(d.eps1), int(d.condition_holds), _f(d.g0_at_zero), _f(d.g1_at_zero))],
            )
        )
        e0, e1, psi = pop.psi_grid(spec, cfg.psi_resolution)
        rows = [(_f(a), _f(b), _f(psi[i, j])) for i, a in enumerate(e0) for j, b in enumerate(e1)]
        written.append(_write_csv(out / "psi_grid.csv", ("eps0", "eps1", "psi"), rows))
    return written


# ---------------------------------------------------------------------------
# Federated training
# ---------------------------------------------------------------------------


def protocol_config(cfg: ExperimentConfig, alpha: float | None = None, lr: float | None = None) -> ProtocolConfig:
    p = dict(cfg.protocol)
    t = dict(cfg.train)
    bits = p.pop("quant_bits", None)
    lo, hi = p.pop("quant_range", (0.0, 2.0))
    unknown = sorted(set(p) - {"k", "T", "alpha", "decay"}) + sorted(
        set(t) - {"learning_rate", "batch_size", "local_epochs"}
    )
    if unknown:
        raise ConfigError(f"unknown protocol/train keys {unknown}")
    T = int(p.get("T", 10))
    try:
        train = TrainConfig(
            learning_rate=float(lr if lr is not None else t.get("learning_rate", 0.005)),
            batch_size=int(t.get("batch_size", 128)),
            local_epochs=int(t.get("local_epochs", 30)),
            rounds=T,
        )
        return ProtocolConfig(
            notion=cfg.notion,
            k=int(p.get("k", 1)),
            T=T,
            alpha=float(alpha if alpha is not None else p.get("alpha", 0.1)),
            decay=bool(p.get("decay", False)),
            quantizer=Quantizer(None if bits is None else int(bits), float(lo), float(hi)),
            train=train,
        )
    except FairFedError as exc:
        raise ConfigError(str(exc)) from exc


def method_label(method: str, config: ProtocolConfig) -> str:
    if method == "FedFB" and config.quantizer.bits is not None:
        return f"FedFB({config.quantizer.bits}bits)"
    return method


def prepare_data(dataset: dict, seed: int, train_ratio: float = 0.7) -> tuple[list[Dataset], Dataset]:
    """Client partitions of the training split and the pooled test split for one seed."""
    kind = dataset.get("kind", "synthetic")
    split = dataset.get("split", "medium")
    split_spec = SplitSpec(tuple(map(tuple, split))) if isinstance(split, list) else SplitSpec.named(split)
    if kind == "synthetic":
        extra = {k: v for k, v in dataset.items() if k not in ("kind", "split")}
        for key in ("mean0", "mean1"):
            if key in extra:
                extra[key] = tuple(extra[key])
        for key in ("cov0", "cov1"):
            if key in extra:
                extra[key] = tuple(map(tuple, extra[key]))
        ds = generate_synthetic(SyntheticSpec(**{**extra, "seed": seed}))
        train, test = train_test_split(ds, train_ratio, seed=seed)
        return make_clients(split_clients(train, split_spec, seed=seed)), test
    schema = CsvSchema(**dataset["schema"])
    rows = read_rows(dataset["path"], schema)
    order = np.random.default_rng(seed).permutation(len(rows))
    cut = int(round(train_ratio * len(rows)))
    tr_rows = [rows[i] for i in np.sort(order[:cut])]
    te_rows = [rows[i] for i in np.sort(order[cut:])]
    pre = Preprocessor.fit(tr_rows, schema)
    train, test = pre.transform(tr_rows), pre.transform(te_rows)
    if train.client is None:
        train = split_clients(train, split_spec, seed=seed)
    return make_clients(train), replace(test, client=None)


def holdout(parts: list[Dataset], ratio: float, seed: int) -> tuple[list[Dataset], Dataset]:
    """Carve a validation set out of every client's partition."""
    rng = np.random.default_rng([seed, 7])
    fit, val = [], []
    for p in parts:
        perm = rng.permutation(len(p))
        k = max(1, int(round(ratio * len(p))))
        val.append(p.subset(np.sort(perm[:k])))
        fit.append(p.subset(np.sort(perm[k:])))
    pooled = Dataset(
        np.vstack([v.X for v in val]), np.concatenate([v.y for v in val]), np.concatenate([v.a for v in val])
    )
    return fit, pooled


@dataclass(frozen=True)
class Cell:
    method: str
    seed: int
    learning_rate: float
    alpha: float
    validation: bool = False


def run_cell(cfg: ExperimentConfig, cell: Cell, log_dir: str | None = None) -> dict[str, Any]:
    parts, test = prepare_data(cfg.dataset, cell.seed, cfg.train_ratio)
    if cell.validation:
        parts, test = holdout(parts, cfg.val_ratio, cell.seed)
    pc = protocol_config(cfg, alpha=cell.alpha, lr=cell.learning_rate)
    res = run_method(cell.method, parts, pc, cfg.model, cell.seed, test)
    label = method_label(cell.method, pc)
    if log_dir is not None:
        d = Path(log_dir) / label
        d.mkdir(parents=True, exist_ok=True)
        write_round_log(d / f"seed_{cell.seed}_log.csv", res.log)
    return {
        "method": label,
        "seed": cell.seed,
        "learning_rate": cell.learning_rate,
        "alpha": cell.alpha,
        "accuracy": res.report.accuracy,
        "disparity": res.report.disparity(cfg.notion),
        "disparity_hard": res.report.dp_disp_hard,
        "bits_total": res.bits_total,
    }


def _run_cell_args(args):
    return run_cell(*args)


def run_cells(cfg: ExperimentConfig, cells: Sequence[Cell], log_dir: str | None = None, workers: int = 1) -> list[dict]:
    jobs = [(cfg, c, log_dir) for c in cells]
    if workers <= 1:
        return [_run_cell_args(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell_args, jobs))


def _summary_row(label: str, rows: list[dict]) -> tuple:
    acc = [r["accuracy"] for r in rows]
    disp = [r["disparity"] for r in rows]
    if len(rows) > 1:
        a, d = summarize(acc), summarize(disp)
        stats = (a.mean, a.std, d.mean, d.std)
    else:
        stats = (acc[0], 0.0, disp[0], 0.0)
    return (label, *map(_f, stats), int(rows[0]["bits_total"]))


def cmd_train(cfg: ExperimentConfig, out: Path, workers: int = 1) -> list[Path]:
    pc = protocol_config(cfg)
    cells = [Cell(m, s, pc.train.learning_rate, pc.alpha) for m in cfg.methods for s in cfg.seeds]
    results = run_cells(cfg, cells, str(out / "logs"), workers)
    by_method: dict[str, list[dict]] = {}
    for r in results:
        by_method.setdefault(r["method"], []).append(r)
    rows = [_summary_row(m, by_method[m]) for m in sorted(by_method)]
    return [_write_csv(out / "summary.csv", SUMMARY_HEADER, rows)]


def select_learning_rate(cfg: ExperimentConfig, workers: int = 1) -> float:
    """Learning rate with the best mean validation accuracy of plain FedAvg."""
    cells = [Cell("FedAvg", s, lr, 1.0, validation=True) for lr in cfg.lr_grid for s in cfg.seeds]
    res = run_cells(cfg, cells, None, workers)
    means = [np.mean([r["accuracy"] for r in res if r["learning_rate"] == lr]) for lr in cfg.lr_grid]
    return float(cfg.lr_grid[int(np.argmax(means))])


ALPHA_FREE = ("FedAvg",)


def sweep(cfg: ExperimentConfig, workers: int = 1, log_dir: str | None = None) -> tuple[float, list[tuple], list[tuple]]:
    """Grid over alpha at the validated learning rate; per method the fairest alpha wins.

    Returns the chosen learning rate, one sweep row per (method, alpha) and
    one summary row per method.
    """
    lr = select_learning_rate(cfg, workers)
    cells = []
    for m in cfg.methods:
        alphas = [cfg.alpha_grid[0]] if m in ALPHA_FREE else cfg.alpha_grid
        cells += [Cell(m, s, lr, a) for a in alphas for s in cfg.seeds]
    results = run_cells(cfg, cells, None, workers)
    groups: dict[tuple[str, float], list[dict]] = {}
    for r in results:
        groups.setdefault((r["method"], r["alpha"]), []).append(r)
    sweep_rows, best, best_alpha = [], {}, {}
    for (m, a), rows in sorted(groups.items()):
        s = _summary_row(m, rows)
        sweep_rows.append((m, _f(lr), _f(a), *s[1:]))
        if m not in best or float(s[3]) < float(best[m][3]):
            best[m], best_alpha[m] = s, a
    if log_dir is not None:
        cells = [Cell(m.split("(")[0], s, lr, best_alpha[m]) for m in sorted(best) for s in cfg.seeds]
        run_cells(cfg, cells, log_dir, workers)
    return lr, sweep_rows, [best[m] for m in sorted(best)]


def cmd_sweep(cfg: ExperimentConfig, out: Path, workers: int = 1) -> list[Path]:
    lr, rows, summary = sweep(cfg, workers, str(out / "logs"))
    return [
        _write_csv(out / "sweep.csv", SWEEP_HEADER, rows),
        _write_csv(out / "summary.csv", SUMMARY_HEADER, summary),
    ]


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def cmd_report(run_dirs: Sequence[str], out: Path) -> list[Path]:
    summaries, tradeoffs, scatter = [], [], []
    for d in map(Path, run_dirs):
        found = False
        if (d / "summary.csv").exists():
            summaries += _read_csv(d / "summary.csv")[1]
            found = True
        for p in sorted(d.glob("tradeoff_*.csv")):
            tradeoffs += _read_csv(p)[1]
            found = True
        if (d / "sweep.csv").exists():
            scatter += [[r[0], r[2], r[3], r[5]] for r in _read_csv(d / "sweep.csv")[1]]
        if not found:
            raise MissingSummaryError(f"{d} contains neither summary.csv nor tradeoff curves")
    written = []
    if summaries:
        summaries.sort(key=lambda r: r[0])
        written.append(_write_csv(out / "table.csv", SUMMARY_HEADER, summaries))
        pretty = [(r[0], format_mean_std(float(r[1]), float(r[2])), format_mean_std(float(r[3]), float(r[4])), r[5]) for r in summaries]
        written.append(_write_csv(out / "table_pretty.csv", ("method", "accuracy", "disparity", "bits_total"), pretty))
    if tradeoffs:
        tradeoffs.sort(key=lambda r: (r[0], float(r[1])))
        written.append(_write_csv(out / "tradeoff.csv", TRADEOFF_HEADER, tradeoffs))
    if scatter:
        scatter.sort(key=lambda r: (r[0], float(r[1])))
        written.append(_write_csv(out / "scatter.csv", ("method", "alpha", "acc_mean", "disp_mean"), scatter))
    return written


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairfedlab", description="Fair federated learning experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("analyze", "train", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seeds", help="comma-separated seeds, overriding the configuration")
        p.add_argument("--quant-bits", type=int, help="quantise FedFB statistics with this many bits")
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p = sub.add_parser("report")
    p.add_argument("runs", nargs="+", help="run directories to merge")
    p.add_argument("--out", help="output directory")
    return parser


def _out_dir(arg: str | None, cfg_out: str | None, mode: str) -> Path:
    root = arg or cfg_out or os.path.join(os.environ.get("FAIRFEDLAB_OUT", "runs"), mode)
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            written = cmd_report(args.runs, _out_dir(args.out, None, "report"))
        else:
            cfg = load_config(args.config)
            if cfg.mode != args.command:
                raise ConfigError(f"configuration mode {cfg.mode!r} does not match subcommand {args.command!r}")
            if args.seeds:
                try:
                    cfg.seeds = [int(s) for s in args.seeds.split(",")]
                except ValueError as exc:
                    raise ConfigError(f"bad --seeds value {args.seeds!r}") from exc
            if args.quant_bits is not None:
                cfg.protocol = {**cfg.protocol, "quant_bits": args.quant_bits}
            cfg.validate()
            out = _out_dir(args.out, cfg.out, cfg.mode)
            (out / "config.json").write_text(cfg.dumps())
            if cfg.mode == "analyze":
                written = cmd_analyze(cfg, out)
            elif cfg.mode == "train":
                written = cmd_train(cfg, out, args.workers)
            else:
                written = cmd_sweep(cfg, out, args.workers)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FairFedError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
