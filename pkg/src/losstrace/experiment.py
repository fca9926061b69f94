"""Sweep runner: models x training methods x contamination ratios x
repetitions, with deterministic per-cell seeds and CSV outputs.

Raw results go to one CSV (one row per cell), aggregates to a companion
summary CSV suitable for plotting metric-vs-ratio curves. Cells are
independent: each derives its own seed from the base seed and its
coordinates, so results do not depend on execution order or worker count,
and an interrupted sweep can be resumed (completed rows are kept, failed or
missing cells are recomputed).
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import (
    ContaminationSpec,
    MultivariateSeries,
    SyntheticConfig,
    WindowSet,
    apply_normalizer,
    fit_normalizer,
    generate_synthetic,
    inject_contamination,
    load_csv,
    make_windows,
)
from .errors import ConfigError, MetricError, ToolkitError
from .filtering import METHODS, VANILLA, RobustTrainConfig, robust_train
from .metrics import auc_roc, best_f1, coverage
from .models import (
    MODEL_KINDS,
    TrainConfig,
    TsadModel,
    anomaly_scores,
    build_model,
)
from .seeding import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_RATIOS = (0.0, 0.01, 0.02, 0.03, 0.04, 0.06, 0.08, 0.10, 0.13, 0.16, 0.20)

RAW_HEADER = [
    "model", "method", "ratio", "seed", "auc", "best_f1", "coverage",
    "discard_size", "wall_time_s",
]
SUMMARY_HEADER = [
    "model", "method", "ratio", "auc_mean", "auc_std", "f1_mean", "f1_std",
    "coverage_mean", "coverage_std",
]
NA = "NA"

OUT_DIR_ENV = "LOSSTRACE_OUT_DIR"


@dataclass
class SweepConfig:
    base_seed: int
    synthetic: SyntheticConfig | None = None
    train_csv: str | None = None
    test_csv: str | None = None
    model_kinds: tuple[str, ...] = MODEL_KINDS
    methods: tuple[str, ...] = METHODS
    ratios: tuple[float, ...] = DEFAULT_RATIOS
    repetitions: int = 5
    tau: float = 0.2
    trial_epochs: int = 10
    window: int = 16
    horizon: int = 1
    hidden_sizes: tuple[int, ...] = (32,)
    train_stride: int = 1
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 1e-3
    patience: int = 5

    def __post_init__(self) -> None:
        if self.base_seed < 0:
            raise ConfigError(f"base seed must be >= 0, got {self.base_seed}")
        has_synth = self.synthetic is not None
        has_csv = self.train_csv is not None or self.test_csv is not None
        if has_synth == has_csv:
            raise ConfigError(
                "configure exactly one dataset source: synthetic or CSV paths"
            )
        if has_csv and (self.train_csv is None or self.test_csv is None):
            raise ConfigError("CSV datasets need both train_csv and test_csv")
        if not self.model_kinds or set(self.model_kinds) - set(MODEL_KINDS):
            raise ConfigError(f"model kinds must be a non-empty subset of "
                              f"{MODEL_KINDS}, got {self.model_kinds}")
        if not self.methods or set(self.methods) - set(METHODS):
            raise ConfigError(f"methods must be a non-empty subset of "
                              f"{METHODS}, got {self.methods}")
        if not self.ratios or any(not 0.0 <= r <= 0.2 for r in self.ratios):
            raise ConfigError(f"ratios must be a non-empty subset of [0, 0.2], "
                              f"got {self.ratios}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        # surface bad training values early, before any cell runs
        TrainConfig(self.epochs, self.batch_size, self.learning_rate,
                    self.patience, 0)


@dataclass
class ResultRow:
    model: str
    method: str
    ratio: float
    seed: int
    auc: float | None
    best_f1: float | None
    coverage: float | None
    discard_size: int | None
    wall_time_s: float | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.auc is not None


@dataclass
class ExperimentResult:
    rows: list[ResultRow] = field(default_factory=list)


@dataclass
class DataBundle:
    """Shared per-sweep dataset artifacts (normalized)."""

    train_windows: WindowSet
    pool: WindowSet  # anomalous test windows, contamination source
    test: MultivariateSeries


_BUNDLE_CACHE: dict[str, DataBundle] = {}


def _bundle_key(cfg: SweepConfig) -> str:
    source = (
        {"synthetic": vars(cfg.synthetic)} if cfg.synthetic is not None
        else {"train_csv": cfg.train_csv, "test_csv": cfg.test_csv}
    )
    return json.dumps(
        {"source": source, "window": cfg.window, "stride": cfg.train_stride},
        default=str, sort_keys=True,
    )


def prepare_data(cfg: SweepConfig) -> DataBundle:
    """Load or generate the dataset, normalize it, and cut windows."""
    key = _bundle_key(cfg)
    cached = _BUNDLE_CACHE.get(key)
    if cached is not None:
        return cached
    if cfg.synthetic is not None:
        train, test = generate_synthetic(cfg.synthetic)
    else:
        assert cfg.train_csv is not None and cfg.test_csv is not None
        train, test = load_csv(cfg.train_csv), load_csv(cfg.test_csv)
    norm = fit_normalizer(train)
    train = apply_normalizer(norm, train)
    test = apply_normalizer(norm, test)
    train_windows = make_windows(train, cfg.window, cfg.train_stride)
    test_windows = make_windows(test, cfg.window, 1)
    pool = test_windows.subset(np.flatnonzero(test_windows.flags == 1))
    bundle = DataBundle(train_windows, pool, test)
    _BUNDLE_CACHE[key] = bundle
    return bundle


CellCoord = tuple[str, str, float, int]


def plan_cells(cfg: SweepConfig) -> list[CellCoord]:
    """Grid of (model kind, method, ratio, repetition index) cells."""
    return [
        (kind, method, float(ratio), rep)
        for kind in cfg.model_kinds
        for method in cfg.methods
        for ratio in cfg.ratios
        for rep in range(cfg.repetitions)
    ]


def cell_seed(cfg: SweepConfig, kind: str, method: str, ratio: float,
              rep: int) -> int:
    return derive_seed(cfg.base_seed, kind, method, float(ratio), rep)


def run_cell(
    cfg: SweepConfig,
    kind: str,
    method: str,
    ratio: float,
    rep: int,
    data: DataBundle | None = None,
) -> ResultRow:
    """Run one sweep cell: contaminate, robust-train, score, evaluate."""
    seed = cell_seed(cfg, kind, method, ratio, rep)
    start = time.perf_counter()
    try:
        bundle = data if data is not None else prepare_data(cfg)
        if bundle.test.labels is None:
            raise MetricError("test series has no labels; cannot evaluate")
        if ratio > 0:
            spec = ContaminationSpec(ratio, derive_seed(seed, "inject"),
                                     bundle.pool)
            train_ws, injected = inject_contamination(bundle.train_windows, spec)
        else:
            train_ws, injected = bundle.train_windows, set()
        rc = RobustTrainConfig(
            train=TrainConfig(
                epochs=cfg.epochs,
                batch_size=cfg.batch_size,
                learning_rate=cfg.learning_rate,
                patience=cfg.patience,
                seed=derive_seed(seed, "train"),
            ),
            tau=cfg.tau,
            trial_epochs=cfg.trial_epochs,
            method=method,
        )
        channels = bundle.test.channels

        def factory(model_seed: int) -> TsadModel:
            return build_model(kind, cfg.window, channels, cfg.horizon,
                               tuple(cfg.hidden_sizes), model_seed)

        model, report = robust_train(factory, train_ws, rc)
        scores = anomaly_scores(model, bundle.test, stride=1)
        auc = auc_roc(scores, bundle.test.labels)
        f1, _threshold = best_f1(scores, bundle.test.labels)
        cov = None
        if ratio > 0 and method != VANILLA:
            cov = coverage(injected, report.discard.tolist())
        wall = time.perf_counter() - start
        return ResultRow(kind, method, float(ratio), seed, auc, f1, cov,
                         int(report.discard.size), wall)
    except ToolkitError as exc:
        raise type(exc)(
            f"cell model={kind} method={method} ratio={ratio:g} rep={rep}: {exc}"
        ) from exc


def _run_cell_task(args: tuple[SweepConfig, str, str, float, int]) -> ResultRow:
    cfg, kind, method, ratio, rep = args
    try:
        return run_cell(cfg, kind, method, ratio, rep)
    except ToolkitError as exc:
        return ResultRow(kind, method, float(ratio),
                         cell_seed(cfg, kind, method, ratio, rep),
                         None, None, None, None, None, error=str(exc))


def run_sweep(
    cfg: SweepConfig,
    raw_path: str | None = None,
    workers: int = 1,
    record_timing: bool = False,
) -> ExperimentResult:
    """Execute all planned cells, reusing completed rows from raw_path.

    Failed cells produce rows with NA metrics (and a logged error) instead
    of aborting the sweep; they are retried on the next resume. Unless
    record_timing is set, wall times are written as NA so repeated sweeps
    with the same seed produce byte-identical files.
    """
    plan = plan_cells(cfg)
    done: dict[CellCoord, ResultRow] = {}
    if raw_path is not None:
        for row in read_results_if_exists(raw_path):
            if row.ok:
                done[_row_coord(cfg, row)] = row

    pending = [c for c in plan if c not in done]
    rows: list[ResultRow] = [done[c] for c in plan if c in done]
    if workers > 1 and len(pending) > 1:
        tasks = [(cfg, *coord) for coord in pending]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows.extend(pool.map(_run_cell_task, tasks))
    else:
        for coord in pending:
            rows.append(_run_cell_task((cfg, *coord)))

    for row in rows:
        if row.error:
            logger.error("sweep cell failed: %s", row.error)
        if not record_timing:
            row.wall_time_s = None

    kind_order = {k: i for i, k in enumerate(cfg.model_kinds)}
    method_order = {m: i for i, m in enumerate(cfg.methods)}
    rows.sort(key=lambda r: (kind_order.get(r.model, 99),
                             method_order.get(r.method, 99), r.ratio, r.seed))
    return ExperimentResult(rows)


def _row_coord(cfg: SweepConfig, row: ResultRow) -> CellCoord:
    """Recover the (kind, method, ratio, rep) coordinates of a stored row
    by matching its seed against the planned repetitions."""
    for rep in range(cfg.repetitions):
        if cell_seed(cfg, row.model, row.method, row.ratio, rep) == row.seed:
            return (row.model, row.method, row.ratio, rep)
    return (row.model, row.method, row.ratio, -1)


def _fmt(value: float | int | None, spec: str = "r") -> str:
    if value is None:
        return NA
    if spec == "g":
        return f"{value:g}"
    if spec == "t":
        return f"{value:.3f}"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def write_results(result: ExperimentResult, path: str) -> None:
    """Write the raw per-cell CSV (header: model,method,ratio,seed,auc,
    best_f1,coverage,discard_size,wall_time_s)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RAW_HEADER)
        for r in result.rows:
            writer.writerow([
                r.model, r.method, _fmt(r.ratio, "g"), str(r.seed),
                _fmt(r.auc), _fmt(r.best_f1), _fmt(r.coverage),
                _fmt(r.discard_size), _fmt(r.wall_time_s, "t"),
            ])


def read_results_if_exists(path: str) -> list[ResultRow]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        return []
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RAW_HEADER:
            raise ConfigError(f"{path}: unexpected results header "
                              f"{reader.fieldnames}")
        rows = []
        for rec in reader:
            rows.append(ResultRow(
                model=rec["model"],
                method=rec["method"],
                ratio=float(rec["ratio"]),
                seed=int(rec["seed"]),
                auc=_parse(rec["auc"]),
                best_f1=_parse(rec["best_f1"]),
                coverage=_parse(rec["coverage"]),
                discard_size=_parse_int(rec["discard_size"]),
                wall_time_s=_parse(rec["wall_time_s"]),
            ))
    return rows


def _parse(cell: str) -> float | None:
    return None if cell == NA else float(cell)


def _parse_int(cell: str) -> int | None:
    return None if cell == NA else int(cell)


@dataclass
class SummaryRow:
    model: str
    method: str
    ratio: float
    auc_mean: float
    auc_std: float
    f1_mean: float
    f1_std: float
    coverage_mean: float | None
    coverage_std: float | None


def summarize(result: ExperimentResult) -> list[SummaryRow]:
    """Mean and population standard deviation per (model, method, ratio),
    over successful rows; groups keep their order of first appearance."""
    groups: dict[tuple[str, str, float], list[ResultRow]] = {}
    for row in result.rows:
        groups.setdefault((row.model, row.method, row.ratio), []).append(row)
    out = []
    for (model, method, ratio), rows in groups.items():
        good = [r for r in rows if r.ok]
        if not good:
            continue
        aucs = np.array([r.auc for r in good], dtype=np.float64)
        f1s = np.array([r.best_f1 for r in good], dtype=np.float64)
        covs = np.array([r.coverage for r in good if r.coverage is not None],
                        dtype=np.float64)
        out.append(SummaryRow(
            model, method, ratio,
            float(aucs.mean()), float(aucs.std()),
            float(f1s.mean()), float(f1s.std()),
            float(covs.mean()) if covs.size else None,
            float(covs.std()) if covs.size else None,
        ))
    return out


def write_summary(result: ExperimentResult, path: str) -> None:
    """Write mean/std aggregates (header: model,method,ratio,auc_mean,
    auc_std,f1_mean,f1_std,coverage_mean,coverage_std)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for s in summarize(result):
            writer.writerow([
                s.model, s.method, _fmt(s.ratio, "g"),
                _fmt(s.auc_mean), _fmt(s.auc_std),
                _fmt(s.f1_mean), _fmt(s.f1_std),
                _fmt(s.coverage_mean), _fmt(s.coverage_std),
            ])
