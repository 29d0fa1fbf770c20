"""Experiment orchestration: datasets, the (data set x run) matrix, metrics and reports.

Layout of an output directory::

    <out>/data/<model>-ds<k>/          simulated datasets (manifest.json + CSVs)
    <out>/<model>/<tag>/ds<k>-run<r>/  checkpoint.json, history.csv, <split>/traj-<i>.csv
    <out>/<model>/<tag>/metrics[-<split>].json

``<tag>`` is the variant plus setting and regime, e.g. ``pinn-c-s2-low``.
Every JSON file carries ``"schema": 1`` and is written with sorted keys so a
re-run with the same config and seeds reproduces it byte for byte.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import counterexamples as ce
from . import cstr, registry, separator, structural
from . import training as T
from .dae import DaeSystem
from .datagen import Dataset, build_dataset, simulate_rows
from .errors import ArgumentError, MetricError, PinnDaeError
from .net import Network

log = logging.getLogger(__name__)

SCHEMA = 1


# -- metrics -------------------------------------------------------------------------

def mape(predictions, truths) -> float:
    """Mean absolute percentage error in percent."""
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truths, dtype=float).ravel()
    if p.shape != t.shape:
        raise ArgumentError("prediction and truth lengths differ")
    if t.size == 0:
        raise MetricError("no points to score")
    if np.any(t == 0):
        raise MetricError("MAPE is undefined for a zero truth value")
    return float(100.0 * np.mean(np.abs(p - t) / np.abs(t)))


def r2(predictions, truths) -> float:
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truths, dtype=float).ravel()
    if p.shape != t.shape:
        raise ArgumentError("prediction and truth lengths differ")
    if t.size < 2:
        raise MetricError("R^2 needs at least two points")
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0:
        raise MetricError("R^2 is undefined for a constant truth")
    return 1.0 - float(np.sum((p - t) ** 2)) / ss_tot


# -- configuration -------------------------------------------------------------------------

# per model: (n_total, n_test, n_train low, n_train high, extrapolation count)
SIZES = {
    "cstr": (100, 20, 20, 80, 20),
    "separator": (200, 40, 20, 160, 0),
    "counterexample-sm5": (1, 1, 1, 1, 0),
    "counterexample-sm6": (1, 1, 1, 1, 0),
}
WIDTHS = {
    ("cstr", "low"): [32, 32], ("cstr", "high"): [64, 64],
    ("separator", "low"): [32, 32], ("separator", "high"): [128, 128],
}
SCHEDULES = {
    "cstr": {"adam": {"epochs": 2000}, "lbfgs": {"epochs": 15000}},
    "separator": {"adam": {"epochs": 2000}, "lbfgs": {"epochs": 5000}},
    "counterexample-sm5": {"adam": {"epochs": 1000}, "lbfgs": {"epochs": 1000}},
    "counterexample-sm6": {"adam": {"epochs": 1000}, "lbfgs": {"epochs": 500}},
}
COLLOCATION = {"cstr": 2000, "separator": 2000, "counterexample-sm5": 1000,
               "counterexample-sm6": 1000}


@dataclass
class ExperimentConfig:
    model_id: str
    variant: str
    setting: int = 0
    regime: str = "low"
    seed: int = 0
    n_datasets: int = 2
    n_runs: int = 2
    out_dir: str = "runs"
    hidden: list[int] | None = None
    n_test: int | None = None
    n_train: int | None = None
    n_segments: int | None = None
    extrapolation: bool = False
    loss: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)

    def __post_init__(self):
        registry.system(self.model_id, self.variant, self.setting)
        if self.regime not in ("low", "high"):
            raise ArgumentError("regime must be 'low' or 'high'")
        if self.n_datasets < 1 or self.n_runs < 1:
            raise ArgumentError("need at least one data set and one run")
        if self.extrapolation and self.model_id != "cstr":
            raise ArgumentError("an extrapolation split exists for cstr only")
        if self.n_segments is not None and self.model_id != "separator":
            raise ArgumentError("n_segments applies to the separator only")

    @classmethod
    def from_dict(cls, d: dict, env=None, paper_scale: bool = False) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ArgumentError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        env = os.environ if env is None else env
        if env.get("PINNDAE_SEED"):
            d["seed"] = int(env["PINNDAE_SEED"])
        if env.get("PINNDAE_OUT"):
            d["out_dir"] = env["PINNDAE_OUT"]
        if paper_scale:
            d["n_datasets"] = d["n_runs"] = 5
        return cls(**d)

    @classmethod
    def from_file(cls, path, env=None, paper_scale: bool = False) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()), env, paper_scale)

    @property
    def tag(self) -> str:
        s = f"-s{self.setting}" if self.setting else ""
        return f"{self.variant}{s}-{self.regime}"

    @property
    def root(self) -> Path:
        return Path(self.out_dir) / self.model_id / self.tag

    def system(self) -> DaeSystem:
        return registry.system(self.model_id, self.variant, self.setting)

    def widths(self) -> list[int]:
        if self.hidden is not None:
            return list(self.hidden)
        return WIDTHS.get((self.model_id, self.regime), [32, 32])

    def loss_config(self) -> T.LossConfig:
        kw = {"n_collocation": COLLOCATION[self.model_id]}
        if self.model_id.startswith("counterexample"):
            kw["n_init"] = 1
        kw.update(self.loss)
        return T.LossConfig(**kw)

    def optimizer_schedule(self) -> T.OptimizerSchedule:
        base = SCHEDULES[self.model_id]
        merged = {k: {**base.get(k, {}), **self.schedule.get(k, {})} for k in ("adam", "lbfgs")}
        return T.OptimizerSchedule.from_dict(merged)

    def dataset_seed(self, k: int) -> int:
        return self.seed * 100 + k

    def init_seed(self, k: int, run: int) -> int:
        return self.dataset_seed(k) * 100 + run


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_json(obj))


# -- datasets ---------------------------------------------------------------------------

def n_train_for(config: ExperimentConfig) -> int:
    _, _, n_low, n_high, _ = SIZES[config.model_id]
    if config.n_train is not None:
        return config.n_train
    return n_low if config.regime == "low" else n_high


def dataset_dir(config: ExperimentConfig, k: int) -> Path:
    name = f"{config.model_id}-ds{k}-n{n_train_for(config)}"
    if config.n_test is not None:
        name += f"-t{config.n_test}"
    if config.n_segments is not None:
        name += f"-ns{config.n_segments}"
    return Path(config.out_dir) / "data" / name


def _build(config: ExperimentConfig, k: int) -> Dataset:
    """Simulate the test split and the first ``n_train`` trajectories of the train pool.

    The split order is fixed by the data-set seed, so the low-data train split
    is a prefix of the high-data one.
    """
    n_total, n_test, _, _, n_extra = SIZES[config.model_id]
    seed = config.dataset_seed(k)
    model = registry.process_model(config.model_id, config.n_segments)
    if config.model_id.startswith("counterexample"):
        x0 = ce.SM5_X0 if config.model_id.endswith("sm5") else ce.SM6_X0
        tr = simulate_rows(model, [dict(x0)])
        return Dataset(model.model_id, seed, dict(model.ranges), {"train": tr, "test": tr})
    n_test = n_test if config.n_test is None else config.n_test
    n_train = n_train_for(config)
    extra = {}
    if config.model_id == "cstr":
        extra["extrapolation"] = (cstr.EXTRAPOLATION_RANGES, n_extra)
    return build_dataset(config.model_id, None, max(n_total, n_test + n_train), n_test, n_train,
                         seed, extra, model=model)


def load_or_build_dataset(config: ExperimentConfig, k: int) -> Dataset:
    path = dataset_dir(config, k)
    if (path / "manifest.json").exists():
        return Dataset.load(path)
    ds = _build(config, k)
    ds.save(path, {"model_id": config.model_id, "dataset": k, "n_segments": config.n_segments})
    return ds


# -- evaluation -----------------------------------------------------------------------------

def predictions(system: DaeSystem, net: Network, traj) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """``{state: (prediction, truth)}`` in physical units for every network output."""
    Y = system.to_physical(net(system.input_matrix(traj)))
    return {n: (Y[:, j], system.truth(traj, n)) for j, n in enumerate(system.output_names)}


def _safe(fn, p, t):
    try:
        return fn(p, t)
    except MetricError:
        return None


def evaluate(system: DaeSystem, net: Network, trajectories, csv_dir: Path | None = None) -> dict:
    """Per-state MAPE averaged over trajectories and R^2 over the pooled points."""
    per_traj: dict[str, list] = {n: [] for n in system.output_names}
    pooled: dict[str, tuple[list, list]] = {n: ([], []) for n in system.output_names}
    for i, traj in enumerate(trajectories):
        pred = predictions(system, net, traj)
        for n, (p, t) in pred.items():
            per_traj[n].append(_safe(mape, p, t))
            pooled[n][0].append(p)
            pooled[n][1].append(t)
        if csv_dir is not None:
            write_predictions(csv_dir / f"traj-{i:03d}.csv", traj.t, pred)
    out = {"mape": {}, "r2": {}, "n_trajectories": len(trajectories)}
    for n in system.output_names:
        vals = per_traj[n]
        out["mape"][n] = None if any(v is None for v in vals) else float(np.mean(vals))
        out["r2"][n] = _safe(r2, np.concatenate(pooled[n][0]), np.concatenate(pooled[n][1]))
    return out


def write_predictions(path: Path, t, pred: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(pred)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *(f"{n}_{kind}" for n in names for kind in ("pred", "true"))])
        for i, ti in enumerate(t):
            row = [repr(float(ti))]
            for n in names:
                row += [repr(float(pred[n][0][i])), repr(float(pred[n][1][i]))]
            w.writerow(row)


@dataclass
class MetricReport:
    dataset: int
    run: int
    seed: int
    split: str
    status: str
    mape: dict = field(default_factory=dict)
    r2: dict = field(default_factory=dict)
    n_trajectories: int = 0
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(reports: list[MetricReport]) -> dict:
    ok = [r for r in reports if r.status == "ok"]
    out = {}
    if not ok:
        return out
    for n in ok[0].mape:
        m = [r.mape[n] for r in ok if r.mape.get(n) is not None]
        q = [r.r2[n] for r in ok if r.r2.get(n) is not None]
        out[n] = {
            "mape_mean": float(np.mean(m)) if m else None,
            "mape_median": float(np.median(m)) if m else None,
            "r2_mean": float(np.mean(q)) if q else None,
        }
    return out


def metrics_path(config: ExperimentConfig, split: str) -> Path:
    return config.root / ("metrics.json" if split == "test" else f"metrics-{split}.json")


def _write_metrics(config: ExperimentConfig, split: str, reports: list[MetricReport]) -> dict:
    doc = {
        "schema": SCHEMA,
        "config": asdict(config),
        "split": split,
        "runs": [r.to_dict() for r in reports],
        "summary": summarize(reports),
    }
    doc["config"].pop("out_dir")
    _write_json(metrics_path(config, split), doc)
    return doc


# -- running -------------------------------------------------------------------------------

def run_dir(config: ExperimentConfig, k: int, run: int) -> Path:
    return config.root / f"ds{k}-run{run}"


def train_one(config: ExperimentConfig, k: int, run: int, ds: Dataset | None = None) -> T.TrainResult:
    ds = ds or load_or_build_dataset(config, k)
    system = config.system()
    loss = config.loss_config()
    problem = T.build_problem(system, ds.train, loss, config.dataset_seed(k))
    net = T.make_network(system, config.widths(), seed=config.init_seed(k, run))
    res = T.train(net, problem, loss, config.optimizer_schedule())
    d = run_dir(config, k, run)
    d.mkdir(parents=True, exist_ok=True)
    res.write_history(d / "history.csv")
    res.net.save(d / "checkpoint.json", {
        "model_id": config.model_id, "variant": config.variant, "setting": config.setting,
        "dataset": k, "run": run, "seed": config.init_seed(k, run),
        "input_names": system.input_names, "output_names": system.output_names,
        "weights": res.weights, "lbfgs_status": res.lbfgs_status,
    })
    return res


def evaluate_run(config: ExperimentConfig, k: int, run: int, split: str = "test",
                 ds: Dataset | None = None, net: Network | None = None) -> MetricReport:
    ds = ds or load_or_build_dataset(config, k)
    if split not in ds.splits:
        raise ArgumentError(f"dataset has no {split!r} split")
    d = run_dir(config, k, run)
    net = net or Network.load(d / "checkpoint.json")
    m = evaluate(config.system(), net, ds.splits[split], d / split)
    return MetricReport(k, run, config.init_seed(k, run), split, "ok", m["mape"], m["r2"],
                        m["n_trajectories"])


def train_matrix(config: ExperimentConfig) -> list[MetricReport]:
    """Train every (data set, run) pair; write checkpoints and test metrics."""
    splits = ["test"] + (["extrapolation"] if config.extrapolation else [])
    reports: dict[str, list[MetricReport]] = {s: [] for s in splits}
    for k in range(config.n_datasets):
        ds = load_or_build_dataset(config, k)
        for run in range(config.n_runs):
            try:
                res = train_one(config, k, run, ds)
            except PinnDaeError as exc:
                log.warning("ds%d run%d failed: %s", k, run, exc)
                for s in splits:
                    reports[s].append(MetricReport(k, run, config.init_seed(k, run), s,
                                                   "diverged", error=str(exc)))
                continue
            for s in splits:
                reports[s].append(evaluate_run(config, k, run, s, ds, res.net))
    for s in splits:
        _write_metrics(config, s, reports[s])
    return reports["test"]


def eval_matrix(config: ExperimentConfig, split: str = "test") -> list[MetricReport]:
    """Re-evaluate saved checkpoints on ``split``; missing checkpoints count as failed runs."""
    reports = []
    for k in range(config.n_datasets):
        ds = load_or_build_dataset(config, k)
        for run in range(config.n_runs):
            if not (run_dir(config, k, run) / "checkpoint.json").exists():
                reports.append(MetricReport(k, run, config.init_seed(k, run), split, "missing",
                                            error="no checkpoint"))
                continue
            reports.append(evaluate_run(config, k, run, split, ds))
    _write_metrics(config, split, reports)
    return reports


def run_experiment(config: ExperimentConfig) -> list[MetricReport]:
    return train_matrix(config)


# -- reports -----------------------------------------------------------------------------

def _fmt(v, spec):
    return "-" if v is None else format(v, spec)


def render_metrics(doc: dict) -> str:
    """Plain-text table of a metrics document: one row per run plus a summary."""
    runs = doc["runs"]
    names = list(next((r["mape"] for r in runs if r["status"] == "ok"), {}))
    cfg = doc["config"]
    head = f"{cfg['model_id']} {cfg['variant']} setting={cfg['setting']} regime={cfg['regime']} " \
           f"split={doc['split']}"
    lines = [head, "MAPE %"]
    lines.append("run        " + "".join(f"{n:>10}" for n in names))
    for r in runs:
        label = f"ds{r['dataset']}-run{r['run']}"
        if r["status"] != "ok":
            lines.append(f"{label:<11}{r['status']}")
            continue
        lines.append(f"{label:<11}" + "".join(f"{_fmt(r['mape'][n], '.3f'):>10}" for n in names))
    s = doc["summary"]
    if s:
        lines.append("mean       " + "".join(f"{_fmt(s[n]['mape_mean'], '.3f'):>10}" for n in names))
        lines.append("median     " + "".join(f"{_fmt(s[n]['mape_median'], '.3f'):>10}" for n in names))
        lines.append("R2 mean    " + "".join(f"{_fmt(s[n]['r2_mean'], '.4f'):>10}" for n in names))
    return "\n".join(lines) + "\n"


def report(out_dir) -> str:
    """Concatenate the tables of every metrics file below ``out_dir`` in path order."""
    paths = sorted(Path(out_dir).glob("*/*/metrics*.json"))
    return "\n".join(render_metrics(json.loads(p.read_text())) for p in paths)


def incidence_report(model_id: str, variant: str, setting: int = 0) -> tuple[str, dict]:
    system = registry.system(model_id, variant, setting)
    m = system.incidence()
    result = structural.full_column_rank(m)
    verdict = json.loads(structural.verdict_json(m, result))
    verdict.update({"schema": SCHEMA, "model_id": model_id, "variant": variant, "setting": setting})
    return structural.render(m, result), verdict


# -- counter-example demos -----------------------------------------------------------------

def sm5_demo(seed: int = 0, schedule: T.OptimizerSchedule | None = None) -> dict:
    """Rank-deficient matrix, yet training recovers x2 and x3."""
    _, verdict = incidence_report("counterexample-sm5", "pinn")
    system = ce.sm5_system()
    traj = simulate_rows(ce.sm5_process(), [dict(ce.SM5_X0)])[0]
    cfg = T.LossConfig(n_collocation=COLLOCATION["counterexample-sm5"], n_init=1)
    sched = schedule or T.OptimizerSchedule.from_dict(SCHEDULES["counterexample-sm5"])
    net = T.make_network(system, (32, 32), seed=seed)
    res = T.train(net, T.build_problem(system, [traj], cfg, seed), cfg, sched)
    m = evaluate(system, res.net, [traj])
    return {
        "schema": SCHEMA, "model_id": "counterexample-sm5", "seed": seed,
        "full_column_rank": verdict["full_column_rank"],
        "mape": m["mape"],
        "final_loss": res.history[-1]["total"] if res.history else None,
        "estimated": m["mape"]["x2"] < 5.0 and m["mape"]["x3"] < 5.0,
    }


def sm6_demo(seeds=(0, 1), schedule: T.OptimizerSchedule | None = None, tol: float = 0.05) -> dict:
    """Full-rank matrix, yet two seeds fit y equally well with different (x1, x2).

    Each seed's fit satisfies its own dynamics ``dx1/dt = x1 + x2 + y``; the
    pairs themselves disagree, which is the non-uniqueness witness.
    """
    _, verdict = incidence_report("counterexample-sm6", "pinn")
    system = ce.sm6_system()
    traj = simulate_rows(ce.sm6_process(), [dict(ce.SM6_X0)])[0]
    cfg = T.LossConfig(n_collocation=COLLOCATION["counterexample-sm6"], n_init=1)
    sched = schedule or T.OptimizerSchedule.from_dict(SCHEDULES["counterexample-sm6"])
    X = system.input_matrix(traj)
    fits = {}
    for seed in seeds:
        net = T.make_network(system, (32, 32), seed=seed)
        res = T.train(net, T.build_problem(system, [traj], cfg, seed), cfg, sched)
        Y, dY, _ = res.net.forward(X, with_time=True)
        x1, x2, y = Y.T
        dx1 = dY[:, 0] * system.time_scale
        fits[seed] = {
            "x1": x1, "x2": x2,
            "y_mape": mape(y, traj.column("y")),
            "y_max_error": float(np.max(np.abs(y - traj.column("y")))),
            "balance_rms": float(np.sqrt(np.mean((dx1 - (x1 + x2 + y)) ** 2))),
        }
    a, b = (fits[s] for s in seeds[:2])
    gap = float(max(np.max(np.abs(a["x1"] - b["x1"])), np.max(np.abs(a["x2"] - b["x2"]))))
    return {
        "schema": SCHEMA, "model_id": "counterexample-sm6", "seeds": list(seeds),
        "full_column_rank": verdict["full_column_rank"],
        "x1_x2_gap": gap,
        "runs": {str(s): {k: v for k, v in f.items() if k not in ("x1", "x2")}
                 for s, f in fits.items()},
        # the pairs must disagree by far more than either seed misses the data
        "non_unique": gap > 10 * max(f["y_max_error"] for f in fits.values())
        and all(f["balance_rms"] < tol for f in fits.values()),
    }


def dump_segments(path, state=(0.12, 0.10), controls=(5e-4, 3e-4), d32=1e-3, rv=None,
                  n_segments: int | None = None) -> separator.RateResult:
    params = separator.DEFAULT_PARAMS
    if n_segments is not None:
        params = separator.with_segments(params, n_segments)
    r = separator.rates(state[1], state[0], sum(controls), d32, rv, params, diagnostics=True)
    r.dump_csv(path)
    return r
