"""Seeded experiment runner, crude Monte Carlo references and output files.

Result tables are CSV with fixed column orders::

    results.csv  rep,seed,p_hat,delta_is,g_evals,converged
    summary.csv  model,dim,estimator,runs,converged_runs,excluded,mean_p_hat,cov_p_hat,mean_g_evals,reference
    timings.csv  rep,wall_time

Floats are written with ``repr`` so that files round-trip bit-exactly.
Wall-clock times live in their own file to keep the other outputs a pure
function of the master seed.
"""

from __future__ import annotations

import configparser
import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .models import REFERENCE_PROBABILITIES, get_model
from .ninits import NinitsConfig
from .nis import NisConfig, nis_run
from .sampling import make_rng, spawn_seeds

RESULT_COLUMNS = ["rep", "seed", "p_hat", "delta_is", "g_evals", "converged"]
SUMMARY_COLUMNS = [
    "model", "dim", "estimator", "runs", "converged_runs", "excluded",
    "mean_p_hat", "cov_p_hat", "mean_g_evals", "reference",
]


@dataclass
class ExperimentConfig:
    model: str
    dim: int | None = None
    estimator: str = "nis"
    repetitions: int = 100
    seed: int = 0
    mc_samples: int = 10**6
    same_seed: bool = False
    workers: int = 1
    output_dir: str | None = None
    dump_traces: bool = False
    nis: NisConfig = field(default_factory=NisConfig)

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.estimator not in ("nis", "mc"):
            raise ValueError("estimator must be 'nis' or 'mc'")
        get_model(self.model, self.dim)


@dataclass
class RunRecord:
    rep: int
    seed: int
    p_hat: float
    delta_is: float
    g_evals: int
    converged: bool
    wall_time: float = 0.0
    trace: dict | None = None


@dataclass
class SummaryTable:
    model: str
    dim: int
    estimator: str
    runs: int
    converged_runs: int
    excluded: int
    mean_p_hat: float
    cov_p_hat: float
    mean_g_evals: float
    reference: float | None


def mc_reference(model, n_samples: int, rng, chunk: int = 10**6):
    """Crude Monte Carlo estimate and its CoV ``sqrt((1 - p) / (n p))``."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = make_rng(rng)
    hits = 0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        hits += int(np.count_nonzero(model.failure_batch(rng.standard_normal((m, model.dim)))))
        done += m
    p = hits / n_samples
    cov = np.sqrt((1.0 - p) / (n_samples * p)) if p > 0 else np.inf
    return p, float(cov)


def summarise(records, model: str, dim: int, estimator: str, reference=None) -> SummaryTable:
    conv = [r for r in records if r.converged]
    p = np.array([r.p_hat for r in conv], dtype=float)
    mean_p = float(p.mean()) if p.size else float("nan")
    if p.size > 1 and mean_p != 0:
        cov = float(p.std(ddof=1) / mean_p)
    else:
        cov = 0.0 if p.size == 1 else float("nan")
    evals = float(np.mean([r.g_evals for r in records])) if records else float("nan")
    return SummaryTable(model, dim, estimator, len(records), len(conv), len(records) - len(conv), mean_p, cov, evals, reference)


def _run_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, np.uint64)[0])


def _single_run(args):
    rep, seed, config = args
    model = get_model(config.model, config.dim)
    rng = make_rng(seed)
    t0 = time.perf_counter()
    if config.estimator == "mc":
        p, cov = mc_reference(model, config.mc_samples, rng)
        rec = RunRecord(rep, seed, p, cov, model.count, True)
    else:
        res = nis_run(model, config.nis, rng)
        trace = res.to_dict(detail=False) if config.dump_traces else None
        rec = RunRecord(rep, seed, res.p_hat, res.delta_is, res.evaluations, res.converged, trace=trace)
    rec.wall_time = time.perf_counter() - t0
    return rec


def run_seeds(config: ExperimentConfig) -> list[int]:
    seqs = spawn_seeds(config.seed, config.repetitions)
    if config.same_seed:
        seqs = [seqs[0]] * config.repetitions
    return [_run_seed(s) for s in seqs]


def run_experiment(config: ExperimentConfig):
    """Run the repetitions and summarise; results are ordered by repetition."""
    jobs = [(i, s, config) for i, s in enumerate(run_seeds(config))]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            records = list(pool.map(_single_run, jobs))
    else:
        records = [_single_run(j) for j in jobs]
    model = get_model(config.model, config.dim)
    summary = summarise(records, config.model, model.dim, config.estimator, REFERENCE_PROBABILITIES.get(config.model))
    if config.output_dir:
        emit_outputs(records, summary, config.output_dir)
    return records, summary


# --- files ------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def emit_outputs(records, summary: SummaryTable | None, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"results": out / "results.csv", "summary": out / "summary.csv", "timings": out / "timings.csv"}
    with open(paths["results"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in RESULT_COLUMNS])
    with open(paths["timings"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rep", "wall_time"])
        for r in records:
            w.writerow([r.rep, repr(r.wall_time)])
    if summary is not None:
        with open(paths["summary"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_COLUMNS)
            w.writerow([_fmt(getattr(summary, c)) for c in SUMMARY_COLUMNS])
    traces = [r.trace for r in records if r.trace is not None]
    if traces:
        paths["traces"] = out / "traces.json"
        with open(paths["traces"], "w") as fh:
            json.dump(traces, fh, indent=1, default=_json_default)
    return paths


def read_results(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        RunRecord(int(r["rep"]), int(r["seed"]), float(r["p_hat"]), float(r["delta_is"]), int(r["g_evals"]), r["converged"] == "1")
        for r in rows
    ]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def figure_data(result) -> dict:
    """Plot-ready point clouds behind the chain-run, chain and importance-sample figures."""
    runs = []
    for label, run in enumerate(result.initial.runs):
        pts = np.concatenate([c.array() for c in run.chains])
        runs.append({"label": label, "outcome": run.outcome, "noise": run.noise, "points": pts.tolist()})
    return {
        "initial_samples": result.initial.samples.tolist(),
        "representatives": [p.tolist() for p in result.initial.representatives.points],
        "chain_runs": runs,
        "chains": [{"label": k, "points": np.asarray(c).tolist()} for k, c in enumerate(result.chains)],
        "importance_samples": {
            "points": result.importance_samples.tolist() if result.importance_samples is not None else [],
            "labels": result.importance_labels.tolist() if result.importance_labels is not None else [],
        },
        "params": result.params.to_dict() if result.params is not None else None,
        "p_hat": result.p_hat,
        "evaluations": result.evaluations,
    }


def dump_figure_data(model_name: str, dim: int | None, seed: int, path, nis_config: NisConfig | None = None) -> dict:
    model = get_model(model_name, dim)
    result = nis_run(model, nis_config or NisConfig(), make_rng(seed))
    data = figure_data(result)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, default=_json_default)
    return data


# --- config files -----------------------------------------------------------

def _parse_noise(text: str) -> np.ndarray:
    text = text.strip()
    if ":" in text:
        start, stop, step = (float(t) for t in text.split(":"))
        return np.round(np.arange(start, stop + 0.5 * step, step), 10)
    return np.array([float(t) for t in text.split(",")])


def _coerce(value: str, default):
    if isinstance(default, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(float(value))
    if isinstance(default, float):
        return float(value)
    return value.strip()


def load_config(path) -> ExperimentConfig:
    """Read a flat ``key = value`` file with a single ``[experiment]`` section.

    Keys naming NIS or initial-sampling parameters (``budget_multiplier``,
    ``n_is``, ``level_probability``, ``noise_sequence`` ...) override the
    defaults. ``noise_sequence`` accepts ``start:stop:step`` or a comma list.
    """
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    items = dict(parser["experiment"])
    nis_defaults = NisConfig()
    ninits_defaults = NinitsConfig()
    nis_kw, ninits_kw, exp_kw = {}, {}, {}
    exp_fields = {f.name for f in fields(ExperimentConfig)} - {"nis"}
    for key, value in items.items():
        if key == "noise_sequence":
            ninits_kw[key] = _parse_noise(value)
        elif key in ("dim",):
            exp_kw[key] = int(value) if value.strip() else None
        elif key in exp_fields:
            default = getattr(ExperimentConfig("pwl"), key)
            exp_kw[key] = value.strip() if default is None else _coerce(value, default)
        elif hasattr(nis_defaults, key) and key != "ninits":
            nis_kw[key] = _coerce(value, getattr(nis_defaults, key))
        elif hasattr(ninits_defaults, key):
            ninits_kw[key] = _coerce(value, getattr(ninits_defaults, key))
        else:
            raise KeyError(f"unknown configuration key {key!r}")
    if "sigma" in nis_kw:
        ninits_kw.setdefault("sigma", nis_kw["sigma"])
    nis = NisConfig(**nis_kw, ninits=NinitsConfig(**ninits_kw))
    return ExperimentConfig(**exp_kw, nis=nis)
