"""Fault-isolated candidate evaluation and run orchestration.

Evaluations are cached by (canonical expression, dataset id, train seed),
fan out to a local process pool when more than one worker is configured, and
never abort a batch: failures come back as statuses with sentinel objectives.
Checkpoints capture everything needed to resume a run bit-identically under
a single worker.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .datasets import DatasetSpec
from .evaluate import (STATUS_COMPILE_ERROR, EvalSettings, evaluate_individual)
from .evolution import (EvolutionConfig, GenerationLog, IdSource, SeedParseError,
                        generation_step, seed_population)
from .expression import ExpressionError, parse_expression
from .gptree import Individual, PrimitiveSet, SemType
from .nsga2 import ParetoArchive
from .objectives import ObjectiveVector, sentinel_objectives
from .pretrained import StubStore
from .primitives import build_primitive_set

CHECKPOINT_FORMAT = "neurevo-run-checkpoint"
CHECKPOINT_VERSION = 1


class CorruptCheckpoint(Exception):
    pass


@dataclass(frozen=True)
class EvalRequest:
    individual_id: int
    expression: str
    dataset_id: str
    train_seed: int

    @property
    def cache_key(self) -> tuple[str, str, int]:
        return (self.expression, self.dataset_id, self.train_seed)


@dataclass
class EvalResult:
    individual_id: int
    objectives: ObjectiveVector
    wall_time: float
    status: str
    cached: bool = False


# per-process state for pool workers
_WORKER: dict = {}


def _init_worker(dataset_spec_text: str, val_fraction: float,
                 settings_kwargs: dict, stub_dir: Optional[str]) -> None:
    _WORKER["pset"] = build_primitive_set()
    _WORKER["dataset"] = DatasetSpec.parse(dataset_spec_text).load(val_fraction)
    _WORKER["settings"] = EvalSettings(**settings_kwargs)
    _WORKER["stub_store"] = StubStore(stub_dir)


def _eval_task(expression: str, train_seed: int, timeout: Optional[float]):
    try:
        root = parse_expression(expression, _WORKER["pset"],
                                expected=SemType.PREDICTIONS)
    except ExpressionError as exc:
        sentinel = sentinel_objectives(_WORKER["settings"].sentinel_params)
        return (STATUS_COMPILE_ERROR, sentinel.error_rate, sentinel.param_count,
                0.0, str(exc))
    outcome = evaluate_individual(root, _WORKER["dataset"], _WORKER["settings"],
                                  train_seed, _WORKER["stub_store"], timeout)
    return (outcome.status, outcome.objectives.error_rate,
            outcome.objectives.param_count, outcome.wall_time, outcome.message)


class Evaluator:
    """Work queue over independent evaluation jobs with a result cache."""

    def __init__(self, pset: PrimitiveSet, dataset_spec: DatasetSpec,
                 settings: EvalSettings, train_seed: int, workers: int = 1,
                 timeout: Optional[float] = None, val_fraction: float = 0.1,
                 stub_dir: Optional[str] = None,
                 cache: Optional[dict] = None):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.pset = pset
        self.dataset_spec = dataset_spec
        self.dataset_id = dataset_spec.canonical_id
        self.settings = settings
        self.train_seed = train_seed
        self.workers = workers
        self.timeout = timeout
        self.val_fraction = val_fraction
        self.stub_dir = stub_dir
        self.cache: dict = cache if cache is not None else {}
        self._dataset = None
        self._stub_store = None
        self.executed_requests = 0

    def _local_state(self):
        if self._dataset is None:
            self._dataset = self.dataset_spec.load(self.val_fraction)
            self._stub_store = StubStore(self.stub_dir)
        return self._dataset, self._stub_store

    def _run_one(self, expression: str) -> tuple:
        dataset, stub_store = self._local_state()
        try:
            root = parse_expression(expression, self.pset, expected=SemType.PREDICTIONS)
        except ExpressionError as exc:
            sentinel = sentinel_objectives(self.settings.sentinel_params)
            return (STATUS_COMPILE_ERROR, sentinel.error_rate, sentinel.param_count,
                    0.0, str(exc))
        outcome = evaluate_individual(root, dataset, self.settings, self.train_seed,
                                      stub_store, self.timeout)
        return (outcome.status, outcome.objectives.error_rate,
                outcome.objectives.param_count, outcome.wall_time, outcome.message)

    def evaluate_batch(self, requests: list[EvalRequest]) -> list[EvalResult]:
        """Evaluate requests, preserving order; failures never abort the batch."""
        results: list[Optional[EvalResult]] = [None] * len(requests)
        fresh: dict[tuple, list[int]] = {}
        for i, req in enumerate(requests):
            hit = self.cache.get(req.cache_key)
            if hit is not None:
                status, err, params, wall = hit
                results[i] = EvalResult(req.individual_id,
                                        ObjectiveVector(err, params),
                                        wall, status, cached=True)
            else:
                fresh.setdefault(req.cache_key, []).append(i)

        ordered_keys = list(fresh)
        if ordered_keys:
            if self.workers == 1:
                raw = [self._run_one(key[0]) for key in ordered_keys]
            else:
                settings_kwargs = {
                    "patience": self.settings.patience,
                    "max_epochs": self.settings.max_epochs,
                    "lr": self.settings.lr,
                    "sentinel_params": self.settings.sentinel_params,
                    "dtype": self.settings.dtype,
                }
                with ProcessPoolExecutor(
                        max_workers=self.workers, initializer=_init_worker,
                        initargs=(self.dataset_spec.canonical_id, self.val_fraction,
                                  settings_kwargs, self.stub_dir)) as pool:
                    futures = [pool.submit(_eval_task, key[0], key[2], self.timeout)
                               for key in ordered_keys]
                    raw = [f.result() for f in futures]
            self.executed_requests += len(ordered_keys)
            for key, (status, err, params, wall, _msg) in zip(ordered_keys, raw):
                self.cache[key] = (status, err, params, wall)
                for rank, i in enumerate(fresh[key]):
                    results[i] = EvalResult(requests[i].individual_id,
                                            ObjectiveVector(err, params), wall,
                                            status, cached=rank > 0)
        return results  # type: ignore[return-value]

    def evaluate_population(self, individuals: list[Individual]) -> tuple[int, int]:
        """Assign objectives in place; returns (fresh evaluations, cache hits)."""
        requests = [EvalRequest(ind.id, ind.expression(), self.dataset_id,
                                self.train_seed) for ind in individuals]
        results = self.evaluate_batch(requests)
        hits = 0
        for ind, res in zip(individuals, results):
            ind.objectives = res.objectives
            hits += res.cached
        return len(individuals) - hits, hits


# -- run state and checkpointing ---------------------------------------------

@dataclass
class RunState:
    generation: int
    population: list[Individual]
    archive: ParetoArchive
    rng: random.Random
    id_source: IdSource
    logs: list[GenerationLog] = field(default_factory=list)
    hv_history: list[float] = field(default_factory=list)
    initial_best_error: Optional[float] = None
    dataset_id: str = ""
    train_seed: int = 0
    cache: dict = field(default_factory=dict)


def _individual_to_json(ind: Individual) -> dict:
    return {
        "id": ind.id,
        "expression": ind.expression(),
        "origin": ind.origin,
        "parent_ids": list(ind.parent_ids),
        "objectives": (None if ind.objectives is None
                       else [ind.objectives.error_rate, ind.objectives.param_count]),
    }


def _individual_from_json(data: dict, pset: PrimitiveSet) -> Individual:
    root = parse_expression(data["expression"], pset, expected=SemType.PREDICTIONS)
    obj = data["objectives"]
    return Individual(root, data["id"],
                      objectives=None if obj is None else ObjectiveVector(*obj),
                      parent_ids=tuple(data["parent_ids"]),
                      origin=data["origin"])


def save_checkpoint(path, state: RunState) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "generation": state.generation,
        "population": [_individual_to_json(i) for i in state.population],
        "archive": [_individual_to_json(i) for i in state.archive.members],
        "rng_state": [state.rng.getstate()[0],
                      list(state.rng.getstate()[1]),
                      state.rng.getstate()[2]],
        "id_counter": state.id_source.value,
        "logs": [{"generation": l.generation, "evaluated": l.evaluated,
                  "cache_hits": l.cache_hits, "best_error": l.best_error,
                  "archive_size": l.archive_size, "wall_seconds": l.wall_seconds,
                  "operator_counts": l.operator_counts} for l in state.logs],
        "hv_history": state.hv_history,
        "initial_best_error": state.initial_best_error,
        "dataset_id": state.dataset_id,
        "train_seed": state.train_seed,
        "cache": [[list(k), list(v)] for k, v in state.cache.items()],
    }
    text = json.dumps(payload, sort_keys=True)
    digest = hashlib.sha256(text.encode()).hexdigest()
    Path(path).write_text(f"{text}\ndigest:sha256:{digest}\n")


def builtin_seed_lines() -> list[str]:
    from importlib import resources
    text = resources.files("neurevo").joinpath("data/default_seeds.txt").read_text()
    return text.splitlines()


def _seed_lines_for(config) -> list[str]:
    if config.seed_file == "builtin":
        return builtin_seed_lines()
    return Path(config.seed_file).read_text().splitlines()


def _stub_dir_for(config) -> Optional[str]:
    if config.stub_dir == "auto":
        return str(Path(config.output_dir) / "stubs") if config.output_dir else None
    if config.stub_dir in ("", "memory"):
        return None
    return config.stub_dir


def write_run_artifacts(out_dir, state: RunState) -> None:
    """Persist the generation log, final archive and run summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ",".join(GenerationLog.CSV_COLUMNS)
    rows = [",".join(repr(v) if isinstance(v, float) else str(v)
                     for v in log.csv_row()) for log in state.logs]
    (out / "generation_log.csv").write_text("\n".join([header] + rows) + "\n")
    members = sorted(state.archive.members,
                     key=lambda m: (m.objectives.error_rate,
                                    m.objectives.param_count, m.id))
    archive_json = [{
        "expression": m.expression(),
        "error_rate": m.objectives.error_rate,
        "param_count": m.objectives.param_count,
        "id": m.id,
        "origin": m.origin,
    } for m in members]
    (out / "archive.json").write_text(json.dumps(archive_json, indent=2) + "\n")
    summary = {
        "generations_completed": state.generation,
        "initial_best_error": state.initial_best_error,
        "best_error": state.archive.best_error(),
        "archive_size": len(state.archive),
        "hypervolume_history": state.hv_history,
        "total_evaluated": sum(l.evaluated for l in state.logs),
        "total_cache_hits": sum(l.cache_hits for l in state.logs),
        "dataset_id": state.dataset_id,
    }
    (out / "run_summary.json").write_text(json.dumps(summary, indent=2) + "\n")


def run_evolution(config, resume_from=None,
                  progress: Optional[Callable[[GenerationLog], None]] = None,
                  write_artifacts: bool = True) -> RunState:
    """Execute (or resume) a full evolutionary run described by a RunConfig."""
    pset = build_primitive_set()
    evo = config.evolution_config()
    settings = config.eval_settings()
    spec = DatasetSpec.parse(config.dataset_spec)
    train_seed = config.effective_train_seed

    if resume_from is not None:
        state = load_checkpoint(resume_from, pset)
        if state.dataset_id != spec.canonical_id:
            raise CorruptCheckpoint(
                f"checkpoint is for dataset {state.dataset_id!r}, "
                f"config wants {spec.canonical_id!r}")
    else:
        rng = random.Random(evo.rng_seed)
        id_source = IdSource()
        population = seed_population(_seed_lines_for(config), pset, evo, rng, id_source)
        state = RunState(generation=0, population=population, archive=ParetoArchive(),
                         rng=rng, id_source=id_source,
                         dataset_id=spec.canonical_id, train_seed=train_seed)

    evaluator = Evaluator(pset, spec, settings, train_seed,
                          workers=config.workers, timeout=config.timeout_seconds,
                          val_fraction=config.val_fraction,
                          stub_dir=_stub_dir_for(config), cache=state.cache)
    ref_point = (1.0, settings.sentinel_params)
    out_dir = Path(config.output_dir) if config.output_dir else None

    carry_evaluated = carry_hits = 0
    if state.generation == 0 and not state.logs:
        carry_evaluated, carry_hits = evaluator.evaluate_population(state.population)
        state.archive.update(state.population)
        state.initial_best_error = state.archive.best_error()

    for gen in range(state.generation, evo.generations):
        state.population, log = generation_step(
            state.population, evo, pset, evaluator.evaluate_population,
            state.rng, state.archive, state.id_source, gen)
        log.evaluated += carry_evaluated
        log.cache_hits += carry_hits
        carry_evaluated = carry_hits = 0
        state.logs.append(log)
        state.hv_history.append(state.archive.hypervolume(ref_point))
        state.generation = gen + 1
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            save_checkpoint(out_dir / "checkpoint.json", state)
        if progress is not None:
            progress(log)
    if out_dir is not None and write_artifacts:
        write_run_artifacts(out_dir, state)
    return state


def load_checkpoint(path, pset: PrimitiveSet) -> RunState:
    raw = Path(path).read_text()
    parts = raw.rstrip("\n").rsplit("\n", 1)
    if len(parts) != 2 or not parts[1].startswith("digest:sha256:"):
        raise CorruptCheckpoint("missing digest footer")
    text, footer = parts
    digest = footer[len("digest:sha256:"):]
    if hashlib.sha256(text.encode()).hexdigest() != digest:
        raise CorruptCheckpoint("content digest mismatch")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptCheckpoint(f"unreadable payload: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint("not a run checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"unsupported version {payload.get('version')}")
    rng = random.Random()
    version, internal, gauss = payload["rng_state"]
    rng.setstate((version, tuple(internal), gauss))
    archive = ParetoArchive()
    archive.update([_individual_from_json(d, pset) for d in payload["archive"]])
    state = RunState(
        generation=payload["generation"],
        population=[_individual_from_json(d, pset) for d in payload["population"]],
        archive=archive,
        rng=rng,
        id_source=IdSource(payload["id_counter"]),
        logs=[GenerationLog(**d) for d in payload["logs"]],
        hv_history=list(payload["hv_history"]),
        initial_best_error=payload["initial_best_error"],
        dataset_id=payload["dataset_id"],
        train_seed=payload["train_seed"],
        cache={(k[0], k[1], k[2]): tuple(v) for k, v in payload["cache"]},
    )
    return state
