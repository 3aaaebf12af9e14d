"""Attack, sweep and analysis commands with on-disk persistence.

Output layout of ``run_attack``::

    out/manifest.json   written before the first attack, finalized after the last
    out/outcomes.jsonl  one attack outcome per sample, dataset order, no timings
    out/records.jsonl   one evaluation record per sample (includes wall time)
    out/summary.json    aggregate scores and the merged query ledger
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

from . import rpc
from .analysis import (
    AnalysisRecord,
    IoFailure,
    PosMapping,
    RuleTagger,
    Tagger,
    TransitionMatrix,
    emit_figures,
    is_qualifying,
    map_to_upos,
    pos_diff,
)
from .beam import AttackConfig, AttackOutcome, ConfigInvalid, attack, failure_outcome
from .candidates import CandidateProvider
from .config import (
    RunConfig,
    build_provider,
    build_similarity,
    build_victim,
    canonical_attack_key,
    coerce_attack_value,
    load_config,
    parse_config,
    read_ini,
)
from .data import fingerprint, load_dataset
from .evaluation import EvaluationRecord, NoValidRecords, aggregate, evaluate_sample, format_summary
from .text_core import TokenizedDocument
from .victims import QueryLedger, Victim, VictimUnavailable

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ALL_FAILED = 3

SWEEP_COLUMNS = ["k", "h", "b", "method", "queries_per_example", "success", "semantic", "character", "bodega"]


class NoSuccessfulSamples(ValueError):
    pass


@dataclass
class Components:
    victim: Optional[Victim]
    provider: CandidateProvider
    similarity: Any
    victim_error: Optional[str] = None

    def describe(self) -> dict:
        return {
            "victim": self.victim.describe() if self.victim else {"error": self.victim_error},
            "provider": self.provider.describe(),
            "similarity": self.similarity.describe(),
        }

    def close(self) -> None:
        for part in (self.victim, self.provider, self.similarity):
            close = getattr(part, "close", None)
            if close:
                close()


@dataclass
class SampleResult:
    outcome: AttackOutcome
    record: EvaluationRecord
    ledger: QueryLedger


@dataclass
class RunResult:
    exit_status: int
    summary: dict
    paths: dict = field(default_factory=dict)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_json(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    tmp.replace(path)


def _dumps_line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


def build_components(cfg: RunConfig) -> Components:
    """Instantiate victim, provider and similarity.

    An unreachable victim is recorded rather than raised so the run can
    still emit one failure outcome per sample.
    """
    try:
        provider = build_provider(cfg)
        similarity = build_similarity(cfg)
    except rpc.TransportError as exc:
        raise ConfigInvalid(str(exc)) from exc
    except Exception as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        raise ConfigInvalid(f"{type(exc).__name__}: {exc}") from exc
    try:
        victim = build_victim(cfg)
    except VictimUnavailable as exc:
        logger.error("victim unavailable: %s", exc)
        return Components(None, provider, similarity, f"VictimUnavailable: {exc}")
    return Components(victim, provider, similarity)


def _invalid_record(doc: TokenizedDocument, outcome: AttackOutcome, note: str, task: str, victim: str) -> EvaluationRecord:
    return EvaluationRecord(
        sample_id=doc.id, confusion=0, semantic=0.0, character=1.0, bodega=0.0, wsr_percent=0.0,
        queries=int(outcome.queries.get("total", 0)), success_edits=0, valid=False,
        wall_time_s=outcome.wall_time_s, task=task, victim=victim, note=note,
    )


def attack_sample(doc: TokenizedDocument, comps: Components, config: AttackConfig,
                  task: str = "", victim_name: str = "") -> SampleResult:
    """Attack and evaluate one sample. Never raises."""
    ledger = QueryLedger()
    started = time.perf_counter()
    if comps.victim is None:
        outcome = failure_outcome(doc, ledger, started, stop_reason="error", error=comps.victim_error)
        return SampleResult(outcome, _invalid_record(doc, outcome, comps.victim_error, task, victim_name), ledger)
    try:
        outcome = attack(doc, comps.victim, comps.provider, comps.similarity, config, ledger)
        record = evaluate_sample(doc, outcome, comps.victim, comps.similarity, ledger,
                                 task=task, victim_name=victim_name)
    except Exception as exc:  # crash isolation: one bad sample must not end the run
        logger.exception("sample %s crashed", doc.id)
        note = f"crash: {type(exc).__name__}: {exc}"
        outcome = failure_outcome(doc, ledger, started, stop_reason="error", error=note)
        record = _invalid_record(doc, outcome, note, task, victim_name)
    return SampleResult(outcome, record, ledger)


def run_samples(docs: Sequence[TokenizedDocument], comps: Components, config: AttackConfig,
                workers: int = 1, task: str = "", victim_name: str = "",
                on_result: Optional[Callable[[SampleResult], None]] = None) -> list[SampleResult]:
    """Attack ``docs``; ``on_result`` sees results in dataset order from a single thread."""
    def one(doc):
        return attack_sample(doc, comps, config, task, victim_name)

    results = []

    def collect(stream: Iterable[SampleResult]) -> None:
        for res in stream:
            results.append(res)
            if on_result:
                on_result(res)

    if workers <= 1:
        collect(map(one, docs))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            collect(pool.map(one, docs))
    return results


def summarize(results: Sequence[SampleResult], task: str = "", victim: str = "") -> dict:
    n = len(results)
    successes = sum(r.outcome.success for r in results)
    errored = sum(r.outcome.error is not None for r in results)
    ledger = QueryLedger()
    for r in results:
        ledger.merge(r.ledger)
    summary: dict[str, Any] = {
        "task": task,
        "victim": victim,
        "samples_total": n,
        "attack_successes": successes,
        "success_rate": successes / n if n else None,
        "errored": errored,
    }
    try:
        summary.update(aggregate([r.record for r in results]))
    except NoValidRecords:
        logger.warning("no valid evaluation records; aggregate scores left empty")
        summary.update({k: None for k in ("bodega", "confusion", "semantic", "character", "queries")})
    summary["query_ledger"] = ledger.snapshot()
    return summary


def run_attack(config_path, dataset_path, out_dir, seed: Optional[int] = None, workers: int = 1,
               max_queries: Optional[int] = None, echo: bool = True) -> RunResult:
    """Attack every sample of a dataset and persist outcomes, records, summary and manifest.

    Raises ``ConfigInvalid`` or ``DatasetInvalid`` before any attack is made.
    """
    cfg = load_config(config_path, seed=seed, max_queries=max_queries)
    docs = load_dataset(dataset_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comps = build_components(cfg)
    paths = {name: out / f"{name}.{ext}" for name, ext in
             (("manifest", "json"), ("outcomes", "jsonl"), ("records", "jsonl"), ("summary", "json"))}
    manifest = {
        "status": "running",
        "started_at": _now(),
        "finished_at": None,
        "config_path": str(config_path),
        "config": cfg.snapshot(),
        "dataset": {"path": str(dataset_path), "sha256": fingerprint(dataset_path), "samples": len(docs)},
        "components": comps.describe(),
        "workers": workers,
        "cache_dir": os.environ.get(rpc.CACHE_ENV),
        "artifacts": {k: p.name for k, p in paths.items()},
    }
    _write_json(paths["manifest"], manifest)

    victim_name = cfg.victim_name
    try:
        with paths["outcomes"].open("w", encoding="utf-8") as outcomes_fh, \
                paths["records"].open("w", encoding="utf-8") as records_fh:
            def write(res: SampleResult) -> None:
                outcomes_fh.write(_dumps_line(res.outcome.to_dict()))
                records_fh.write(_dumps_line(res.record.to_dict()))
                outcomes_fh.flush()
                records_fh.flush()

            results = run_samples(docs, comps, cfg.attack, workers, cfg.task, victim_name, on_result=write)
    finally:
        comps.close()

    summary = summarize(results, cfg.task, victim_name)
    _write_json(paths["summary"], summary)
    status = EXIT_ALL_FAILED if summary["errored"] == len(results) else EXIT_OK
    manifest.update(status="complete", finished_at=_now(), exit_status=status,
                    queries=summary["query_ledger"])
    _write_json(paths["manifest"], manifest)
    if echo:
        print(format_summary(summary))
        print(f"success rate {summary['success_rate']:.4f} over {len(results)} samples"
              f" ({summary['errored']} errored)")
    return RunResult(status, summary, paths)


@dataclass
class SweepSpec:
    grid: dict[str, list]
    subset_size: int
    seed: int = 0

    def cells(self) -> list[dict]:
        keys = list(self.grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.grid[k] for k in keys))]


def parse_sweep(section: dict) -> SweepSpec:
    section = dict(section)
    try:
        subset_size = int(section.pop("subset_size", "0"))
        seed = int(section.pop("seed", "0"))
    except ValueError as exc:
        raise ConfigInvalid(f"sweep: {exc}") from exc
    if subset_size < 1:
        raise ConfigInvalid("sweep needs subset_size >= 1")
    grid = {}
    for key, raw in section.items():
        name = canonical_attack_key(key)
        values = [coerce_attack_value(name, v) for v in raw.replace("\n", ",").split(",") if v.strip()]
        if not values:
            raise ConfigInvalid(f"sweep grid entry {key!r} is empty")
        grid[name] = values
    if not grid:
        raise ConfigInvalid("sweep grid is empty")
    return SweepSpec(grid, subset_size, seed)


def pick_subset(docs: Sequence[TokenizedDocument], size: int, seed: int) -> list[TokenizedDocument]:
    if size > len(docs):
        logger.warning("subset_size %d exceeds dataset size %d; using all samples", size, len(docs))
        size = len(docs)
    chosen = sorted(random.Random(seed).sample(range(len(docs)), size))
    return [docs[i] for i in chosen]


def sweep_row(config: AttackConfig, summary: dict) -> dict:
    return {
        "k": config.beam_size_k,
        "h": config.hypothesis_count_h,
        "b": config.branching_b,
        "method": config.importance_method.value,
        "queries_per_example": summary.get("queries"),
        "success": summary.get("success_rate"),
        "semantic": summary.get("semantic_success_only"),
        "character": summary.get("character_success_only"),
        "bodega": summary.get("bodega"),
    }


def run_sweep(spec_path, dataset_path, out_dir, seed: Optional[int] = None, workers: int = 1,
              max_queries: Optional[int] = None, echo: bool = True) -> RunResult:
    """Run the Cartesian grid of a ``[sweep]`` section on a seeded dataset subset.

    The sweep file carries the same sections as an attack config plus ``[sweep]``;
    grid values are comma-separated lists.
    """
    spec_path = Path(spec_path)
    parser = read_ini(spec_path)
    if not parser.has_section("sweep"):
        raise ConfigInvalid(f"{spec_path}: missing [sweep] section")
    spec = parse_sweep(dict(parser["sweep"]))
    if seed is not None:
        spec.seed = seed
    base = parse_config(parser, spec_path.resolve().parent, seed=seed, max_queries=max_queries,
                        ignore_sections=("sweep",))
    configs = []
    for cell in spec.cells():
        try:
            configs.append(dataclasses.replace(base.attack, **cell).validate())
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"sweep cell {cell}: {exc}") from exc
    docs = pick_subset(load_dataset(dataset_path), spec.subset_size, spec.seed)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comps = build_components(base)
    manifest = {
        "status": "running",
        "started_at": _now(),
        "finished_at": None,
        "spec_path": str(spec_path),
        "config": base.snapshot(),
        "grid": {k: [getattr(v, "value", v) for v in vs] for k, vs in spec.grid.items()},
        "subset": {"size": len(docs), "seed": spec.seed, "ids": [d.id for d in docs]},
        "dataset": {"path": str(dataset_path), "sha256": fingerprint(dataset_path)},
        "components": comps.describe(),
        "artifacts": {"rows_csv": "sweep.csv", "rows_jsonl": "sweep.jsonl"},
    }
    _write_json(out / "manifest.json", manifest)

    rows = []
    try:
        for idx, config in enumerate(configs):
            cell_dir = out / f"cell_{idx:03d}"
            cell_dir.mkdir(exist_ok=True)
            results = run_samples(docs, comps, config, workers, base.task, base.victim_name)
            with (cell_dir / "outcomes.jsonl").open("w", encoding="utf-8") as fh:
                for r in results:
                    fh.write(_dumps_line(r.outcome.to_dict()))
            summary = summarize(results, base.task, base.victim_name)
            summary["config"] = config.to_dict()
            _write_json(cell_dir / "summary.json", summary)
            rows.append(sweep_row(config, summary))
            logger.info("cell %d/%d %s", idx + 1, len(configs), rows[-1])
    finally:
        comps.close()

    with (out / "sweep.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows({k: ("" if v is None else v) for k, v in row.items()} for row in rows)
    with (out / "sweep.jsonl").open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(_dumps_line(row))
    manifest.update(status="complete", finished_at=_now(), cells=len(rows))
    _write_json(out / "manifest.json", manifest)
    if echo:
        print(" ".join(f"{c:>10}" for c in SWEEP_COLUMNS))
        for row in rows:
            print(" ".join(f"{_cell(row[c]):>10}" for c in SWEEP_COLUMNS))
    return RunResult(EXIT_OK, {"rows": rows}, {"csv": out / "sweep.csv", "jsonl": out / "sweep.jsonl"})


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def _outcome_files(in_dir: Path) -> list[Path]:
    direct = in_dir / "outcomes.jsonl"
    if direct.is_file():
        return [direct]
    return sorted(in_dir.rglob("outcomes.jsonl"))


def _labels_for(path: Path) -> tuple[str, str]:
    for parent in (path.parent, path.parent.parent):
        manifest = parent / "manifest.json"
        if manifest.is_file():
            try:
                config = json.loads(manifest.read_text(encoding="utf-8")).get("config", {})
            except (OSError, json.JSONDecodeError):
                break
            victim = config.get("victim", {})
            return config.get("task", ""), victim.get("name") or victim.get("type", path.parent.name)
    return "", path.parent.name


def load_outcomes(in_dirs: Sequence) -> list[tuple[AttackOutcome, str, str]]:
    loaded = []
    for d in in_dirs:
        files = _outcome_files(Path(d))
        if not files:
            raise IoFailure(f"no outcomes.jsonl under {d}")
        for path in files:
            task, victim = _labels_for(path)
            try:
                with path.open(encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            loaded.append((AttackOutcome.from_dict(json.loads(line)), task, victim))
            except (OSError, json.JSONDecodeError, KeyError) as exc:
                raise IoFailure(f"cannot read {path}: {exc}") from exc
    return loaded


def run_analysis(in_dirs: Sequence, out_dir, tagger: Optional[Tagger] = None, workers: int = 1,
                 echo: bool = True) -> RunResult:
    """Tag successful outcomes, build the single-edit POS transition matrix, emit figures."""
    tagger = tagger or RuleTagger()
    loaded = load_outcomes(in_dirs)
    successes = [(o, t, v) for o, t, v in loaded if o.success and o.error is None]
    if not successes:
        raise NoSuccessfulSamples(f"no successful outcomes among {len(loaded)} loaded")

    def tag_pair(item):
        outcome = item[0]
        return ([t for _, t in tagger.tag(outcome.original_text)],
                [t for _, t in tagger.tag(outcome.adversarial_text)])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tagged = list(pool.map(tag_pair, successes))
    else:
        tagged = [tag_pair(s) for s in successes]

    mapping = PosMapping()
    matrix = TransitionMatrix()
    records = []
    for (outcome, task, victim), (orig_penn, adv_penn) in zip(successes, tagged):
        orig, adv = map_to_upos(orig_penn, mapping), map_to_upos(adv_penn, mapping)
        diff = pos_diff(orig, adv)
        mods = outcome.modifications
        qualifying = is_qualifying(mods, diff)
        if qualifying:
            matrix.add(orig, adv)
        n_words = len(outcome.original_text.split())
        records.append(AnalysisRecord(
            sample_id=outcome.sample_id, task=task, victim=victim,
            wsr_percent=100.0 * mods / n_words, modifications=mods,
            length_preserved=diff.length_preserved,
            pos_changes=diff.changes if diff.length_preserved else None,
            qualifying=qualifying,
        ))

    out = Path(out_dir)
    written = emit_figures(records, matrix, out)
    single = [r for r in records if r.modifications == 1]
    summary = {
        "outcomes": len(loaded),
        "successes": len(successes),
        "single_edit": len(single),
        "single_edit_length_preserved": sum(bool(r.length_preserved) for r in single),
        "qualifying": sum(r.qualifying for r in records),
        "transition_total": matrix.total,
        "victims": sorted({r.victim for r in records}),
        "tasks": sorted({r.task for r in records}),
        "unknown_tags": dict(mapping.unknown),
        "artifacts": [p.name for p in written],
    }
    try:
        _write_json(out / "analysis_summary.json", summary)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if echo:
        print(f"{summary['successes']} successful outcomes, {summary['qualifying']} in the transition matrix;"
              f" wrote {len(written)} files to {out}")
    return RunResult(EXIT_OK, summary, {p.name: p for p in written})
