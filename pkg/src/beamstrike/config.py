"""INI run configuration: attack hyperparameters plus victim, provider and similarity sections.

Example::

    [attack]
    k = 10
    b = 10
    h = 10
    importance = logit
    max_queries = 20000
    seed = 0
    task = toy

    [victim]
    type = keyword
    triggers = terrible, awful

    [provider]
    type = table
    table_file = candidates.json
    fallback = good, fine

    [similarity]
    type = token_f1
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from . import rpc
from .beam import DEFAULT_MAX_QUERIES, AttackConfig, ConfigInvalid, ExpansionPolicy
from .candidates import CandidateProvider, MlmProvider, ProviderFailure, TableProvider
from .importance import ImportanceMethod, LimeConfig
from .similarity import RemoteSimilarity, TokenF1Similarity
from .victims import ConstantVictim, KeywordRuleVictim, LinearBagVictim, Victim, load_external_victim

logger = logging.getLogger(__name__)

# short name -> AttackConfig field
ATTACK_KEYS = {
    "k": "beam_size_k",
    "b": "branching_b",
    "h": "hypothesis_count_h",
    "importance": "importance_method",
    "method": "importance_method",
}
ATTACK_FIELDS = {f.name for f in dataclasses.fields(AttackConfig)} - {"lime"}
LIME_FIELDS = {f.name for f in dataclasses.fields(LimeConfig)}


def canonical_attack_key(key: str) -> str:
    key = key.strip().lower()
    key = ATTACK_KEYS.get(key, key)
    if key not in ATTACK_FIELDS:
        raise ConfigInvalid(f"unknown attack setting {key!r}")
    return key


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.replace("\n", ",").split(",") if v.strip()]


def coerce_attack_value(key: str, value: Any) -> Any:
    if not isinstance(value, str):
        return value
    value = value.strip()
    try:
        if key in ("beam_size_k", "branching_b", "hypothesis_count_h", "max_queries"):
            return int(value)
        if key == "max_depth":
            return int(value) if value and value.lower() != "none" else None
        if key == "importance_method":
            return ImportanceMethod(value.upper())
        if key == "expansion_policy":
            return ExpansionPolicy(value.upper())
    except ValueError as exc:
        raise ConfigInvalid(f"bad value for {key}: {value!r}") from exc
    return value


def _lime_from(section, seed: Optional[int]) -> LimeConfig:
    kwargs: dict[str, Any] = {}
    for key, raw in section.items():
        if key not in LIME_FIELDS:
            raise ConfigInvalid(f"unknown lime setting {key!r}")
        try:
            kwargs[key] = int(raw) if key in ("num_samples", "rng_seed") else float(raw)
        except ValueError as exc:
            raise ConfigInvalid(f"bad value for lime.{key}: {raw!r}") from exc
    if "rng_seed" not in kwargs and seed is not None:
        kwargs["rng_seed"] = seed
    return LimeConfig(**kwargs)


@dataclass
class RunConfig:
    attack: AttackConfig
    seed: int = 0
    task: str = ""
    victim: dict = field(default_factory=lambda: {"type": "keyword", "triggers": "terrible"})
    provider: dict = field(default_factory=lambda: {"type": "table"})
    similarity: dict = field(default_factory=lambda: {"type": "token_f1"})
    base_dir: Path = field(default_factory=Path.cwd)

    def snapshot(self) -> dict:
        return {
            "attack": self.attack.to_dict(),
            "seed": self.seed,
            "task": self.task,
            "victim": dict(self.victim),
            "provider": dict(self.provider),
            "similarity": dict(self.similarity),
        }

    @property
    def victim_name(self) -> str:
        return self.victim.get("name") or self.victim.get("type", "victim")


def read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc
    return parser


def parse_config(parser: configparser.ConfigParser, base_dir: Path, seed: Optional[int] = None,
                 max_queries: Optional[int] = None, ignore_sections=()) -> RunConfig:
    known = {"attack", "lime", "victim", "provider", "similarity", *ignore_sections}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigInvalid(f"unknown config sections: {sorted(unknown)}")

    attack_section = dict(parser["attack"]) if parser.has_section("attack") else {}
    raw_seed = attack_section.pop("seed", "0") or "0"
    try:
        run_seed = seed if seed is not None else int(raw_seed)
    except ValueError as exc:
        raise ConfigInvalid(f"bad seed {raw_seed!r}") from exc
    task = attack_section.pop("task", "")
    kwargs: dict[str, Any] = {"max_queries": DEFAULT_MAX_QUERIES}
    for key, raw in attack_section.items():
        name = canonical_attack_key(key)
        kwargs[name] = coerce_attack_value(name, raw)
    if max_queries is not None:
        kwargs["max_queries"] = max_queries
    lime_section = dict(parser["lime"]) if parser.has_section("lime") else {}
    lime = _lime_from(lime_section, run_seed)
    if seed is not None:
        lime = dataclasses.replace(lime, rng_seed=seed)
    attack = AttackConfig(lime=lime, **kwargs).validate()

    cfg = RunConfig(attack=attack, seed=run_seed, task=task, base_dir=base_dir)
    for name in ("victim", "provider", "similarity"):
        if parser.has_section(name):
            setattr(cfg, name, dict(parser[name]))
    return cfg


def load_config(path, seed: Optional[int] = None, max_queries: Optional[int] = None) -> RunConfig:
    path = Path(path)
    return parse_config(read_ini(path), path.resolve().parent, seed=seed, max_queries=max_queries)


def _resolve(base_dir: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base_dir / p


def _load_json(base_dir: Path, value: str) -> Any:
    path = _resolve(base_dir, value)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot load {path}: {exc}") from exc


def _endpoint(section: dict, transport: str) -> dict:
    out = {k: v for k, v in section.items() if k not in ("type", "transport")}
    out["transport"] = transport
    return out


def _pairs(value: str) -> dict[str, float]:
    out = {}
    for item in _split_list(value):
        word, _, weight = item.rpartition(":")
        if not word:
            raise ConfigInvalid(f"expected word:weight, got {item!r}")
        try:
            out[word] = float(weight)
        except ValueError as exc:
            raise ConfigInvalid(f"bad weight in {item!r}") from exc
    return out


def build_victim(cfg: RunConfig) -> Victim:
    """Instantiate the configured victim. Remote victims are health-checked."""
    section = cfg.victim
    kind = section.get("type", "keyword")
    name = section.get("name", kind)
    try:
        if kind == "keyword":
            return KeywordRuleVictim(
                _split_list(section.get("triggers", "")),
                confidence=float(section.get("confidence", 0.9)),
                step=float(section.get("step", 0.01)),
                case_sensitive=section.get("case_sensitive", "false").lower() in ("1", "true", "yes"),
                name=name,
            )
        if kind == "linear_bag":
            if "coefficients_file" in section:
                coefs = _load_json(cfg.base_dir, section["coefficients_file"])
            else:
                coefs = _pairs(section.get("coefficients", ""))
            return LinearBagVictim(coefs, bias=float(section.get("bias", 0.0)), name=name)
        if kind == "constant":
            probs = [float(x) for x in _split_list(section.get("probabilities", "0.1, 0.9"))]
            return ConstantVictim(probs, name=name)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        raise ConfigInvalid(f"victim section: {exc}") from exc
    if kind in ("http", "stdio"):
        return load_external_victim(_endpoint(section, kind))
    raise ConfigInvalid(f"unknown victim type {kind!r}")


def build_provider(cfg: RunConfig) -> CandidateProvider:
    section = cfg.provider
    kind = section.get("type", "table")
    if kind == "table":
        lookup = _load_json(cfg.base_dir, section["table_file"]) if "table_file" in section else {}
        if not isinstance(lookup, dict):
            raise ConfigInvalid("table_file must hold a JSON object of word -> [candidates]")
        return TableProvider(lookup, fallback=_split_list(section.get("fallback", "")))
    if kind == "mlm":
        try:
            return MlmProvider(rpc.make_transport(_endpoint(section, section.get("transport", "http"))))
        except rpc.TransportError as exc:
            raise ProviderFailure(str(exc)) from exc
    raise ConfigInvalid(f"unknown provider type {kind!r}")


def build_similarity(cfg: RunConfig):
    section = cfg.similarity
    kind = section.get("type", "token_f1")
    if kind == "token_f1":
        return TokenF1Similarity()
    if kind == "remote":
        return RemoteSimilarity(rpc.make_transport(_endpoint(section, section.get("transport", "http"))))
    raise ConfigInvalid(f"unknown similarity type {kind!r}")
