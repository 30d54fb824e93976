"""Run configuration: JSON schema, validation, and defaults.

A config file is a JSON object with optional sections; every omitted key
takes the documented default.  ``hyperec --dump-config`` prints the full
default document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, DataError
from .recommenders import TRAINERS

DEFAULT_VARTHETA_GRID = (0.02, 0.05, 0.1, 0.2, 0.35, 0.55, 0.8, 0.99)


@dataclass(frozen=True)
class ExternalSource:
    """One external rankings file joining the ensemble."""

    name: str
    path: str
    column: str = "auto"


@dataclass
class RunConfig:
    """Everything one experiment run needs."""

    dataset_path: str = ""
    dataset_format: str = "csv"
    rating_threshold: float | None = None

    n_test: int = 10
    n_val: int = 5
    min_train: int = 5
    seed: int = 0

    models: tuple[str, ...] = ("bpr", "warp", "wrmf")
    hyperparams: dict[str, dict] = field(default_factory=dict)
    tune_budget: int | None = None

    external_rankings: tuple[ExternalSource, ...] = ()

    k: int = 10
    k_nn: int = 10

    w_ui: float = 1.0
    w_uu: float = 1.0
    w_m_base: float = 0.5
    decay_per_rank: float = 0.10

    vartheta: float | None = None
    vartheta_grid: tuple[float, ...] = DEFAULT_VARTHETA_GRID
    tol: float = 1e-8
    max_iter: int = 5000
    tune_tol: float = 1e-3
    tune_max_iter: int = 4000
    tune_sample: int = 256
    block_size: int = 128
    dense_threshold: int = 4096

    hybrid_weights: dict[str, float] | None = None
    hybrid_budget: int = 20

    output_dir: str = "out"
    threads: int = 1

    def validate(self) -> None:
        if not self.dataset_path:
            raise ConfigError("config is missing dataset.path")
        if not Path(self.dataset_path).exists():
            raise DataError(f"dataset file not found: {self.dataset_path}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.k_nn < 1:
            raise ConfigError(f"k_nn must be >= 1, got {self.k_nn}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        for name in self.models:
            if name not in TRAINERS:
                raise ConfigError(f"unknown built-in model {name!r}; expected a "
                                  f"subset of {sorted(TRAINERS)}")
        for name in self.hyperparams:
            if name not in self.models:
                raise ConfigError(f"hyperparams given for {name!r} which is not an "
                                  f"enabled model")
        seen = set(self.models)
        for src in self.external_rankings:
            if not src.name:
                raise ConfigError("external rankings entries need a name")
            if src.name in seen:
                raise ConfigError(f"duplicate model name {src.name!r}")
            seen.add(src.name)
            if not Path(src.path).exists():
                raise DataError(f"external rankings file not found: {src.path}")
            if src.column not in ("auto", "rank", "score"):
                raise ConfigError(f"external rankings column must be auto, rank, or "
                                  f"score, got {src.column!r}")
        if self.vartheta is not None and not (self.vartheta > 0):
            raise ConfigError(f"vartheta must be positive, got {self.vartheta}")
        if self.tune_budget is not None and self.tune_budget < 1:
            raise ConfigError(f"tune budget must be >= 1, got {self.tune_budget}")

    def output_path(self, *parts: str) -> Path:
        return Path(self.output_dir).joinpath(*parts)


_SECTIONS = {
    "dataset": {"path", "format", "rating_threshold"},
    "split": {"n_test", "n_val", "min_train", "seed"},
    "models": None,
    "hyperparams": None,
    "tune": {"budget"},
    "external_rankings": None,
    "k": None,
    "k_nn": None,
    "weights": {"w_ui", "w_uu", "w_m_base", "decay_per_rank"},
    "ranker": {"vartheta", "grid", "tol", "max_iter", "tune_tol",
               "tune_max_iter", "tune_sample", "block_size", "dense_threshold"},
    "hybrid": {"weights", "budget"},
    "output": None,
    "threads": None,
}


def default_config_json() -> str:
    """The full default config document, printed by ``--dump-config``."""
    doc = {
        "dataset": {"path": "interactions.csv", "format": "csv",
                    "rating_threshold": None},
        "split": {"n_test": 10, "n_val": 5, "min_train": 5, "seed": 0},
        "models": ["bpr", "warp", "wrmf"],
        "hyperparams": {},
        "tune": None,
        "external_rankings": [],
        "k": 10,
        "k_nn": 10,
        "weights": {"w_ui": 1.0, "w_uu": 1.0, "w_m_base": 0.5,
                    "decay_per_rank": 0.10},
        "ranker": {"vartheta": None, "grid": list(DEFAULT_VARTHETA_GRID),
                   "tol": 1e-8, "max_iter": 5000, "tune_tol": 1e-3,
                   "tune_max_iter": 4000, "tune_sample": 256,
                   "block_size": 128, "dense_threshold": 4096},
        "hybrid": {"weights": None, "budget": 20},
        "output": "out",
        "threads": 1,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _check_keys(section: str, given: dict, allowed: set[str]) -> None:
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in config section {section!r}: "
                          f"{sorted(unknown)}")


def config_from_dict(doc: dict) -> RunConfig:
    """Build and sanity-check a RunConfig from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys("<root>", doc, set(_SECTIONS))
    cfg = RunConfig()

    dataset = doc.get("dataset") or {}
    _check_keys("dataset", dataset, _SECTIONS["dataset"])
    cfg.dataset_path = str(dataset.get("path", cfg.dataset_path))
    cfg.dataset_format = str(dataset.get("format", cfg.dataset_format))
    threshold = dataset.get("rating_threshold")
    cfg.rating_threshold = None if threshold is None else float(threshold)

    split_doc = doc.get("split") or {}
    _check_keys("split", split_doc, _SECTIONS["split"])
    cfg.n_test = int(split_doc.get("n_test", cfg.n_test))
    cfg.n_val = int(split_doc.get("n_val", cfg.n_val))
    cfg.min_train = int(split_doc.get("min_train", cfg.min_train))
    cfg.seed = int(split_doc.get("seed", cfg.seed))

    if "models" in doc:
        models = doc["models"]
        if not isinstance(models, list):
            raise ConfigError("config models must be a list of model names")
        cfg.models = tuple(str(m) for m in models)
    if "hyperparams" in doc:
        hp = doc["hyperparams"]
        if not isinstance(hp, dict) or not all(isinstance(v, dict)
                                               for v in hp.values()):
            raise ConfigError("config hyperparams must map model name -> object")
        cfg.hyperparams = {str(k): dict(v) for k, v in hp.items()}
    tune_doc = doc.get("tune")
    if tune_doc:
        _check_keys("tune", tune_doc, _SECTIONS["tune"])
        cfg.tune_budget = int(tune_doc.get("budget", 30))

    if "external_rankings" in doc:
        sources = doc["external_rankings"]
        if not isinstance(sources, list):
            raise ConfigError("config external_rankings must be a list")
        entries = []
        for entry in sources:
            _check_keys("external_rankings[]", entry, {"name", "path", "column"})
            if "name" not in entry or "path" not in entry:
                raise ConfigError("external_rankings entries need name and path")
            entries.append(ExternalSource(str(entry["name"]), str(entry["path"]),
                                          str(entry.get("column", "auto"))))
        cfg.external_rankings = tuple(entries)

    if "k" in doc:
        cfg.k = int(doc["k"])
    if "k_nn" in doc:
        cfg.k_nn = int(doc["k_nn"])

    weights = doc.get("weights") or {}
    _check_keys("weights", weights, _SECTIONS["weights"])
    cfg.w_ui = float(weights.get("w_ui", cfg.w_ui))
    cfg.w_uu = float(weights.get("w_uu", cfg.w_uu))
    cfg.w_m_base = float(weights.get("w_m_base", cfg.w_m_base))
    cfg.decay_per_rank = float(weights.get("decay_per_rank", cfg.decay_per_rank))

    ranker = doc.get("ranker") or {}
    _check_keys("ranker", ranker, _SECTIONS["ranker"])
    vartheta = ranker.get("vartheta")
    cfg.vartheta = None if vartheta is None else float(vartheta)
    if "grid" in ranker:
        cfg.vartheta_grid = tuple(float(v) for v in ranker["grid"])
    cfg.tol = float(ranker.get("tol", cfg.tol))
    cfg.max_iter = int(ranker.get("max_iter", cfg.max_iter))
    cfg.tune_tol = float(ranker.get("tune_tol", cfg.tune_tol))
    cfg.tune_max_iter = int(ranker.get("tune_max_iter", cfg.tune_max_iter))
    cfg.tune_sample = int(ranker.get("tune_sample", cfg.tune_sample))
    cfg.block_size = int(ranker.get("block_size", cfg.block_size))
    cfg.dense_threshold = int(ranker.get("dense_threshold", cfg.dense_threshold))

    hybrid = doc.get("hybrid") or {}
    _check_keys("hybrid", hybrid, _SECTIONS["hybrid"])
    hybrid_weights = hybrid.get("weights")
    if hybrid_weights is not None:
        if not isinstance(hybrid_weights, dict):
            raise ConfigError("hybrid weights must map model name -> weight")
        cfg.hybrid_weights = {str(k): float(v) for k, v in hybrid_weights.items()}
    cfg.hybrid_budget = int(hybrid.get("budget", cfg.hybrid_budget))

    if "output" in doc:
        cfg.output_dir = str(doc["output"])
    if "threads" in doc:
        cfg.threads = int(doc["threads"])
    return cfg


def load_config(path: str | Path) -> RunConfig:
    """Parse, validate, and return the run configuration at ``path``."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {path}: {exc}") from None
    cfg = config_from_dict(doc)
    return cfg
