"""Top-k metrics, random hyperparameter search, and the full experiment.

Precision@k averages, over evaluated users, the fraction of each user's
recommendation list that hits the user's test items; recall@k divides by
the test-set size instead.  When every user has exactly k test items the
two coincide and the F1 score equals both.

:func:`run_experiment` executes the whole protocol on one configuration:
split, train the enabled built-in models, ingest external rankings, build
the interaction-only hypergraph ranker (H) and the two ensemble rankers
(HypeRS with identical edge weights, HypeRS_W with validation-rank-decayed
model-edge weights), score the hybrid weighted-average baseline, and
evaluate everything on the test split.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import hypergraph as hg_mod
from .data import InteractionDataset, SplitDataset, load_interactions, split as make_split
from .ensemble import (WeightPolicy, hybrid_rank, rank_models, uniform_policy,
                       weighted_policy)
from .errors import ConfigError, DataError, HyperecError
from .ranker import AffinityOperator, RankerConfig, compute_affinity, rank_all_users
from .recommenders import (DEFAULT_HYPERPARAMS, FactorModel, RankingList, TRAINERS,
                           load_external_rankings, rank_topk)

logger = logging.getLogger(__name__)

HYPER_H = "H"
HYPER_ENSEMBLE = "HypeRS"
HYPER_ENSEMBLE_WEIGHTED = "HypeRS_W"
HYBRID = "Hybrid"


@dataclass
class EvalReport:
    """Metrics of one model's rankings at a fixed list length."""

    model_name: str
    k: int
    precision: float
    recall: float
    f1: float
    per_user: dict[int, tuple[int, int, int]] | None = None

    def as_dict(self) -> dict:
        return {
            "model": self.model_name,
            "k": self.k,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def _hits_per_user(lists: RankingList,
                   test: Mapping[int, frozenset[int]]) -> dict[int, tuple[int, int, int]]:
    out: dict[int, tuple[int, int, int]] = {}
    for u, held in test.items():
        if u not in lists.rows:
            raise DataError(
                f"user index {u} missing from rankings for {lists.model_name!r}")
        if not held:
            raise DataError(f"user index {u} has an empty test set")
        row = lists.items_of(u)
        out[u] = (len(held & set(row)), len(held), len(row))
    return out


def precision_at_k(lists: RankingList, test: Mapping[int, frozenset[int]]) -> float:
    """Mean over users of |test ∩ list| / |list|."""
    hits = _hits_per_user(lists, test)
    return float(np.mean([h / r for h, _, r in hits.values()]))


def recall_at_k(lists: RankingList, test: Mapping[int, frozenset[int]]) -> float:
    """Mean over users of |test ∩ list| / |test|."""
    hits = _hits_per_user(lists, test)
    return float(np.mean([h / t for h, t, _ in hits.values()]))


def f1_at_k(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0.

    Equal inputs return that value exactly, keeping the three metrics
    bitwise identical whenever test and list sizes coincide.
    """
    if precision == recall:
        return precision
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def evaluate_rankings(lists: RankingList, test: Mapping[int, frozenset[int]],
                      with_per_user: bool = True) -> EvalReport:
    """Score one ranking list against the test split."""
    hits = _hits_per_user(lists, test)
    p = float(np.mean([h / r for h, _, r in hits.values()]))
    r = float(np.mean([h / t for h, t, _ in hits.values()]))
    return EvalReport(lists.model_name, lists.k, p, r, f1_at_k(p, r),
                      per_user=hits if with_per_user else None)


# ---------------------------------------------------------------------------
# hyperparameter search

@dataclass(frozen=True)
class ParamRange:
    """An inclusive sampling range; ``kind`` is float, int, or log."""

    low: float
    high: float
    kind: str = "float"

    def __post_init__(self):
        if self.kind not in ("float", "int", "log"):
            raise ConfigError(f"unknown parameter range kind {self.kind!r}")
        if self.low > self.high:
            raise ConfigError(f"empty parameter range [{self.low}, {self.high}]")
        if self.kind == "log" and self.low <= 0:
            raise ConfigError("log-scale ranges need a positive lower bound")

    def sample(self, rng: np.random.Generator):
        if self.kind == "int":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        if self.kind == "log":
            return float(np.exp(rng.uniform(np.log(self.low), np.log(self.high))))
        return float(rng.uniform(self.low, self.high))

    def contains(self, value) -> bool:
        return self.low <= value <= self.high


# Published search ranges for the three built-in models plus the ranking
# regularizer; desk-scale runs usually override iteration counts downward.
DEFAULT_SEARCH_SPACES: dict[str, dict[str, ParamRange]] = {
    "bpr": {
        "iterations": ParamRange(1000, 2000, "int"),
        "factors": ParamRange(100, 250, "int"),
        "regularization": ParamRange(0.01, 0.05),
        "learning_rate": ParamRange(0.001, 0.07),
    },
    "warp": {
        "iterations": ParamRange(200, 850, "int"),
        "factors": ParamRange(15, 40, "int"),
        "regularization": ParamRange(1e-5, 1e-2, "log"),
        "learning_rate": ParamRange(0.001, 0.1),
    },
    "wrmf": {
        "iterations": ParamRange(1000, 2000, "int"),
        "factors": ParamRange(100, 250, "int"),
        "regularization": ParamRange(0.01, 0.05),
    },
}

VARTHETA_RANGE = ParamRange(0.01, 0.99)
HYBRID_WEIGHT_RANGE = ParamRange(0.01, 0.99)


@dataclass
class Trial:
    params: dict
    score: float


@dataclass
class TuneResult:
    name: str
    best_params: dict
    best_score: float
    trials: list[Trial] = field(default_factory=list)


def random_search(space: Mapping[str, ParamRange],
                  score_fn: Callable[[dict], float], *, budget: int,
                  seed: int, name: str = "search") -> TuneResult:
    """Random search over a parameter space, maximizing ``score_fn``.

    Samples ``budget`` points, logs every trial, and returns the argmax.
    """
    if budget < 1:
        raise ConfigError(f"search budget must be >= 1, got {budget}")
    if not space:
        raise ConfigError("search space is empty")
    rng = np.random.default_rng(seed)
    trials: list[Trial] = []
    for _ in range(budget):
        params = {key: rng_range.sample(rng) for key, rng_range in space.items()}
        trials.append(Trial(params, float(score_fn(params))))
    best = max(trials, key=lambda t: t.score)
    return TuneResult(name, dict(best.params), best.score, trials)


def tune(split: SplitDataset, models: Sequence[str] = ("bpr", "warp", "wrmf"), *,
         k: int = 10, budget: int = 30, seed: int = 0,
         spaces: Mapping[str, Mapping[str, ParamRange]] | None = None
         ) -> dict[str, TuneResult]:
    """Random-search hyperparameters per model on validation precision@k."""
    results: dict[str, TuneResult] = {}
    for name in models:
        if name not in TRAINERS:
            raise ConfigError(f"unknown built-in model {name!r}; "
                              f"expected one of {sorted(TRAINERS)}")
        space = (spaces or DEFAULT_SEARCH_SPACES).get(name)
        if not space:
            raise ConfigError(f"no search space for model {name!r}")

        def score(params: dict, _name=name) -> float:
            model = TRAINERS[_name](split.train, params, seed=seed)
            lists = rank_topk(model, split, k, model_name=_name)
            return precision_at_k(lists, split.validation)

        results[name] = random_search(space, score, budget=budget,
                                      seed=seed, name=name)
        logger.info("tuned %s: best validation precision@%d %.4f", name, k,
                    results[name].best_score)
    return results


def tune_vartheta(A: AffinityOperator, hg: hg_mod.Hypergraph, split: SplitDataset, *,
                  k: int = 10, grid: Sequence[float] = (),
                  tol: float = 1e-3, max_iter: int = 4000,
                  sample_size: int = 256, seed: int = 0,
                  name: str = "vartheta") -> TuneResult:
    """Grid-search the ranking regularizer on validation precision@k.

    Evaluates each grid value on a fixed random subsample of users (the
    solve cost grows as vartheta shrinks).  Grid defaults to nine points
    spanning the published [0.01, 0.99] range.
    """
    values = tuple(grid) if grid else (0.02, 0.05, 0.1, 0.2, 0.35, 0.55, 0.8, 0.99)
    for v in values:
        if not VARTHETA_RANGE.contains(v):
            raise ConfigError(f"vartheta grid value {v} outside "
                              f"[{VARTHETA_RANGE.low}, {VARTHETA_RANGE.high}]")
    rng = np.random.default_rng(seed)
    n_users = split.num_users
    if sample_size < n_users:
        sampled = sorted(int(u) for u in
                         rng.choice(n_users, size=sample_size, replace=False))
    else:
        sampled = list(split.users())
    val_subset = {u: split.validation[u] for u in sampled if split.validation[u]}

    trials: list[Trial] = []
    for v in values:
        cfg = RankerConfig(vartheta=v, tol=tol, max_iter=max_iter)
        lists = rank_all_users(hg, A, split, k=k, cfg=cfg, model_name=name,
                               users=sampled)
        score = precision_at_k(lists, val_subset)
        trials.append(Trial({"vartheta": v}, float(score)))
    best = max(trials, key=lambda t: t.score)
    return TuneResult(name, dict(best.params), best.score, trials)


def tune_hybrid_weights(models: Mapping[str, FactorModel], split: SplitDataset, *,
                        k: int = 10, budget: int = 20, seed: int = 0) -> TuneResult:
    """Random-search per-model hybrid weights on validation precision@k."""
    space = {name: HYBRID_WEIGHT_RANGE for name in sorted(models)}

    def score(params: dict) -> float:
        lists = hybrid_rank(models, split, params, k)
        return precision_at_k(lists, split.validation)

    return random_search(space, score, budget=budget, seed=seed, name="hybrid")


# ---------------------------------------------------------------------------
# the full experiment

class _Stage:
    """Context manager that prefixes stage names onto pipeline errors."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        logger.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, HyperecError) \
                and not getattr(exc, "_staged", False):
            exc._staged = True
            exc.args = (f"stage {self.name!r}: {exc.args[0]}" if exc.args
                        else f"stage {self.name!r}", *exc.args[1:])
        return False


@dataclass
class ExperimentResult:
    """Everything produced by one full run."""

    reports: list[EvalReport]
    rankings: dict[str, RankingList]
    split: SplitDataset
    models: dict[str, FactorModel]
    policies: dict[str, WeightPolicy]
    varthetas: dict[str, float]
    tuning: dict[str, TuneResult] = field(default_factory=dict)

    def report_for(self, model_name: str) -> EvalReport:
        for report in self.reports:
            if report.model_name == model_name:
                return report
        raise KeyError(model_name)


def _resolve_vartheta(cfg_value: float | None, A: AffinityOperator,
                      hg: hg_mod.Hypergraph, split: SplitDataset, *, name: str,
                      k: int, grid: Sequence[float], tol: float, max_iter: int,
                      sample_size: int, seed: int,
                      tuning: dict[str, TuneResult]) -> float:
    if cfg_value is not None:
        return float(cfg_value)
    result = tune_vartheta(A, hg, split, k=k, grid=grid, tol=tol,
                           max_iter=max_iter, sample_size=sample_size,
                           seed=seed, name=f"vartheta:{name}")
    tuning[f"vartheta:{name}"] = result
    return float(result.best_params["vartheta"])


def run_experiment(config) -> ExperimentResult:
    """Run the full protocol for a :class:`~hyperec.config.RunConfig`."""
    from .pipeline import derive_seed  # local import to avoid a cycle

    config.validate()
    tuning: dict[str, TuneResult] = {}

    with _Stage("load"):
        ds = load_interactions(config.dataset_path, config.dataset_format,
                               config.rating_threshold)
    with _Stage("split"):
        sd = make_split(ds, config.n_test, config.n_val, config.min_train,
                        seed=derive_seed(config.seed, "split"))

    models: dict[str, FactorModel] = {}
    rankings: dict[str, RankingList] = {}
    with _Stage("train"):
        tuned_hp: dict[str, dict] = {}
        if config.tune_budget and config.models:
            to_tune = [m for m in config.models if m not in config.hyperparams]
            if to_tune:
                for name, result in tune(sd, to_tune, k=config.k,
                                         budget=config.tune_budget,
                                         seed=derive_seed(config.seed, "tune")).items():
                    tuning[name] = result
                    tuned_hp[name] = result.best_params
        for name in config.models:
            hp = config.hyperparams.get(name, tuned_hp.get(name))
            models[name] = TRAINERS[name](sd.train, hp,
                                          seed=derive_seed(config.seed, name))
            rankings[name] = rank_topk(models[name], sd, config.k, model_name=name)
            rankings[name].validate(sd)

    with _Stage("external"):
        for source in config.external_rankings:
            if source.name in rankings:
                raise DataError(f"external rankings name {source.name!r} collides "
                                f"with an already-ranked model")
            rankings[source.name] = load_external_rankings(
                source.path, sd, config.k, model_name=source.name,
                column=source.column)

    with _Stage("hypergraph"):
        ui = hg_mod.build_ui_edges(sd)
        uu = hg_mod.build_uu_edges(sd, config.k_nn)
        model_lists = list(rankings.values())
        m_edges = hg_mod.build_model_edges(model_lists, sd.num_users, sd.num_items)

    policies: dict[str, WeightPolicy] = {}
    varthetas: dict[str, float] = {}
    solver = dict(tol=config.tol, max_iter=config.max_iter)
    tune_kw = dict(k=config.k, grid=config.vartheta_grid, tol=config.tune_tol,
                   max_iter=config.tune_max_iter, sample_size=config.tune_sample)

    def ranked_output(name: str, graph: hg_mod.Hypergraph) -> RankingList:
        A = compute_affinity(graph, config.dense_threshold)
        vartheta = _resolve_vartheta(
            config.vartheta, A, graph, sd, name=name,
            seed=derive_seed(config.seed, f"vartheta:{name}"),
            tuning=tuning, **tune_kw)
        varthetas[name] = vartheta
        cfg = RankerConfig(vartheta=vartheta, **solver)
        return rank_all_users(graph, A, sd, k=config.k, cfg=cfg, model_name=name,
                              block_size=config.block_size, threads=config.threads)

    with _Stage("rank:H"):
        policies[HYPER_H] = uniform_policy()
        graph_h = hg_mod.assemble(ui, uu, [], policies[HYPER_H],
                                  sd.num_users, sd.num_items)
        rankings[HYPER_H] = ranked_output(HYPER_H, graph_h)

    if rankings.keys() - {HYPER_H}:
        base_names = [n for n in rankings if n not in
                      (HYPER_H, HYPER_ENSEMBLE, HYPER_ENSEMBLE_WEIGHTED, HYBRID)]
        base_lists = [rankings[n] for n in base_names]
        with _Stage("rank:HypeRS"):
            policies[HYPER_ENSEMBLE] = uniform_policy()
            graph_e = hg_mod.assemble(ui, uu, m_edges, policies[HYPER_ENSEMBLE],
                                      sd.num_users, sd.num_items)
            rankings[HYPER_ENSEMBLE] = ranked_output(HYPER_ENSEMBLE, graph_e)
        with _Stage("rank:HypeRS_W"):
            ranks = rank_models(base_lists, sd.validation)
            policies[HYPER_ENSEMBLE_WEIGHTED] = weighted_policy(
                ranks, w_ui=config.w_ui, w_uu=config.w_uu,
                w_m_base=config.w_m_base, decay_per_rank=config.decay_per_rank)
            graph_w = hg_mod.assemble(ui, uu, m_edges,
                                      policies[HYPER_ENSEMBLE_WEIGHTED],
                                      sd.num_users, sd.num_items)
            rankings[HYPER_ENSEMBLE_WEIGHTED] = ranked_output(
                HYPER_ENSEMBLE_WEIGHTED, graph_w)

    if models:
        with _Stage("hybrid"):
            if config.hybrid_weights is not None:
                weights = dict(config.hybrid_weights)
            else:
                result = tune_hybrid_weights(
                    models, sd, k=config.k, budget=config.hybrid_budget,
                    seed=derive_seed(config.seed, "hybrid"))
                tuning["hybrid"] = result
                weights = result.best_params
            rankings[HYBRID] = hybrid_rank(models, sd, weights, config.k)

    with _Stage("evaluate"):
        order = [*config.models,
                 *(s.name for s in config.external_rankings),
                 HYPER_H, HYBRID, HYPER_ENSEMBLE, HYPER_ENSEMBLE_WEIGHTED]
        reports = [evaluate_rankings(rankings[name], sd.test)
                   for name in order if name in rankings]

    return ExperimentResult(reports, rankings, sd, models, policies,
                            varthetas, tuning)


def format_report_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text aligned metrics table, one model per row."""
    if not reports:
        return "(no models evaluated)\n"
    k = reports[0].k
    headers = ["model", f"precision@{k}", f"recall@{k}", f"f1@{k}"]
    rows = [[r.model_name, f"{r.precision:.4f}", f"{r.recall:.4f}", f"{r.f1:.4f}"]
            for r in reports]
    widths = [max(len(h), *(len(row[i]) for row in rows))
              for i, h in enumerate(headers)]
    def fmt(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(widths[i + 1]) for i, c in enumerate(cells[1:])]
        return "  ".join([first, *rest]).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines) + "\n"
