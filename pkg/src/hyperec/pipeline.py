"""Staged pipeline with on-disk persistence between stages.

Each stage function reads what previous stages wrote to the output
directory, so the command line can resume an experiment at any point.
Stage outputs are byte-stable for a fixed config and seed.  All stages
derive their random seeds from the master seed via :func:`derive_seed`,
keyed by purpose, so the staged path and the in-memory
:func:`~hyperec.evaluation.run_experiment` path produce identical results.
"""

from __future__ import annotations

import json
import logging
import zlib
from pathlib import Path

import numpy as np

from . import hypergraph as hg_mod
from .config import RunConfig
from .data import (InteractionDataset, SplitDataset, load_interactions, load_split,
                   save_split, split as make_split)
from .ensemble import hybrid_rank, rank_models, uniform_policy, weighted_policy
from .errors import DataError
from .evaluation import (HYBRID, HYPER_ENSEMBLE, HYPER_ENSEMBLE_WEIGHTED, HYPER_H,
                         EvalReport, TuneResult, evaluate_rankings,
                         format_report_table, tune, tune_hybrid_weights,
                         tune_vartheta)
from .ranker import RankerConfig, compute_affinity, rank_all_users
from .recommenders import (TRAINERS, FactorModel, RankingList,
                           load_external_rankings, load_factors, rank_topk,
                           save_factors, save_rankings)

logger = logging.getLogger(__name__)

SPLIT_FILE = "split.json"
STATS_FILE = "stats.json"
REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"
REPORT_TXT = "report.txt"
FIGURE_DIR = "figures"


def derive_seed(master: int, purpose: str) -> int:
    """A stable per-purpose seed from the master seed."""
    tag = zlib.crc32(purpose.encode("utf-8"))
    return int(np.random.SeedSequence([master, tag]).generate_state(1)[0])


def _rankings_path(cfg: RunConfig, name: str) -> Path:
    return cfg.output_path(f"rankings_{name}.csv")


def _factors_path(cfg: RunConfig, name: str) -> Path:
    return cfg.output_path(f"factors_{name}.npz")


def _write_json(path: Path, doc) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _tune_result_doc(result: TuneResult) -> dict:
    return {
        "best_params": result.best_params,
        "best_score": result.best_score,
        "trials": [{"params": t.params, "score": t.score} for t in result.trials],
    }


def load_dataset(cfg: RunConfig) -> InteractionDataset:
    return load_interactions(cfg.dataset_path, cfg.dataset_format,
                             cfg.rating_threshold)


def load_prepared_split(cfg: RunConfig) -> SplitDataset:
    manifest = cfg.output_path(SPLIT_FILE)
    if not manifest.exists():
        raise DataError(f"split manifest not found: {manifest} (run prepare first)")
    return load_split(manifest, load_dataset(cfg))


def stage_prepare(cfg: RunConfig) -> SplitDataset:
    """Load the dataset, split it, and persist manifest + stats."""
    ds = load_dataset(cfg)
    sd = make_split(ds, cfg.n_test, cfg.n_val, cfg.min_train,
                    seed=derive_seed(cfg.seed, "split"))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_split(sd, out / SPLIT_FILE)
    _write_json(out / STATS_FILE, {"dataset": ds.stats(), "split": sd.stats()})
    logger.info("prepared split at %s", out / SPLIT_FILE)
    return sd


def stage_train(cfg: RunConfig, sd: SplitDataset | None = None
                ) -> dict[str, RankingList]:
    """Train enabled built-ins; persist factors, rankings, and the hybrid."""
    sd = sd if sd is not None else load_prepared_split(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    tuned_hp: dict[str, dict] = {}
    tuning_docs: dict[str, dict] = {}
    if cfg.tune_budget and cfg.models:
        to_tune = [m for m in cfg.models if m not in cfg.hyperparams]
        if to_tune:
            for name, result in tune(sd, to_tune, k=cfg.k, budget=cfg.tune_budget,
                                     seed=derive_seed(cfg.seed, "tune")).items():
                tuned_hp[name] = result.best_params
                tuning_docs[name] = _tune_result_doc(result)

    models: dict[str, FactorModel] = {}
    rankings: dict[str, RankingList] = {}
    for name in cfg.models:
        hp = cfg.hyperparams.get(name, tuned_hp.get(name))
        model = TRAINERS[name](sd.train, hp, seed=derive_seed(cfg.seed, name))
        models[name] = model
        lists = rank_topk(model, sd, cfg.k, model_name=name)
        lists.validate(sd)
        rankings[name] = lists
        save_factors(model, _factors_path(cfg, name))
        save_rankings(lists, sd.train, _rankings_path(cfg, name))

    if models:
        if cfg.hybrid_weights is not None:
            weights = dict(cfg.hybrid_weights)
        else:
            result = tune_hybrid_weights(models, sd, k=cfg.k,
                                         budget=cfg.hybrid_budget,
                                         seed=derive_seed(cfg.seed, "hybrid"))
            tuning_docs["hybrid"] = _tune_result_doc(result)
            weights = result.best_params
        hybrid = hybrid_rank(models, sd, weights, cfg.k)
        rankings[HYBRID] = hybrid
        save_rankings(hybrid, sd.train, _rankings_path(cfg, HYBRID))
        _write_json(out / "hybrid_weights.json", weights)

    if tuning_docs:
        _write_json(out / "tuning.json", tuning_docs)
    return rankings


def _gather_base_rankings(cfg: RunConfig, sd: SplitDataset) -> dict[str, RankingList]:
    """Reload the model rankings the rank stage fuses, erroring on gaps."""
    rankings: dict[str, RankingList] = {}
    missing: list[str] = []
    for name in cfg.models:
        path = _rankings_path(cfg, name)
        if not path.exists():
            missing.append(str(path))
            continue
        rankings[name] = load_external_rankings(path, sd, cfg.k, model_name=name)
    if missing:
        raise DataError("missing rankings for configured model(s): "
                        + ", ".join(missing) + " (run train first)")
    for source in cfg.external_rankings:
        if source.name in rankings:
            raise DataError(f"external rankings name {source.name!r} collides with "
                            f"a configured model")
        rankings[source.name] = load_external_rankings(
            source.path, sd, cfg.k, model_name=source.name, column=source.column)
    return rankings


def stage_rank(cfg: RunConfig, sd: SplitDataset | None = None
               ) -> dict[str, RankingList]:
    """Build the hypergraph rankers and persist their rankings + audits."""
    sd = sd if sd is not None else load_prepared_split(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = _gather_base_rankings(cfg, sd)

    ui = hg_mod.build_ui_edges(sd)
    uu = hg_mod.build_uu_edges(sd, cfg.k_nn)
    m_edges = hg_mod.build_model_edges(list(base.values()), sd.num_users,
                                       sd.num_items)

    varthetas: dict[str, float] = {}
    produced: dict[str, RankingList] = {}

    def run(name: str, graph: hg_mod.Hypergraph) -> None:
        A = compute_affinity(graph, cfg.dense_threshold)
        if cfg.vartheta is not None:
            vartheta = float(cfg.vartheta)
        else:
            result = tune_vartheta(
                A, graph, sd, k=cfg.k, grid=cfg.vartheta_grid, tol=cfg.tune_tol,
                max_iter=cfg.tune_max_iter, sample_size=cfg.tune_sample,
                seed=derive_seed(cfg.seed, f"vartheta:{name}"),
                name=f"vartheta:{name}")
            vartheta = float(result.best_params["vartheta"])
        varthetas[name] = vartheta
        rcfg = RankerConfig(vartheta=vartheta, tol=cfg.tol, max_iter=cfg.max_iter)
        lists = rank_all_users(graph, A, sd, k=cfg.k, cfg=rcfg, model_name=name,
                               block_size=cfg.block_size, threads=cfg.threads)
        produced[name] = lists
        save_rankings(lists, sd.train, _rankings_path(cfg, name))
        _write_edge_audit(graph, out / f"edge_weights_{name}.csv")

    run(HYPER_H, hg_mod.assemble(ui, uu, [], uniform_policy(),
                                 sd.num_users, sd.num_items))
    if base:
        run(HYPER_ENSEMBLE, hg_mod.assemble(ui, uu, m_edges, uniform_policy(),
                                            sd.num_users, sd.num_items))
        ranks = rank_models(list(base.values()), sd.validation)
        policy = weighted_policy(ranks, w_ui=cfg.w_ui, w_uu=cfg.w_uu,
                                 w_m_base=cfg.w_m_base,
                                 decay_per_rank=cfg.decay_per_rank)
        run(HYPER_ENSEMBLE_WEIGHTED,
            hg_mod.assemble(ui, uu, m_edges, policy, sd.num_users, sd.num_items))
        _write_json(out / "model_ranks.json", ranks)

    _write_json(out / "ranker_params.json", varthetas)
    return produced


def _write_edge_audit(graph: hg_mod.Hypergraph, path: Path) -> Path:
    """Per-edge weight audit: edge index, kind, weight, member count."""
    with path.open("w", encoding="utf-8") as fh:
        fh.write("edge,kind,weight,size\n")
        for idx, edge in enumerate(graph.edges):
            fh.write(f"{idx},{edge.kind},{edge.weight!r},{len(edge.members)}\n")
    return path


def discover_rankings(cfg: RunConfig, sd: SplitDataset) -> dict[str, RankingList]:
    """Load every rankings file present in the output directory."""
    out = Path(cfg.output_dir)
    found: dict[str, RankingList] = {}
    for path in sorted(out.glob("rankings_*.csv")):
        name = path.stem.removeprefix("rankings_")
        found[name] = load_external_rankings(path, sd, cfg.k, model_name=name)
    for source in cfg.external_rankings:
        if source.name not in found:
            found[source.name] = load_external_rankings(
                source.path, sd, cfg.k, model_name=source.name,
                column=source.column)
    return found


def report_order(cfg: RunConfig, names: set[str]) -> list[str]:
    """Table row order: base models, externals, extras, then the rankers."""
    tail = [HYPER_H, HYBRID, HYPER_ENSEMBLE, HYPER_ENSEMBLE_WEIGHTED]
    ordered = [n for n in cfg.models if n in names]
    ordered += [s.name for s in cfg.external_rankings
                if s.name in names and s.name not in ordered]
    ordered += sorted(names - set(ordered) - set(tail))
    ordered += [n for n in tail if n in names]
    return ordered


def stage_evaluate(cfg: RunConfig, sd: SplitDataset | None = None,
                   rankings: dict[str, RankingList] | None = None
                   ) -> list[EvalReport]:
    """Score every ranked output on disk and write the report files.

    Writes the metrics as JSON, as a delimited table, as an aligned
    plain-text table, and as a bar-chart figure.
    """
    from .plots import save_metrics_chart  # deferred: pulls in matplotlib

    sd = sd if sd is not None else load_prepared_split(cfg)
    rankings = rankings if rankings is not None else discover_rankings(cfg, sd)
    if not rankings:
        raise DataError(f"no rankings files found under {cfg.output_dir}; "
                        f"run train and rank first")
    order = report_order(cfg, set(rankings))
    reports = [evaluate_rankings(rankings[name], sd.test) for name in order]

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / REPORT_JSON, {"k": cfg.k,
                                    "results": [r.as_dict() for r in reports]})
    with (out / REPORT_CSV).open("w", encoding="utf-8") as fh:
        fh.write("model,k,precision,recall,f1\n")
        for r in reports:
            fh.write(f"{r.model_name},{r.k},{r.precision:.6f},{r.recall:.6f},"
                     f"{r.f1:.6f}\n")
    (out / REPORT_TXT).write_text(format_report_table(reports), encoding="utf-8")

    fig_dir = out / FIGURE_DIR
    fig_dir.mkdir(exist_ok=True)
    save_metrics_chart(reports, fig_dir / f"metrics_at_{cfg.k}.png")
    return reports
