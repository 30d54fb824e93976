"""Hypergraph ensemble recommender.

Fuses raw user-item interactions and the top-k outputs of several base
recommenders into one weighted hypergraph, then ranks items per user by
solving a regularized hypergraph ranking problem.
"""

from .config import ExternalSource, RunConfig, load_config
from .data import (InteractionDataset, SplitDataset, load_interactions, load_split,
                   save_interactions, save_split, split)
from .ensemble import (WeightPolicy, hybrid_rank, hybrid_scores, rank_models,
                       uniform_policy, weighted_policy)
from .errors import (ConfigError, ConvergenceError, DataError, HyperecError,
                     NumericError)
from .evaluation import (EvalReport, ExperimentResult, TuneResult, evaluate_rankings,
                         f1_at_k, format_report_table, precision_at_k, recall_at_k,
                         run_experiment, tune)
from .hypergraph import (Hyperedge, Hypergraph, assemble, build_model_edges,
                         build_ui_edges, build_uu_edges, from_edges,
                         load_hypergraph, save_hypergraph)
from .ranker import (AffinityOperator, RankerConfig, compute_affinity, rank_all_users,
                     ranking_loss, recommend, solve_ranking, solve_ranking_block)
from .recommenders import (FactorModel, RankingList, load_external_rankings,
                           load_factors, rank_topk, save_factors, save_rankings,
                           train_bpr, train_warp, train_wrmf, wrmf_objective)
from .synthetic import fixture_dataset, planted_dataset

__version__ = "0.1.0"

__all__ = [
    "AffinityOperator", "ConfigError", "ConvergenceError", "DataError",
    "EvalReport", "ExperimentResult", "ExternalSource", "FactorModel",
    "Hyperedge", "Hypergraph", "HyperecError", "InteractionDataset",
    "NumericError", "RankerConfig", "RankingList", "RunConfig", "SplitDataset",
    "TuneResult", "WeightPolicy", "assemble", "build_model_edges",
    "build_ui_edges", "build_uu_edges", "compute_affinity", "evaluate_rankings",
    "f1_at_k", "fixture_dataset", "format_report_table", "from_edges",
    "hybrid_rank", "hybrid_scores", "load_config", "load_external_rankings",
    "load_factors", "load_hypergraph", "load_interactions", "load_split",
    "planted_dataset", "precision_at_k", "rank_all_users", "rank_models",
    "rank_topk", "ranking_loss", "recall_at_k", "recommend", "run_experiment",
    "save_factors", "save_hypergraph", "save_interactions", "save_rankings",
    "save_split", "solve_ranking", "solve_ranking_block", "split", "train_bpr",
    "train_warp", "train_wrmf", "tune", "uniform_policy", "weighted_policy",
    "wrmf_objective",
]
