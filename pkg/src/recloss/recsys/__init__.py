"""Desk-scale implicit-feedback recommender used to exercise the losses."""
from .data import (
    DataFormatError,
    InteractionDataset,
    SplitDataset,
    load_interactions,
    make_block_dataset,
    split_leave_last,
    write_interactions_csv,
)
from .model import ModelParams, ScorerKind, init_params, load_model, save_model, score
from .train import EvalResult, TrainConfig, TrainingDiverged, TrainResult, evaluate, loss_and_grads, train

__all__ = [
    "DataFormatError",
    "EvalResult",
    "InteractionDataset",
    "ModelParams",
    "ScorerKind",
    "SplitDataset",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "evaluate",
    "init_params",
    "load_interactions",
    "load_model",
    "loss_and_grads",
    "make_block_dataset",
    "save_model",
    "score",
    "split_leave_last",
    "train",
    "write_interactions_csv",
]
