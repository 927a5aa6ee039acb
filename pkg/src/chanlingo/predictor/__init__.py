"""NLG and encoder-decoder channel-change predictors: models, training, inference."""

from .data import PredictionTask, WindowedDataset, make_dataset, window_count
from .inference import (
    decimate,
    history_ids,
    interpolate,
    predict,
    predict_block,
    predict_series,
    transfer_predict,
)
from .models import (
    ModelConfig,
    NlgModel,
    Seq2SeqModel,
    build_model,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    TrainReport,
    evaluate_loss,
    fine_tune,
    token_accuracy,
    train,
    train_nlg,
    train_nmt,
)

__all__ = [
    "ModelConfig",
    "NlgModel",
    "PredictionTask",
    "Seq2SeqModel",
    "TrainReport",
    "WindowedDataset",
    "build_model",
    "decimate",
    "evaluate_loss",
    "fine_tune",
    "history_ids",
    "interpolate",
    "load_checkpoint",
    "make_dataset",
    "predict",
    "predict_block",
    "predict_series",
    "save_checkpoint",
    "token_accuracy",
    "train",
    "train_nlg",
    "train_nmt",
    "transfer_predict",
    "window_count",
]
