"""Structured sentiment extraction with token-pair labels and a multi-view token graph."""

from .corpus import (DataError, Sentence, SentimentTuple, Span, SynthConfig, generate_synthetic, load_dataset,
                     read_dataset, save_corpus)
from .labeling import EssentialLabel, LabelCellSet, WholeLabel, decode, encode, encode_essential, encode_whole, \
    pair_closure
from .metrics import EvalReport, bucketize, evaluate, graph_f1
from .model import ModelConfig, TokenGraphModel
from .training import TrainConfig, alpha_sweep, gradcheck, train

__version__ = "0.1.0"

__all__ = [
    "DataError", "Sentence", "SentimentTuple", "Span", "SynthConfig", "generate_synthetic", "load_dataset",
    "read_dataset", "save_corpus", "EssentialLabel", "LabelCellSet", "WholeLabel", "decode", "encode",
    "encode_essential", "encode_whole", "pair_closure", "EvalReport", "bucketize", "evaluate", "graph_f1",
    "ModelConfig", "TokenGraphModel", "TrainConfig", "alpha_sweep", "gradcheck", "train",
]
