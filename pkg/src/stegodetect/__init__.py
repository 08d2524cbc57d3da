"""Recurrent-network text steganalysis (TS-RNN / TS-BiRNN).

Detects text generated while hiding payload bits, and estimates how many
bits per word were hidden.
"""

from .corpus import LabeledCorpus, Vocabulary, build_vocab, load_tsteg_layout, split, tokenize
from .evaluation import ConfusionMatrix, Metrics, evaluate_binary, evaluate_multiclass, export_features, sweep_bpw
from .network import ModelConfig, ModelParams, backward, forward, predict_proba
from .persist import Checkpoint, load, save
from .stegogen import BitStream, NgramLM, decode, generate, synthesize_dataset, train_lm
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BitStream", "Checkpoint", "ConfusionMatrix", "LabeledCorpus", "Metrics", "ModelConfig",
    "ModelParams", "NgramLM", "TrainConfig", "Vocabulary", "backward", "build_vocab", "decode",
    "evaluate_binary", "evaluate_multiclass", "export_features", "forward", "generate",
    "load", "load_tsteg_layout", "predict_proba", "save", "split", "sweep_bpw",
    "synthesize_dataset", "tokenize", "train", "train_lm",
]
