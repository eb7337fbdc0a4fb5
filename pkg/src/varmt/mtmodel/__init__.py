from .checkpoint import load_checkpoint, save_checkpoint
from .config import CONTINUOUS, SOFTMAX, ModelConfig, TrainConfig
from .decoding import Translation, translate_beam, translate_greedy
from .radam import RectifiedAdam
from .training import TrainResult, batch_loss, finetune, train, vmf_nll
from .transformer import (BOS, EOS, NUM_SPECIALS, PAD, SPECIALS, UNK,
                          Seq2SeqModel, build_model)

__all__ = [
    "BOS", "CONTINUOUS", "EOS", "ModelConfig", "NUM_SPECIALS", "PAD",
    "RectifiedAdam", "SOFTMAX", "SPECIALS", "Seq2SeqModel", "TrainConfig",
    "TrainResult", "Translation", "UNK", "batch_loss", "build_model",
    "finetune", "load_checkpoint", "save_checkpoint", "train",
    "translate_beam", "translate_greedy", "vmf_nll",
]
