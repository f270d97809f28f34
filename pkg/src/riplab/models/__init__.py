from .base import N_CLASSES, Classifier
from .mamba import FrontalMambaModel, MultiViewEnsemble
from .recurrent import BaselineRnnModel, BiLSTMLayer, CnnLstmModel, lstm_forward

__all__ = [
    "N_CLASSES", "Classifier", "FrontalMambaModel", "MultiViewEnsemble", "CnnLstmModel",
    "BaselineRnnModel", "BiLSTMLayer", "lstm_forward",
]
