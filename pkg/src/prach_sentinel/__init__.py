"""
prach_sentinel: PRACH link simulation and CNN-based interference detection.

The pipeline runs Zadoff-Chu preamble generation, format-0 burst
modulation, ETU Rayleigh fading with co-channel PRACH interference and
AWGN, the frequency-domain correlation receiver, dataset generation, a
small residual CNN with hand-written backpropagation, and evaluation
against the receiver's own threshold rule.
"""

from .channel import ChannelConfig, add_awgn, add_interference, apply_channel, draw_fading
from .cnn import PrachCNN, TrainConfig, TrainHistory, load_model, save_model, train
from .config import ExperimentConfig, load_config
from .dataset import (DEFAULT_INTERF_GRID, DEFAULT_SNR_GRID, PrachDataset, generate_dataset,
                      load_dataset, save_dataset, split)
from .estimators import (CorrelationInterferenceDetector, InterferenceCNNClassifier,
                         PrachFeatureExtractor)
from .exceptions import PrachError
from .metrics import ConfusionMatrix, EvalReport, baseline_compare, derive, evaluate
from .receiver import correlate, detect, front_end
from .scenario import ScenarioConfig, extract_features, simulate_observation
from .waveform import PrachNumerology, modulate
from .zc import preamble_from_index, zc_root

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig", "add_awgn", "add_interference", "apply_channel", "draw_fading",
    "PrachCNN", "TrainConfig", "TrainHistory", "load_model", "save_model", "train",
    "ExperimentConfig", "load_config",
    "DEFAULT_INTERF_GRID", "DEFAULT_SNR_GRID", "PrachDataset", "generate_dataset",
    "load_dataset", "save_dataset", "split",
    "CorrelationInterferenceDetector", "InterferenceCNNClassifier", "PrachFeatureExtractor",
    "PrachError",
    "ConfusionMatrix", "EvalReport", "baseline_compare", "derive", "evaluate",
    "correlate", "detect", "front_end",
    "ScenarioConfig", "extract_features", "simulate_observation",
    "PrachNumerology", "modulate",
    "preamble_from_index", "zc_root",
]
