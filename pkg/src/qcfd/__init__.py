"""Tri-modal ECG synthesis with complementarity-preserving and interference-aware losses."""
from .beats import BeatParams, Label, RawBeat, SimProfile, fiducial_windows, make_dataset, synthesize_beat
from .dsp import DspProfile, TriModalSet, preprocess, to_trimodal
from .evaluation import evaluate, normalized_scores, train_reference_models
from .info import BinningSpec, CfdStats, cfd_stats, mutual_information, redundancy
from .latent import InterferenceOperator, LatentState, interference_energy, sample_latent
from .training import TrainConfig, ablation, fit, generate, train

__version__ = "0.1.0"
