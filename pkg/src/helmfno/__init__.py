"""Frequency-domain seismic wavefield surrogates with finite-difference and
direct-solver baselines."""
from .dataset import WaveDataset, build_dataset
from .fdtd import BACKEND, AbsorbingBoundary, SourceSpec, TimeGrid, simulate
from .helmholtz import assemble, solve
from .operators import FNO, PFNO, ForwardNet, new_handle
from .spectral import reconstruct_time, time_to_freq
from .training import TrainConfig, evaluate_mse, predict, train
from .velocity import FAMILIES, Grid, VelocityModel, synthesize

__version__ = "0.1.0"

__all__ = ["AbsorbingBoundary", "BACKEND", "FAMILIES", "FNO", "ForwardNet", "Grid", "PFNO",
           "SourceSpec", "TimeGrid", "TrainConfig", "VelocityModel", "WaveDataset", "assemble",
           "build_dataset", "evaluate_mse", "new_handle", "predict", "reconstruct_time", "simulate",
           "solve", "synthesize", "time_to_freq", "train"]
