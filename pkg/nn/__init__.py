"""
NN Module
Float64 network engine: layer kernels with analytic backward passes,
containers, training loop and model files

Models:
    - Autoencoder: convolutional denoiser for process-matrix images
    - FeedForwardNet: dense trunk with one regression branch per parameter
"""

from .models import Autoencoder, FeedForwardNet, Model, Sequential, build_model, predict
from .serialization import load_model, model_from_bytes, model_to_bytes, save_model
from .training import SGD, Adam, TrainReport, train

__all__ = [
    'Autoencoder',
    'FeedForwardNet',
    'Model',
    'Sequential',
    'build_model',
    'predict',
    'load_model',
    'model_from_bytes',
    'model_to_bytes',
    'save_model',
    'SGD',
    'Adam',
    'TrainReport',
    'train',
]
