"""
Mini-batch training with MSE loss, Adam/SGD and early stopping
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from config.experiment import TrainingHyperparameters
from config.settings import SHOW_PROGRESS
from nn.layers import mse_loss
from nn.models import Model, predict
from utils.exceptions import ConfigError, ShapeError, TrainingDivergedError

logger = logging.getLogger(__name__)


class SGD:
    """Plain gradient descent"""

    def __init__(self, learning_rate: float = 1e-3):
        self.learning_rate = learning_rate

    def step(self, model: Model):
        for _, layer, key in model.named_parameters():
            layer.params[key] -= self.learning_rate * layer.grads[key]


class Adam:
    """Adaptive moment estimation with bias correction"""

    def __init__(self, learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.epsilon = beta1, beta2, epsilon
        self.t = 0
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    def step(self, model: Model):
        self.t += 1
        correction1 = 1 - self.beta1 ** self.t
        correction2 = 1 - self.beta2 ** self.t
        for name, layer, key in model.named_parameters():
            grad = layer.grads[key]
            m = self._m.setdefault(name, np.zeros_like(grad))
            v = self._v.setdefault(name, np.zeros_like(grad))
            m *= self.beta1
            m += (1 - self.beta1) * grad
            v *= self.beta2
            v += (1 - self.beta2) * grad * grad
            layer.params[key] -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.epsilon)


def make_optimizer(name: str, learning_rate: float):
    if name == "adam":
        return Adam(learning_rate)
    if name == "sgd":
        return SGD(learning_rate)
    raise ConfigError(f"Unknown optimizer: {name}")


@dataclass
class TrainReport:
    """Per-epoch loss curves of one training run"""
    train_losses: List[float] = field(default_factory=list)
    validation_losses: List[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.train_losses)

    @property
    def final_validation_mse(self) -> float:
        """Validation MSE of the weights the run ended with (the best epoch)"""
        if not self.validation_losses:
            return math.nan
        return self.validation_losses[self.best_epoch - 1]

    @property
    def validation_below_training(self) -> float:
        """Fraction of epochs whose validation loss is below the training loss"""
        if not self.train_losses:
            return 0.0
        below = sum(v < t for t, v in zip(self.train_losses, self.validation_losses))
        return below / len(self.train_losses)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "epoch": np.arange(1, self.epochs + 1),
            "train_loss": self.train_losses,
            "validation_loss": self.validation_losses,
        })


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    order = rng.permutation(n)
    chunks = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    # batchnorm cannot train on a single sample
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks.pop()])
    return chunks


def evaluate_loss(model: Model, inputs: np.ndarray, targets: np.ndarray, batch_size: int = 256) -> float:
    loss, _ = mse_loss(predict(model, inputs, batch_size), targets)
    return loss


def train(
    model: Model,
    train_data: Tuple[np.ndarray, np.ndarray],
    validation_data: Optional[Tuple[np.ndarray, np.ndarray]],
    hyperparams: TrainingHyperparameters,
    rng_seed: Optional[int] = None,
    label: str = "model",
) -> Tuple[Model, TrainReport]:
    """
    Train a model in place

    Args:
        model: network to train
        train_data: (inputs, targets)
        validation_data: held-out (inputs, targets); the training set is used when None
        hyperparams: epochs, batch size, optimizer, patience
        rng_seed: seed for the batch shuffling
        label: name used in log lines

    Returns:
        (model restored to its best-validation weights, TrainReport)

    Raises:
        TrainingDivergedError: a loss became NaN or infinite
    """
    x_train = np.asarray(train_data[0], dtype=np.float64)
    y_train = np.asarray(train_data[1], dtype=np.float64)
    if len(x_train) != len(y_train) or len(x_train) == 0:
        raise ShapeError(f"Training inputs ({len(x_train)}) and targets ({len(y_train)}) must be non-empty and paired")
    x_val, y_val = validation_data if validation_data is not None else (x_train, y_train)

    rng = np.random.default_rng(rng_seed)
    optimizer = make_optimizer(hyperparams.optimizer, hyperparams.learning_rate)
    report = TrainReport()
    best_loss, best_state, stale = math.inf, model.state_dict(), 0

    epochs = tqdm(range(1, hyperparams.epochs + 1), desc=f"Training {label}", unit="epoch",
                  disable=not SHOW_PROGRESS, leave=False)
    for epoch in epochs:
        total = 0.0
        for idx in _batches(len(x_train), hyperparams.batch_size, rng):
            pred = model.forward(x_train[idx], training=True)
            loss, grad = mse_loss(pred, y_train[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            model.backward(grad)
            optimizer.step(model)
            total += loss * len(idx)

        train_loss = total / len(x_train)
        val_loss = evaluate_loss(model, x_val, y_val)
        if not math.isfinite(val_loss):
            raise TrainingDivergedError(epoch, "Validation loss is not finite")
        report.train_losses.append(train_loss)
        report.validation_losses.append(val_loss)
        logger.debug(f"{label} epoch {epoch}: train {train_loss:.3e}, validation {val_loss:.3e}")
        epochs.set_postfix(train=f"{train_loss:.2e}", val=f"{val_loss:.2e}")

        if val_loss < best_loss:
            best_loss, best_state, stale = val_loss, model.state_dict(), 0
            report.best_epoch = epoch
        else:
            stale += 1
            if stale >= hyperparams.patience:
                report.stopped_early = True
                logger.info(f"{label}: early stop at epoch {epoch} (best epoch {report.best_epoch})")
                break

    model.load_state_dict(best_state)
    logger.info(
        f"{label}: {report.epochs} epochs, best validation MSE {report.final_validation_mse:.3e} "
        f"at epoch {report.best_epoch}"
    )
    return model, report
