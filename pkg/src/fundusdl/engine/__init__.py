"""From-scratch numpy network engine: layers, losses, init, optimizers."""

from .gradcheck import GradCheckReport, check_gradients
from .init import orthogonal
from .layers import (Conv2d, Dense, Dropout, Flatten, LeakyReLU, MaxPool2d,
                     Maxout, ReLU)
from .losses import mse_loss
from .network import Network
from .optim import Adam, SgdNesterov

__all__ = [
    "Conv2d", "Dense", "Dropout", "Flatten", "LeakyReLU", "MaxPool2d",
    "Maxout", "ReLU", "Network", "mse_loss", "orthogonal", "SgdNesterov",
    "Adam", "check_gradients", "GradCheckReport",
]
