__all__ = [
    "ModelKind", "LayerSlice", "Minibatch", "Model", "forward_loss", "backward_grad", "sigmoid",
    "Dataset", "DatasetSpec", "BatchStream", "make_synthetic",
    "finite_difference_grad", "gradient_error",
]

from .model import ModelKind, LayerSlice, Minibatch, Model, forward_loss, backward_grad, sigmoid
from .data import Dataset, DatasetSpec, BatchStream, make_synthetic
from .gradcheck import finite_difference_grad, gradient_error
