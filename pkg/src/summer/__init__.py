"""SUMMER: multimodal emotion recognition with dynamic expert routing,
hierarchical cross-modal attention fusion, and unimodal-teacher distillation.
"""

__version__ = "0.1.0"

from .autograd import Tensor, Tape, backward, finite_difference_check, no_grad, softmax

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "finite_difference_check",
    "no_grad",
    "softmax",
    "__version__",
]
