from memformer_lfom.autodiff.gradcheck import numerical_gradient
from memformer_lfom.autodiff.gradcheck import relative_error
from memformer_lfom.autodiff.ops import add
from memformer_lfom.autodiff.ops import entry
from memformer_lfom.autodiff.ops import hadamard
from memformer_lfom.autodiff.ops import matmul
from memformer_lfom.autodiff.ops import mean
from memformer_lfom.autodiff.ops import scale
from memformer_lfom.autodiff.ops import square
from memformer_lfom.autodiff.ops import sub
from memformer_lfom.autodiff.ops import transpose
from memformer_lfom.autodiff.tape import Matrix
from memformer_lfom.autodiff.tape import Node
from memformer_lfom.autodiff.tape import Tape
from memformer_lfom.autodiff.tape import as_matrix
from memformer_lfom.autodiff.tape import backward

__all__ = [
    "Matrix",
    "Node",
    "Tape",
    "as_matrix",
    "backward",
    "add",
    "sub",
    "scale",
    "matmul",
    "transpose",
    "hadamard",
    "entry",
    "square",
    "mean",
    "numerical_gradient",
    "relative_error",
]
