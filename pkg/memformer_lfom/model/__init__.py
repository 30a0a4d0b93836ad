from memformer_lfom.model.checkpoint import load_checkpoint
from memformer_lfom.model.checkpoint import params_from_document
from memformer_lfom.model.checkpoint import params_to_document
from memformer_lfom.model.checkpoint import save_checkpoint
from memformer_lfom.model.forward import MemoryRegister
from memformer_lfom.model.forward import attention
from memformer_lfom.model.forward import forward
from memformer_lfom.model.forward import memformer_cgd_forward
from memformer_lfom.model.forward import memformer_lfom_forward
from memformer_lfom.model.forward import predict
from memformer_lfom.model.forward import tf_forward
from memformer_lfom.model.params import BoundParams
from memformer_lfom.model.params import HeadParams
from memformer_lfom.model.params import LayerParams
from memformer_lfom.model.params import MemformerParams
from memformer_lfom.model.params import gdpp_enable
from memformer_lfom.model.params import init_params
from memformer_lfom.model.params import zero_params

__all__ = [
    "MemformerParams",
    "BoundParams",
    "LayerParams",
    "HeadParams",
    "MemoryRegister",
    "init_params",
    "zero_params",
    "gdpp_enable",
    "attention",
    "tf_forward",
    "memformer_cgd_forward",
    "memformer_lfom_forward",
    "forward",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
    "params_to_document",
    "params_from_document",
]
