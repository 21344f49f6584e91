from .gradcheck import bind, grad_check
from .mlp import MlpSpec, init_mlp, mlp_backward, mlp_forward
from .params import NetworkParams, adam_step, load_checkpoint, save_checkpoint
from .transformer import CausalTransformerSpec, ct_backward, ct_forward, ct_hidden_states, init_ct

__all__ = [
    "CausalTransformerSpec",
    "MlpSpec",
    "NetworkParams",
    "adam_step",
    "bind",
    "ct_backward",
    "ct_forward",
    "ct_hidden_states",
    "grad_check",
    "init_ct",
    "init_mlp",
    "load_checkpoint",
    "mlp_backward",
    "mlp_forward",
    "save_checkpoint",
]
