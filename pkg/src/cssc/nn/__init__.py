from . import autodiff
from .autodiff import Tape, Var
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (GruCell, Mlp, cell_update, init_gru, init_mlp, jvp_f, jvp_g,
                     mlp_forward, mlp_jvp, vjp_g)
from .optim import AdaMax, adamax_step

__all__ = [
    "autodiff", "Tape", "Var", "load_checkpoint", "save_checkpoint", "GruCell",
    "Mlp", "cell_update", "init_gru", "init_mlp", "jvp_f", "jvp_g", "mlp_forward",
    "mlp_jvp", "vjp_g", "AdaMax", "adamax_step",
]
