"""Closed language-vision thinking loop over digit imagery.

Subsystems: a tensor engine with reverse-mode gradients, a vision
autoencoder, a symbol codec plus quantity layer, a next-frame-predicting
working memory trained on a cumulative command curriculum, and a thinking
loop that chains commands over an imagined image with no visual input.
"""

from .curriculum import DigitPool, Episode, Frame, load_idx, make_episode, rotate, scale, shift, synth_pool
from .language import IpsModel, binarize, quantity_oracle, textize, train_ips
from .optim import Adam
from .pfc import ModelBundle, PfcModel, Stage, evaluate_syntax, free_run, next_frame_loss, train_stage
from .tensor import Tensor
from .thinking import SessionState, issue_command, new_session, run_script
from .vision import VisionModel, train_autoencoder

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "DigitPool",
    "Episode",
    "Frame",
    "IpsModel",
    "ModelBundle",
    "PfcModel",
    "SessionState",
    "Stage",
    "Tensor",
    "VisionModel",
    "binarize",
    "evaluate_syntax",
    "free_run",
    "issue_command",
    "load_idx",
    "make_episode",
    "new_session",
    "next_frame_loss",
    "quantity_oracle",
    "rotate",
    "run_script",
    "scale",
    "shift",
    "synth_pool",
    "textize",
    "train_autoencoder",
    "train_ips",
    "train_stage",
]
