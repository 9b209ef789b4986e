from .gradcheck import (
    LAYER_PROBES,
    PRESET_PROBES,
    GradcheckReport,
    ScalarLoss,
    check_layer_kind,
    check_preset,
    finite_difference_gradcheck,
    gradcheck_report,
    quadratic_loss,
    sum_loss,
    weighted_sum_loss,
)
from .layers import KINDS, LayerSpec, bilinear_upsample
from .network import INFER, TRAIN, Network, Tape, backward, forward
from .optim import OptimizerState, adam_step
from .presets import conv_discriminator, conv_generator, mlp_discriminator, mlp_generator
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
