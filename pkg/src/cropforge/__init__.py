"""Saliency-anchored, single-pass image cropping with a small numpy autodiff engine."""
from .autodiff import Tensor, no_grad
from .crop_layers import (
    Moments,
    anchor_backward,
    anchor_layer,
    anchor_region,
    compute_moments,
    roi_pool,
    soft_binarize,
)
from .data import SyntheticSample, generate_synthetic, load_dataset, write_dataset
from .estimator import SaliencyCropper
from .geometry import OffsetCoefficients, Rect, decode_rect, encode_offsets, ground_truth_offsets
from .losses import LossReport, bce_loss, bde, iou, offset_l2_loss, total_loss
from .params import ModelParams, sgd_step
from .training import (
    ModelConfig,
    TrainingSchedule,
    TrainOptions,
    build_model,
    evaluate,
    predict_crop,
    train,
)
from .unet import UNetConfig, build_unet, forward_saliency, resize_shorter_side

__version__ = "0.1.0"
