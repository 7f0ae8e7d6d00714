"""Regression head, three-stage training, single-pass crop prediction and evaluation."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, no_grad
from .crop_layers import (
    DEFAULT_GAMMA,
    DEFAULT_SIGMA,
    FALLBACK_FRACTION,
    anchor_region,
    roi_pool,
    soft_binarize,
)
from .data import SyntheticSample
from .errors import NumericError, ParameterError, TrainingDivergedError
from .geometry import OffsetCoefficients, Rect, decode_rect, encode_offsets
from .losses import bde, iou
from .ops import bce_with_logits, fully_connected, relu, squared_error
from .params import REGRESSION, SALIENCY, ModelParams, clip_grad_norm, glorot_uniform, sgd_step
from .unet import UNetConfig, build_unet, forward_calls, forward_saliency, resize_shorter_side

logger = logging.getLogger(__name__)

# anchors thinner than this (pixels) are grown so the offset decoding stays defined
MIN_ANCHOR_SIDE = 1.0


@dataclass(frozen=True)
class ModelConfig:
    unet: UNetConfig = field(default_factory=UNetConfig)
    roi_grid: int = 4
    hidden: tuple[int, ...] = (2048, 1024)

    @property
    def roi_features(self) -> int:
        return self.unet.bottleneck_channels * self.roi_grid ** 2

    @classmethod
    def from_params(cls, params: ModelParams) -> "ModelConfig":
        unet = UNetConfig.from_params(params)
        hidden = []
        k = 1
        while f"reg.fc{k}.w" in params:
            hidden.append(params[f"reg.fc{k}.w"].shape[0])
            k += 1
        if k == 1:
            raise ParameterError("parameters contain no regression head")
        grid = math.isqrt(params["reg.fc1.w"].shape[1] // unet.bottleneck_channels)
        return cls(unet=unet, roi_grid=grid, hidden=tuple(hidden))


def build_regression_head(in_features: int, hidden: Sequence[int] = (2048, 1024), seed: int = 0) -> ModelParams:
    rng = np.random.default_rng([seed, 1])
    params = ModelParams()
    sizes = [in_features, *hidden]
    for k in range(1, len(sizes)):
        n_in, n_out = sizes[k - 1], sizes[k]
        params.add(f"reg.fc{k}.w", glorot_uniform(rng, (n_out, n_in), n_in, n_out), REGRESSION)
        params.add(f"reg.fc{k}.b", np.zeros(n_out), REGRESSION)
    n_in = sizes[-1]
    params.add("reg.out.w", glorot_uniform(rng, (4, n_in), n_in, 4), REGRESSION)
    params.add("reg.out.b", np.zeros(4), REGRESSION)
    return params


def build_model(config: ModelConfig) -> ModelParams:
    params = build_unet(config.unet)
    params.merge(build_regression_head(config.roi_features, config.hidden, config.unet.seed))
    return params


def forward_regression(params: ModelParams, bottleneck: Tensor, anchor: Rect, stride: int, grid: int) -> Tensor:
    """RoI-pool the anchor from the bottleneck and map it to four offset coefficients."""
    forward_calls["regression"] += 1
    x = roi_pool(bottleneck, anchor, stride, grid).flatten()
    k = 1
    while f"reg.fc{k}.w" in params:
        x = relu(fully_connected(x, params[f"reg.fc{k}.w"], params[f"reg.fc{k}.b"]))
        k += 1
    return fully_connected(x, params["reg.out.w"], params["reg.out.b"])


def compute_anchor(saliency_map: np.ndarray, sigma: float, gamma: float, fallback_fraction: float = FALLBACK_FRACTION) -> Rect:
    """Soft-binarize a probability map and place the anchor window on it."""
    h, w = saliency_map.shape
    rect = anchor_region(soft_binarize(saliency_map, sigma), gamma, fallback_fraction)
    return rect.with_min_size(MIN_ANCHOR_SIDE, w, h)


def prepare_sample(sample: SyntheticSample, target_size: int | None, multiple: int) -> SyntheticSample:
    """Resize a sample (image, saliency target, crop) to training resolution."""
    if target_size is None:
        return sample
    image, (sx, sy) = resize_shorter_side(sample.image, target_size, multiple)
    saliency = None
    if sample.gt_saliency is not None:
        saliency = np.clip(resize_shorter_side(sample.gt_saliency, target_size, multiple)[0], 0.0, 1.0)
    h, w = image.shape[:2]
    crop = sample.gt_crop.scale(sx, sy).clamp(w, h) if sample.gt_crop is not None else None
    return SyntheticSample(sample.id, image, saliency, crop)


# schedule ---------------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    number: int
    learning_rate: float
    epochs: int
    groups: tuple[str, ...]


@dataclass(frozen=True)
class TrainingSchedule:
    stages: tuple[Stage, ...] = (
        Stage(1, 1e-4, 4, (SALIENCY,)),
        Stage(2, 1e-4, 6, (REGRESSION,)),
        Stage(3, 1e-5, 2, (SALIENCY, REGRESSION)),
    )

    @classmethod
    def standard(cls) -> "TrainingSchedule":
        return cls()

    @classmethod
    def toy(cls) -> "TrainingSchedule":
        """Standard stage structure with the stage-2 rate rescaled for desk-scale feature maps.

        The toy bottleneck yields RoI vectors with roughly 1e-4 of the squared
        norm of a full-size network, so the head needs a proportionally larger
        step to move within six epochs.
        """
        return cls().with_overrides(learning_rates={2: 1e-2})

    def only(self, numbers: Sequence[int]) -> "TrainingSchedule":
        return TrainingSchedule(tuple(s for s in self.stages if s.number in set(numbers)))

    def with_overrides(self, learning_rates: dict[int, float] | None = None, epochs: dict[int, int] | None = None) -> "TrainingSchedule":
        learning_rates, epochs = learning_rates or {}, epochs or {}
        return TrainingSchedule(tuple(
            replace(
                s,
                learning_rate=learning_rates.get(s.number, s.learning_rate),
                epochs=epochs.get(s.number, s.epochs),
            )
            for s in self.stages
        ))


@dataclass(frozen=True)
class EpochLog:
    stage: int
    epoch: int
    mean_saliency_loss: float
    mean_offset_loss: float | None
    total: float


@dataclass
class TrainOptions:
    sigma: float = DEFAULT_SIGMA
    gamma: float = DEFAULT_GAMMA
    lam: float = 1.0
    gt_mode: str = "crop-box"  # or "full-image"
    anchor_source: str = "predicted"  # or "ground-truth"
    seed: int = 0
    # joint gradient-norm ceiling applied before each SGD step; None disables it
    max_grad_norm: float | None = 1000.0

    def __post_init__(self):
        if self.gt_mode not in ("crop-box", "full-image"):
            raise ParameterError(f"gt_mode must be 'crop-box' or 'full-image', got {self.gt_mode!r}")
        if self.anchor_source not in ("predicted", "ground-truth"):
            raise ParameterError(f"anchor_source must be 'predicted' or 'ground-truth', got {self.anchor_source!r}")


def _offset_target(sample: SyntheticSample, anchor: Rect, gt_mode: str) -> np.ndarray:
    h, w = sample.image.shape[:2]
    if gt_mode == "full-image" or sample.gt_crop is None:
        aesthetic = Rect.full(w, h)
    else:
        aesthetic = sample.gt_crop
    return encode_offsets(anchor, aesthetic).as_array()


def _check_finite(value: float, stage: int, sample_id: str) -> None:
    if not math.isfinite(value):
        raise TrainingDivergedError(stage, sample_id, value)


def train(
    params: ModelParams,
    data: Sequence[SyntheticSample],
    schedule: TrainingSchedule | None = None,
    options: TrainOptions | None = None,
    config: ModelConfig | None = None,
    on_epoch: Callable[[EpochLog], None] | None = None,
) -> tuple[ModelParams, list[EpochLog]]:
    """Run the staged schedule in place on ``params``.

    Stage 1 fits the saliency net, stage 2 fits the regression head with the
    saliency net frozen, stage 3 fine-tunes everything on ``L_s + lam * L_r``.
    Samples must already be at training resolution.
    """
    if not data:
        raise ParameterError("training data is empty")
    schedule = schedule or TrainingSchedule()
    options = options or TrainOptions()
    config = config or ModelConfig.from_params(params)
    stride, grid = config.unet.stride, config.roi_grid
    for s in data:
        if s.gt_saliency is None:
            raise ParameterError(f"sample {s.id} has no saliency target")
    log: list[EpochLog] = []

    for stage in schedule.stages:
        params.frozen = set(n for n in (SALIENCY, REGRESSION) if n not in stage.groups)
        for epoch in range(1, stage.epochs + 1):
            order = np.random.default_rng([options.seed, stage.number, epoch]).permutation(len(data))
            ls_terms, lr_terms = [], []
            for idx in order:
                sample = data[int(idx)]
                # non-finite values are caught explicitly below, so silence numpy's warnings
                with np.errstate(over="ignore", invalid="ignore"):
                    try:
                        ls, lr = _train_step(params, sample, stage, options, stride, grid)
                    except NumericError:
                        raise TrainingDivergedError(stage.number, sample.id, float("nan"), "gradient") from None
                ls_terms.append(ls)
                lr_terms.append(lr or 0.0)
            # exactly rounded sums keep the means independent of the shuffle order
            n = len(data)
            mean_ls = math.fsum(ls_terms) / n
            mean_lr = math.fsum(lr_terms) / n if stage.number != 1 else None
            entry = EpochLog(stage.number, epoch, mean_ls, mean_lr, mean_ls + options.lam * (mean_lr or 0.0))
            log.append(entry)
            logger.info("stage %d epoch %d: Ls=%.6g Lr=%s", stage.number, epoch, mean_ls, mean_lr)
            if on_epoch is not None:
                on_epoch(entry)
    params.frozen = set()
    return params, log


def _train_step(params, sample, stage: Stage, options: TrainOptions, stride: int, grid: int):
    groups = stage.groups
    if stage.number == 1:
        out = forward_saliency(params, sample.image)
        loss = bce_with_logits(out.logits, sample.gt_saliency)
        _check_finite(loss.item(), 1, sample.id)
        loss.backward()
        _step(params, stage, options)
        return loss.item(), None

    train_saliency = SALIENCY in groups
    if train_saliency:
        out = forward_saliency(params, sample.image)
    else:
        with no_grad():
            out = forward_saliency(params, sample.image)
    ls = bce_with_logits(out.logits, sample.gt_saliency)
    source = sample.gt_saliency if options.anchor_source == "ground-truth" else out.map.data
    anchor = compute_anchor(source, options.sigma, options.gamma)
    target = _offset_target(sample, anchor, options.gt_mode)
    bottleneck = out.bottleneck if train_saliency else Tensor(out.bottleneck.data)
    pred = forward_regression(params, bottleneck, anchor, stride, grid)
    lr_loss = squared_error(pred, target)
    total = ls + options.lam * lr_loss if train_saliency else lr_loss
    _check_finite(total.item(), stage.number, sample.id)
    total.backward()
    _step(params, stage, options)
    return ls.item(), lr_loss.item()


def _step(params: ModelParams, stage: Stage, options: TrainOptions) -> None:
    if options.max_grad_norm is not None:
        clip_grad_norm(params, options.max_grad_norm, stage.groups)
    sgd_step(params, stage.learning_rate, stage.groups)


# inference ------------------------------------------------------------------

@dataclass
class CropPrediction:
    rect: Rect  # original image coordinates
    anchor: Rect  # original image coordinates
    offsets: OffsetCoefficients
    saliency: np.ndarray  # probability map at network resolution
    scale: tuple[float, float]
    timing_ms: dict[str, float]


def predict_crop(
    params: ModelParams,
    image: np.ndarray,
    sigma: float = DEFAULT_SIGMA,
    gamma: float = DEFAULT_GAMMA,
    target_size: int | None = None,
    config: ModelConfig | None = None,
) -> CropPrediction:
    """One saliency pass and one regression pass; no candidate enumeration."""
    config = config or ModelConfig.from_params(params)
    stride = config.unet.stride
    t0 = time.perf_counter()
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    orig_h, orig_w = img.shape[:2]
    if target_size is not None:
        img, scale = resize_shorter_side(img, target_size, stride)
    else:
        scale = (1.0, 1.0)
    h, w = img.shape[:2]
    t1 = time.perf_counter()
    with no_grad():
        out = forward_saliency(params, img, config.unet)
        t2 = time.perf_counter()
        anchor = compute_anchor(out.map.data, sigma, gamma)
        t3 = time.perf_counter()
        coeffs = OffsetCoefficients.from_array(
            forward_regression(params, out.bottleneck, anchor, stride, config.roi_grid).data
        )
    rect = decode_rect(anchor, coeffs, Rect.full(w, h))
    t4 = time.perf_counter()
    sx, sy = scale
    rect_orig = rect.scale(1.0 / sx, 1.0 / sy).clamp(orig_w, orig_h)
    anchor_orig = anchor.scale(1.0 / sx, 1.0 / sy).clamp(orig_w, orig_h)
    timing = {
        "resize": 1e3 * (t1 - t0),
        "saliency": 1e3 * (t2 - t1),
        "anchor": 1e3 * (t3 - t2),
        "regression": 1e3 * (t4 - t3),
        "total": 1e3 * (t4 - t0),
    }
    return CropPrediction(rect_orig, anchor_orig, coeffs, out.map.data, scale, timing)


@dataclass(frozen=True)
class EvalRecord:
    id: str
    iou: float
    bde: float
    predicted: Rect
    ground_truth: Rect


@dataclass
class EvalReport:
    records: list[EvalRecord]
    seconds_per_image: float
    skipped: list[str] = field(default_factory=list)

    @property
    def mean_iou(self) -> float:
        return float(np.mean([r.iou for r in self.records])) if self.records else float("nan")

    @property
    def mean_bde(self) -> float:
        return float(np.mean([r.bde for r in self.records])) if self.records else float("nan")

    def summary(self) -> str:
        return f"mean_iou={self.mean_iou:.6f} mean_bde={self.mean_bde:.6f}"


def evaluate(
    params: ModelParams | None,
    data: Sequence[SyntheticSample],
    sigma: float = DEFAULT_SIGMA,
    gamma: float = DEFAULT_GAMMA,
    target_size: int | None = None,
    predictor: Callable[[SyntheticSample], Rect] | None = None,
    use_anchor: bool = False,
) -> EvalReport:
    """Score predictions against each sample's ``gt_crop``.

    ``predictor`` replaces the network (e.g. an oracle); ``use_anchor`` scores
    the anchor rectangle instead of the regressed crop.
    """
    config = ModelConfig.from_params(params) if predictor is None else None
    records, skipped = [], []
    elapsed = 0.0
    for sample in sorted(data, key=lambda s: s.id):
        if sample.gt_crop is None:
            skipped.append(sample.id)
            continue
        h, w = sample.image.shape[:2]
        t0 = time.perf_counter()
        if predictor is not None:
            rect = predictor(sample)
        else:
            pred = predict_crop(params, sample.image, sigma, gamma, target_size, config)
            rect = pred.anchor if use_anchor else pred.rect
        elapsed += time.perf_counter() - t0
        records.append(EvalRecord(sample.id, iou(rect, sample.gt_crop), bde(rect, sample.gt_crop, w, h), rect, sample.gt_crop))
    if skipped:
        logger.warning("no ground-truth crop for %d sample(s): %s", len(skipped), ", ".join(skipped))
    per_image = elapsed / len(records) if records else 0.0
    return EvalReport(records, per_image, skipped)
