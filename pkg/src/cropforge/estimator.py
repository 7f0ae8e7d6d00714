"""scikit-learn style wrapper around the cropping pipeline."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .crop_layers import DEFAULT_GAMMA, DEFAULT_SIGMA
from .data import SyntheticSample
from .geometry import Rect
from .losses import iou
from .training import (
    ModelConfig,
    TrainingSchedule,
    TrainOptions,
    build_model,
    predict_crop,
    prepare_sample,
    train,
)
from .unet import UNetConfig
from .validation import check_image, check_images, check_rects, check_saliency_map


class SaliencyCropper(BaseEstimator):
    """Predict one crop rectangle per image from a saliency-anchored regression.

    ``fit(X, y, saliency=...)`` takes images (``H x W x C`` in [0, 1]),
    ground-truth crops as an ``(n, 4)`` array and per-image saliency targets.
    ``predict`` returns an ``(n, 4)`` array of crops in input-image pixels;
    ``transform`` returns the cropped images; ``score`` is the mean IoU.

    ``target_size=None`` trains and predicts at the input resolution, which
    must then be divisible by ``2 ** depth``.
    """

    def __init__(
        self,
        depth=3,
        base_channels=8,
        roi_grid=4,
        hidden=(2048, 1024),
        sigma=DEFAULT_SIGMA,
        gamma=DEFAULT_GAMMA,
        lam=1.0,
        target_size=None,
        schedule="toy",
        max_grad_norm=1000.0,
        gt_mode="crop-box",
        anchor_source="predicted",
        random_state=0,
    ):
        self.depth = depth
        self.base_channels = base_channels
        self.roi_grid = roi_grid
        self.hidden = hidden
        self.sigma = sigma
        self.gamma = gamma
        self.lam = lam
        self.target_size = target_size
        self.schedule = schedule
        self.max_grad_norm = max_grad_norm
        self.gt_mode = gt_mode
        self.anchor_source = anchor_source
        self.random_state = random_state

    def _schedule(self) -> TrainingSchedule:
        if isinstance(self.schedule, TrainingSchedule):
            return self.schedule
        if self.schedule == "toy":
            return TrainingSchedule.toy()
        if self.schedule == "standard":
            return TrainingSchedule.standard()
        raise ValueError(f"schedule must be 'toy', 'standard' or a TrainingSchedule, got {self.schedule!r}")

    def fit(self, X, y, saliency=None):
        images = check_images(X)
        crops = check_rects(y, len(images))
        if saliency is None:
            raise ValueError("fit needs per-image saliency targets (saliency=...)")
        if len(saliency) != len(images):
            raise ValueError(f"got {len(saliency)} saliency maps for {len(images)} images")
        maps = [check_saliency_map(s, im.shape[:2]) for s, im in zip(saliency, images)]

        self.config_ = ModelConfig(
            unet=UNetConfig(
                depth=self.depth,
                base_channels=self.base_channels,
                input_channels=images[0].shape[2],
                seed=self.random_state,
            ),
            roi_grid=self.roi_grid,
            hidden=tuple(self.hidden),
        )
        stride = self.config_.unet.stride
        samples = [
            prepare_sample(SyntheticSample(f"{k:05d}", im, sal, crop), self.target_size, stride)
            for k, (im, sal, crop) in enumerate(zip(images, maps, crops))
        ]
        options = TrainOptions(
            sigma=self.sigma,
            gamma=self.gamma,
            lam=self.lam,
            gt_mode=self.gt_mode,
            anchor_source=self.anchor_source,
            seed=self.random_state,
            max_grad_norm=self.max_grad_norm,
        )
        self.params_ = build_model(self.config_)
        self.params_, self.loss_log_ = train(self.params_, samples, self._schedule(), options, self.config_)
        self.n_channels_in_ = images[0].shape[2]
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("SaliencyCropper is not fitted yet; call fit first")

    def predict_details(self, X):
        self._check_fitted()
        return [
            predict_crop(self.params_, im, self.sigma, self.gamma, self.target_size, self.config_)
            for im in check_images(X, self.n_channels_in_)
        ]

    def predict(self, X) -> np.ndarray:
        return np.array([p.rect.as_array() for p in self.predict_details(X)]).reshape(-1, 4)

    def predict_saliency(self, X) -> list[np.ndarray]:
        return [p.saliency for p in self.predict_details(X)]

    def transform(self, X) -> list[np.ndarray]:
        images = check_images(X, getattr(self, "n_channels_in_", None))
        return [crop_image(im, Rect.from_array(r)) for im, r in zip(images, self.predict(images))]

    def score(self, X, y) -> float:
        rects = [Rect.from_array(r) for r in self.predict(X)]
        truth = check_rects(y, len(rects))
        return float(np.mean([iou(a, b) for a, b in zip(rects, truth)]))


def crop_image(image, rect: Rect) -> np.ndarray:
    """Integer-pixel crop covering ``rect`` (rounded outward), at least one pixel."""
    arr = check_image(image)
    h, w = arr.shape[:2]
    x0 = min(max(int(np.floor(rect.x_min)), 0), w - 1)
    y0 = min(max(int(np.floor(rect.y_min)), 0), h - 1)
    x1 = max(min(int(np.ceil(rect.x_max)), w), x0 + 1)
    y1 = max(min(int(np.ceil(rect.y_max)), h), y0 + 1)
    return arr[y0:y1, x0:x1]
