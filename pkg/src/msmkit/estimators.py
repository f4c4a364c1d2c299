"""Scikit-learn style estimator facades over the functional core.

``MsmScorer.fit(X)`` trains the identity backbone on clean images and
``score_samples(X)`` returns per-image quality scores, so the metric plugs
into sklearn pipelines and model-selection tooling via ``get_params``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .backbone import BackboneConfig, TrainingHyper, build_backbone, train_identity
from .imaging import ImageGrid
from .metrics import DifferenceMeasure, measure_difference


def _as_grids(X) -> list[ImageGrid]:
    """Accept a list of ImageGrid or an (n, h, w) array."""
    if isinstance(X, np.ndarray):
        if X.ndim != 3:
            raise ValueError(f"expected (n, h, w) array, got shape {X.shape}")
        return [ImageGrid(X[i]) for i in range(X.shape[0])]
    grids = list(X)
    if not all(isinstance(g, ImageGrid) for g in grids):
        raise ValueError("X must be an (n, h, w) array or a list of ImageGrid")
    return grids


class IdentityRestorer(BaseEstimator):
    """Restoration backbone trained to reproduce clean inputs.

    Parameters mirror the backbone/training configuration; ``predict``
    maps images through the trained network.
    """

    def __init__(self, arch="unet", loss="l2", depth=3, base_channels=32,
                 embed_dim=32, window_size=8, heads=4, n_blocks=4,
                 batch_size=10, epochs=200, lr=1e-3, lr_decay=0.99, seed=0):
        self.arch = arch
        self.loss = loss
        self.depth = depth
        self.base_channels = base_channels
        self.embed_dim = embed_dim
        self.window_size = window_size
        self.heads = heads
        self.n_blocks = n_blocks
        self.batch_size = batch_size
        self.epochs = epochs
        self.lr = lr
        self.lr_decay = lr_decay
        self.seed = seed

    def _config(self) -> BackboneConfig:
        return BackboneConfig(arch=self.arch, depth=self.depth,
                              base_channels=self.base_channels, embed_dim=self.embed_dim,
                              window_size=self.window_size, heads=self.heads,
                              n_blocks=self.n_blocks)

    def _hyper(self) -> TrainingHyper:
        return TrainingHyper(batch_size=self.batch_size, epochs=self.epochs,
                             lr=self.lr, lr_decay=self.lr_decay, seed=self.seed)

    def fit(self, X, y=None):
        grids = _as_grids(X)
        model = build_backbone(self._config(), seed=self.seed)
        self.backbone_ = train_identity(model, grids, self.loss, self._hyper())
        return self

    def predict(self, X):
        self._check_fitted()
        return [self.backbone_.predict(g) for g in _as_grids(X)]

    def _check_fitted(self):
        if not hasattr(self, "backbone_"):
            raise RuntimeError("estimator is not fitted; call fit() first")


class MsmScorer(IdentityRestorer):
    """No-reference quality scorer: input-vs-prediction discrepancy.

    ``measure`` selects l1 | l2 | s_psnr | s_ssim; the ``orientation_``
    attribute tells consumers whether higher scores mean better quality.
    """

    def __init__(self, arch="unet", loss="perceptual", measure="l2", depth=3,
                 base_channels=32, embed_dim=32, window_size=8, heads=4, n_blocks=4,
                 batch_size=10, epochs=200, lr=1e-3, lr_decay=0.99, seed=0):
        super().__init__(arch=arch, loss=loss, depth=depth, base_channels=base_channels,
                         embed_dim=embed_dim, window_size=window_size, heads=heads,
                         n_blocks=n_blocks, batch_size=batch_size, epochs=epochs,
                         lr=lr, lr_decay=lr_decay, seed=seed)
        self.measure = measure

    def fit(self, X, y=None):
        super().fit(X)
        self.orientation_ = (
            "higher_is_better" if DifferenceMeasure(self.measure).higher_is_better
            else "lower_is_better")
        return self

    def score_samples(self, X) -> np.ndarray:
        self._check_fitted()
        m = DifferenceMeasure(self.measure)
        return np.array([
            measure_difference(g, self.backbone_.predict(g), m) for g in _as_grids(X)
        ])
