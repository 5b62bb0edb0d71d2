"""cookstate: cooking-state image classification built from first principles.

A self-contained numpy training stack for an Inception-style convolutional
classifier: tensor kernels with manual backprop, the full backbone plus a
small custom head, three first-order optimizers, a deterministic data
pipeline with affine augmentation, an early-stopping training loop with
best-weight checkpoints, and confusion-matrix/classification-report
evaluation. Every numerical component is covered by an independent oracle
in the test suite.
"""

from .augment import AugmentConfig
from .estimator import InceptionClassifier
from .graph import LayerGraph
from .inception import HeadConfig, build_inception_v3, build_mini_inception, reconciled_head
from .optim import AdamConfig, RmspropConfig, ScheduleSpec, SgdConfig
from .rng import Rng
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "AdamConfig",
    "HeadConfig",
    "InceptionClassifier",
    "LayerGraph",
    "RmspropConfig",
    "Rng",
    "ScheduleSpec",
    "SgdConfig",
    "TrainConfig",
    "build_inception_v3",
    "build_mini_inception",
    "reconciled_head",
    "train",
    "__version__",
]
