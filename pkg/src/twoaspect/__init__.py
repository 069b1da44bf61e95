"""Two-aspect multi-task affect model: ROI attention features, two-perspective
transformer interaction with per-task queries, trainable temporal smoothing,
and joint AU / expression / valence-arousal objectives, on a numpy autodiff core.
"""

from .model import ModelConfig, ModelOutput, TwoAspectModel
from .objectives import MetricReport

__version__ = "0.1.0"

__all__ = ["MetricReport", "ModelConfig", "ModelOutput", "TwoAspectModel", "__version__"]
