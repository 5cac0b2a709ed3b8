"""Aerial person-search pipeline: magnifier-lens survey collection,
search-behavior analytics, and a human-accuracy-guided box regression loss
with a desk-scale training harness."""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    Annotation,
    Box,
    CircleSelection,
    StratumKey,
    box_center,
    box_iou,
    circle_box_iou,
)
from .loss import (  # noqa: F401
    DefaultLossSpec,
    LossSample,
    PsychLossParams,
    default_loss,
    density,
    gradcheck,
    human_loss,
    human_loss_grad,
    human_penalty,
)
