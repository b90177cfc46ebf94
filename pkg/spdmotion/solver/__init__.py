from .build import (
    RiemannianSGD,
    build_lr_scheduler,
    build_optimizer,
    stiefel_project,
    stiefel_retract,
    stiefel_step,
)
from .lr_scheduler import WarmupCosineLR, WarmupMultiStepLR
