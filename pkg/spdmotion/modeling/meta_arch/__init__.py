from .build import META_ARCH_REGISTRY, build_model
from .siamese import SpdSiameseNetwork, contrastive_loss
