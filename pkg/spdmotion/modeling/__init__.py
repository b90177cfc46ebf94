from .gallery import Gallery, build_gallery, knn_classify, knn_classify_batch
from .layers import ForwardStageError, PartConv, SPDCNet, StiefelParameter, st_ga_forward, ts_ga_forward
from .meta_arch import META_ARCH_REGISTRY, SpdSiameseNetwork, build_model, contrastive_loss
from .spd import (
    eigen_diagnostics,
    exp_eig,
    gaussian_aggregate,
    is_spd,
    log_eig,
    re_eig,
    reset_eigen_diagnostics,
    spdc_transform,
    vec_map,
)
