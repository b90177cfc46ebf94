from .model_checkpoint import (
    MODEL_FORMAT_VERSION,
    ChecksumError,
    ModelFormatError,
    SpdCheckpointer,
    load_model,
    save_model,
)

__all__ = [k for k in globals().keys() if not k.startswith("_")]
