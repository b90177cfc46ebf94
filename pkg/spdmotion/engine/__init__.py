from .train_loop import EventStorage, HookBase, PairTrainer, TrainerBase, get_event_storage
from .hooks import EvalHook, IterationTimer, LRScheduler, PeriodicCheckpointer, PeriodicWriter
from .defaults import SiameseTrainer, default_argument_parser, default_setup

__all__ = [k for k in globals().keys() if not k.startswith("_")]
