from .env import seed_all_rng
from .logger import create_small_table, setup_logger

__all__ = ["seed_all_rng", "setup_logger", "create_small_table"]
