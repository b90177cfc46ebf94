import json
import logging
import os
import time

from fvcore.common.checkpoint import PeriodicCheckpointer as _PeriodicCheckpointer
from fvcore.common.file_io import PathManager
from fvcore.common.timer import Timer

from spdmotion.evaluation.testing import flatten_results_dict

from .train_loop import HookBase

__all__ = [
    "IterationTimer",
    "LRScheduler",
    "PeriodicCheckpointer",
    "PeriodicWriter",
    "EvalHook",
]


class IterationTimer(HookBase):
    """
    Track the time spent for each iteration (each run_step call in the trainer)
    and print a summary at the end of training.
    """

    def __init__(self, warmup_iter=3):
        self._warmup_iter = warmup_iter
        self._step_timer = Timer()
        self._start_time = time.perf_counter()
        self._total_timer = Timer()

    def before_train(self):
        self._start_time = time.perf_counter()
        self._total_timer.reset()
        self._total_timer.pause()

    def after_train(self):
        logger = logging.getLogger(__name__)
        total_time = time.perf_counter() - self._start_time
        total_time_minus_hooks = self._total_timer.seconds()
        hook_time = total_time - total_time_minus_hooks

        num_iter = self.trainer.iter + 1 - self.trainer.start_iter - self._warmup_iter
        if num_iter > 0 and total_time_minus_hooks > 0:
            logger.info(
                "Overall training speed: {} iterations in {:.1f}s ({:.4f} s / it)".format(
                    num_iter, total_time_minus_hooks, total_time_minus_hooks / num_iter
                )
            )
        logger.info("Total training time: {:.1f}s ({:.1f}s on hooks)".format(total_time, hook_time))

    def before_step(self):
        self._step_timer.reset()
        self._total_timer.resume()

    def after_step(self):
        # +1 because we're in after_step
        iter_done = self.trainer.iter - self.trainer.start_iter + 1
        if iter_done >= self._warmup_iter:
            sec = self._step_timer.seconds()
            self.trainer.storage.put_scalars(time=sec)
        else:
            self._start_time = time.perf_counter()
            self._total_timer.reset()
        self._total_timer.pause()


class LRScheduler(HookBase):
    """
    Record the lr of the first Euclidean param group, then step the scheduler.
    """

    def __init__(self, optimizer, scheduler):
        self._optimizer = optimizer
        self._scheduler = scheduler
        self._group = next(
            (k for k, g in enumerate(optimizer.param_groups) if not g.get("stiefel", False)), 0
        )

    def after_step(self):
        lr = self._optimizer.param_groups[self._group]["lr"]
        self.trainer.storage.put_scalar("lr", lr, smoothing_hint=False)
        self._scheduler.step()


class PeriodicCheckpointer(_PeriodicCheckpointer, HookBase):
    """
    fvcore's PeriodicCheckpointer run as a hook. A period of 0 saves only the
    final model.
    """

    def __init__(self, checkpointer, period, max_iter=None, **kwargs):
        if period <= 0:
            assert max_iter, "max_iter is required when the checkpoint period is 0"
            period = max_iter
        super().__init__(checkpointer, period, max_iter=max_iter, **kwargs)

    def before_train(self):
        self.max_iter = self.trainer.max_iter

    def after_step(self):
        self.step(self.trainer.iter)


class PeriodicWriter(HookBase):
    """
    Write events to EventStorage periodically and after the last iteration.
    """

    def __init__(self, writers, period=20):
        self._writers = writers
        self._period = period

    def after_step(self):
        if (self.trainer.iter + 1) % self._period == 0 or (
            self.trainer.iter == self.trainer.max_iter - 1
        ):
            for writer in self._writers:
                writer.write()

    def after_train(self):
        for writer in self._writers:
            writer.close()


class EvalHook(HookBase):
    """
    Run an evaluation function periodically, and at the end of training.
    It is executed every ``eval_period`` iterations and after the last iteration.
    """

    def __init__(self, eval_period, eval_function, cfg):
        """
        Args:
            eval_period (int): the period to run `eval_function`. Set to 0 to
                not evaluate periodically (but still after the last iteration).
            eval_function (callable): a function which takes no arguments, and
                returns a nested dict of evaluation metrics.
            cfg: config
        """
        self._period = eval_period
        self._func = eval_function
        self.cfg = cfg

    def _do_eval(self):
        results = self._func()
        if not results:
            return
        assert isinstance(results, dict), "Eval function must return a dict. Got {} instead.".format(
            results
        )

        flattened_results = flatten_results_dict(results)
        for k, v in flattened_results.items():
            try:
                v = float(v)
            except Exception as e:
                raise ValueError(
                    "[EvalHook] eval_function should return a nested dict of float. "
                    "Got '{}: {}' instead.".format(k, v)
                ) from e
        self.trainer.storage.put_scalars(**flattened_results, smoothing_hint=False)

        if self.cfg.OUTPUT_DIR:
            is_final = self.trainer.iter + 1 >= self.trainer.max_iter
            inference_dir = os.path.join(self.cfg.OUTPUT_DIR, "inference")
            PathManager.mkdirs(inference_dir)
            output_file = "res_final.json" if is_final else "iter_{:07d}.json".format(self.trainer.iter)
            with PathManager.open(os.path.join(inference_dir, output_file), "w") as fp:
                json.dump(results, fp, sort_keys=True)

    def after_step(self):
        next_iter = self.trainer.iter + 1
        if self._period > 0 and next_iter % self._period == 0 and next_iter < self.trainer.max_iter:
            self._do_eval()

    def after_train(self):
        # skip after a failed run
        if self.trainer.iter + 1 >= self.trainer.max_iter:
            self._do_eval()
        # func is likely a closure that holds reference to the trainer
        del self._func
