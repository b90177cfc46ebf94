import datetime
import json
import logging

import torch
from fvcore.common.file_io import PathManager

from spdmotion.modeling.spd import eigen_diagnostics

from .train_loop import get_event_storage

__all__ = ["EventWriter", "JSONWriter", "CommonMetricPrinter"]


class EventWriter:
    """
    Base class for writers that obtain events from :class:`EventStorage` and process them.
    """

    def write(self):
        raise NotImplementedError

    def close(self):
        pass


class JSONWriter(EventWriter):
    """
    Write the latest scalars to a json file, one line per iteration:

    .. code-block:: none

        {"iteration": 19, "lr": 0.0095, "loss_contrastive": 0.4121, "time": 0.62, ...}
    """

    def __init__(self, json_file, window_size=20):
        self._file_handle = PathManager.open(json_file, "a")
        self._window_size = window_size

    def write(self):
        storage = get_event_storage()
        to_save = {"iteration": storage.iter}
        to_save.update({k: v for k, (v, _) in storage.latest_with_smoothing_hint(self._window_size).items()})
        self._file_handle.write(json.dumps(to_save, sort_keys=True) + "\n")
        self._file_handle.flush()

    def close(self):
        self._file_handle.close()


class CommonMetricPrinter(EventWriter):
    """
    Print losses, lr, timing and the eigengap diagnostic counter to the terminal.
    """

    def __init__(self, max_iter):
        self.logger = logging.getLogger(__name__)
        self._max_iter = max_iter

    def write(self):
        storage = get_event_storage()
        iteration = storage.iter

        try:
            data_time = "{:.4f}".format(storage.history("data_time").avg(20))
        except KeyError:
            data_time = "N/A"

        eta_string = "N/A"
        try:
            iter_time = storage.history("time").global_avg()
            eta_seconds = storage.history("time").median(1000) * (self._max_iter - iteration - 1)
            storage.put_scalar("eta_seconds", eta_seconds, smoothing_hint=False)
            eta_string = str(datetime.timedelta(seconds=int(eta_seconds)))
        except KeyError:
            iter_time = None

        try:
            lr = "{:.6f}".format(storage.history("lr").latest())
        except KeyError:
            lr = "N/A"

        degenerate = eigen_diagnostics()["degenerate_eigengaps"]
        if torch.cuda.is_available():
            max_mem_mb = torch.cuda.max_memory_allocated() / 1024.0 / 1024.0
        else:
            max_mem_mb = None

        self.logger.info(
            " eta: {eta}  iter: {iter}  {losses}  {time}data_time: {data_time}  lr: {lr}  "
            "degenerate_eigengaps: {degenerate}{memory}".format(
                eta=eta_string,
                iter=iteration,
                losses="  ".join(
                    "{}: {:.4g}".format(k, v.median(20))
                    for k, v in storage.histories().items()
                    if "loss" in k
                ),
                time="time: {:.4f}  ".format(iter_time) if iter_time is not None else "",
                data_time=data_time,
                lr=lr,
                degenerate=degenerate,
                memory="  max_mem: {:.0f}M".format(max_mem_mb) if max_mem_mb is not None else "",
            )
        )
