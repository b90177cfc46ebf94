import argparse
import logging
import os
from collections import OrderedDict

import torch
from fvcore.common.file_io import PathManager

from spdmotion.checkpoint import SpdCheckpointer
from spdmotion.data import build_held_out_pairs, build_train_loader
from spdmotion.evaluation.testing import print_csv_format, verify_results
from spdmotion.modeling import build_model
from spdmotion.modeling.meta_arch.siamese import contrastive_loss
from spdmotion.solver import build_lr_scheduler, build_optimizer
from spdmotion.utils import seed_all_rng, setup_logger

from . import hooks
from .train_loop import PairTrainer
from .writers import CommonMetricPrinter, JSONWriter

__all__ = ["default_argument_parser", "default_setup", "SiameseTrainer"]


def _add_config_args(parser):
    parser.add_argument("--config-file", default="", metavar="FILE", help="path to config file")
    parser.add_argument("--seed", type=int, default=None, help="overrides SEED")


def _add_online_args(parser):
    parser.add_argument("--online-config", default="", metavar="FILE",
                        help="JSON engine config (ws, r, te, T, cr, ...)")
    parser.add_argument("--ws", type=int, default=None, help="window size in frames")
    parser.add_argument("--refresh", type=int, default=None, help="refresh rate r in frames")
    parser.add_argument("--tests", type=int, default=None, help="verification tests te")
    parser.add_argument("--deadline", type=float, default=None,
                        help="early-classification deadline T in seconds")
    parser.add_argument("--capture-rate", type=float, default=None, help="capture rate in fps")


def _add_opts(parser):
    parser.add_argument("--opts", default=None, nargs=argparse.REMAINDER,
                        help="Modify config options using the command-line")


def default_argument_parser():
    """
    Create the parser of the ``main.py`` sub-commands.

    Returns:
        argparse.ArgumentParser:
    """
    parser = argparse.ArgumentParser(description="SPD Siamese online motion recognition")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("gen-synth", help="generate synthetic skeleton streams")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--num-streams", type=int, default=20)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--layout", default="body25")
    p.add_argument("--capture-rate", type=float, default=30.0)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--zero-gap", action="store_true", help="back-to-back motions, no idle gaps")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train-classifier", help="train the motion classifier")
    _add_config_args(p)
    p.add_argument("--data", required=True, metavar="DIR", help="annotated training streams")
    p.add_argument("--out", required=True, metavar="FILE", help="model file to write")
    p.add_argument("--resume", action="store_true", help="resume from the last checkpoint")
    _add_opts(p)

    p = sub.add_parser("train-detector", help="train the kinetic-state detector")
    _add_config_args(p)
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--ws", type=int, default=None, help="window size in frames")
    p.add_argument("--mode", choices=("binary", "multiclass"), default=None)
    p.add_argument("--resume", action="store_true")
    _add_opts(p)

    p = sub.add_parser("run-online", help="stream a sequence through detector and classifier")
    _add_config_args(p)
    p.add_argument("--detector", required=True, metavar="FILE")
    p.add_argument("--model", required=True, metavar="FILE", help="classifier model file")
    p.add_argument("--input", default="", metavar="FILE", help="sequence file to replay")
    p.add_argument("--live", action="store_true", help="read frames from standard input")
    p.add_argument("--out", default="", metavar="FILE", help="event log (default: stdout)")
    p.add_argument("--early", action="store_true", help="enable early classification")
    _add_online_args(p)
    _add_opts(p)

    p = sub.add_parser("evaluate", help="score event logs against ground truth")
    _add_config_args(p)
    p.add_argument("--events", required=True, metavar="PATH", help="event log or directory")
    p.add_argument("--data", required=True, metavar="DIR", help="annotated ground-truth streams")
    p.add_argument("--detector", default="", metavar="FILE",
                   help="also report held-out window accuracy of this detector")
    p.add_argument("--out", default="", metavar="FILE", help="MetricsReport JSON")
    _add_opts(p)

    p = sub.add_parser("sweep", help="grid over ws / te / T")
    _add_config_args(p)
    p.add_argument("--detectors", nargs="+", required=True, metavar="FILE",
                   help="one detector model per window size")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--refresh", type=int, default=None)
    p.add_argument("--capture-rate", type=float, default=None)
    p.add_argument("--tests", type=int, nargs="+", default=None)
    p.add_argument("--deadlines", type=float, nargs="+", default=None,
                   help="deadlines in seconds; 0 means no early classification")
    p.add_argument("--out", required=True, metavar="FILE", help="CSV output")
    p.add_argument("--check", action="store_true",
                   help="exit 1 unless the ws band and deadline-shape checks pass")
    _add_opts(p)
    return parser


def default_setup(cfg, args):
    """
    Perform some basic common setups at the beginning of a job, including:

    1. Set up the spdmotion logger
    2. Log basic information about the command line arguments and the config
    3. Backup the config to the output directory
    4. Seed all RNGs

    Args:
        cfg (CfgNode): the full config to be used
        args (argparse.NameSpace): the command line arguments to be logged
    """
    output_dir = cfg.OUTPUT_DIR
    if output_dir:
        PathManager.mkdirs(output_dir)

    setup_logger(output_dir or None, name="fvcore")
    logger = setup_logger(output_dir or None)

    logger.info("Command line arguments: " + str(args))
    if getattr(args, "config_file", ""):
        logger.info(
            "Contents of args.config_file={}:\n{}".format(
                args.config_file, PathManager.open(args.config_file, "r").read()
            )
        )

    if not cfg.MUTE_HEADER:
        logger.info("Running with full config:\n{}".format(cfg))
    if output_dir:
        path = os.path.join(output_dir, "config.yaml")
        with PathManager.open(path, "w") as f:
            f.write(cfg.dump())
        logger.info("Full config saved to {}".format(os.path.abspath(path)))

    seed_all_rng(None if cfg.SEED < 0 else cfg.SEED)


class SiameseTrainer(PairTrainer):
    """
    Contrastive training of a :class:`SpdSiameseNetwork` on a preprocessed
    dataset, with the default hooks:

    1. iteration timer and LR scheduling
    2. periodic checkpoints (``SOLVER.CHECKPOINT_PERIOD``, 0 = final only)
    3. held-out contrastive loss every ``TEST.EVAL_PERIOD`` iterations and at
       the end (``inference/res_final.json``)
    4. console + ``metrics.json`` writers

    ``max_iter`` is ``SOLVER.EPOCHS`` times the number of pair batches per epoch.

    Examples:

    .. code-block:: python

        trainer = SiameseTrainer(cfg, data, labels, scheme)
        trainer.resume_or_load(resume=False)
        trainer.train()
    """

    def __init__(self, cfg, data: torch.Tensor, labels, scheme, *, meta=None):
        if cfg.SEED >= 0:
            seed_all_rng(cfg.SEED)
        model = self.build_model(cfg, scheme)
        optimizer = self.build_optimizer(cfg, model)
        data_loader = self.build_train_loader(cfg, data, labels)
        super().__init__(model, data_loader, optimizer)

        self.cfg = cfg
        self.data = data
        self.held_out = build_held_out_pairs(cfg, labels)
        self.start_iter = 0
        self.max_iter = cfg.SOLVER.EPOCHS * data_loader.batches_per_epoch
        self.scheduler = self.build_lr_scheduler(cfg, optimizer, self.max_iter)
        self.checkpointer = SpdCheckpointer(model, cfg.OUTPUT_DIR, meta=meta)

        self.register_hooks(self.build_hooks())

    def resume_or_load(self, resume=True):
        """
        If `resume==True`, and last checkpoint exists, resume from it.
        Otherwise, load the weights of ``cfg.MODEL.WEIGHTS`` if set.
        """
        # the checkpoint stores the iteration that just finished
        self.start_iter = (
            self.checkpointer.resume_or_load(self.cfg.MODEL.WEIGHTS, resume=resume).get("iteration", -1)
            + 1
        )

    def build_hooks(self):
        cfg = self.cfg
        ret = [
            hooks.IterationTimer(),
            hooks.LRScheduler(self.optimizer, self.scheduler),
            hooks.PeriodicCheckpointer(
                self.checkpointer, cfg.SOLVER.CHECKPOINT_PERIOD, max_iter=self.max_iter
            ),
        ]

        def test_and_save_results():
            self._last_eval_results = self.test()
            return self._last_eval_results

        # after the checkpointer, so a failing evaluation leaves a checkpoint behind
        ret.append(hooks.EvalHook(cfg.TEST.EVAL_PERIOD, test_and_save_results, cfg))
        ret.append(hooks.PeriodicWriter(self.build_writers()))
        return ret

    def build_writers(self):
        writers = [CommonMetricPrinter(self.max_iter)]
        if self.cfg.OUTPUT_DIR:
            PathManager.mkdirs(self.cfg.OUTPUT_DIR)
            writers.append(JSONWriter(os.path.join(self.cfg.OUTPUT_DIR, "metrics.json")))
        return writers

    def train(self):
        """
        Run training.

        Returns:
            OrderedDict of held-out results.
        """
        super().train(self.start_iter, self.max_iter)
        results = getattr(self, "_last_eval_results", None)
        if results is not None:
            verify_results(self.cfg, results)
        self.model.eval()
        return results

    @classmethod
    def build_model(cls, cfg, scheme):
        model = build_model(cfg, scheme)
        if not cfg.MUTE_HEADER:
            logger = logging.getLogger(__name__)
            logger.info("Model:\n{}".format(model))
        return model

    @classmethod
    def build_optimizer(cls, cfg, model):
        return build_optimizer(cfg, model)

    @classmethod
    def build_lr_scheduler(cls, cfg, optimizer, max_iter):
        return build_lr_scheduler(cfg, optimizer, max_iter)

    @classmethod
    def build_train_loader(cls, cfg, data, labels):
        return build_train_loader(cfg, data, labels)

    @torch.no_grad()
    def held_out_loss(self) -> float:
        if not self.held_out:
            return float("nan")
        was_training = self.model.training
        self.model.eval()
        batch = self.data_loader.collate(self.held_out)
        n = batch.first.shape[0]
        features = self.model(torch.cat([batch.first, batch.second], dim=0))
        loss = contrastive_loss(features[:n], features[n:], batch.same.to(features.device), self.model.margin)
        self.model.train(was_training)
        return float(loss)

    def test(self):
        results = OrderedDict(held_out=OrderedDict(loss_contrastive=self.held_out_loss()))
        logger = logging.getLogger(__name__)
        logger.info("Held-out pair loss at iteration {}: {:.6f}".format(
            self.iter, results["held_out"]["loss_contrastive"]))
        print_csv_format(results)
        return results
