import logging
import os
import sys
from typing import Optional

import torch

from spdmotion.config import get_cfg, set_global_cfg
from spdmotion.data import SyntheticSpec, gen_synthetic, load_sequence, load_stream_dir, save_stream
from spdmotion.data.build import SEQUENCE_SUFFIX
from spdmotion.data.io import iter_frames, read_sequence_header
from spdmotion.engine import default_argument_parser, default_setup
from spdmotion.evaluation import verify_results
from spdmotion.evaluation.evaluator import EVENTS_SUFFIX, evaluate_event_logs
from spdmotion.evaluation.sweep import run_sweep, sweep_acceptance, write_sweep_csv
from spdmotion.online import (
    ConfigError,
    DetectorModel,
    EventLogWriter,
    MotionClassifier,
    OnlineConfig,
    OnlineEngine,
    detection_accuracy,
    replay_sequence,
    train_classifier,
    train_detector,
)
from spdmotion.utils import setup_logger

# Determinism
torch.set_default_dtype(torch.float64)
torch.use_deterministic_algorithms(True, warn_only=True)

logger = logging.getLogger("spdmotion")


def setup(args):
    cfg = get_cfg()
    if args.config_file:
        cfg.merge_from_file(args.config_file)
    if args.opts:
        cfg.merge_from_list(args.opts)
    if args.seed is not None:
        cfg.SEED = args.seed
    if args.command == "train-detector":
        if args.ws is not None:
            cfg.DETECTOR.WINDOW_SIZE = args.ws
        if args.mode is not None:
            cfg.DETECTOR.MODE = args.mode
    cfg.freeze()
    set_global_cfg(cfg)
    default_setup(cfg, args)
    return cfg


def gen_synth(args):
    setup_logger()
    spec = SyntheticSpec(
        num_classes=args.classes,
        layout=args.layout,
        capture_rate=args.capture_rate,
        seed=args.seed,
    )
    if args.noise is not None:
        spec.noise = args.noise
    if args.zero_gap:
        spec.idle_seconds = (0.0, 0.0)
    spec.validate()
    for i in range(args.num_streams):
        save_stream(args.out, i, *gen_synthetic(spec, i))
    logger.info("Wrote {} synthetic streams to {}".format(args.num_streams, args.out))
    return 0


def train(args, cfg):
    streams = load_stream_dir(args.data)
    if args.command == "train-classifier":
        model = train_classifier(cfg, streams, resume=args.resume)
    else:
        model = train_detector(cfg, streams, resume=args.resume)
    model.save(args.out)
    logger.info("Saved {} to {}".format(type(model).__name__, args.out))
    return 0


def _load(path, model_cls):
    model = model_cls.load(path)
    logger.info("Loaded {} from {}".format(type(model).__name__, path))
    return model


def online_config(args, cfg, detector: Optional[DetectorModel] = None) -> OnlineConfig:
    """
    Engine settings from --online-config or the config file, then the flags.
    Without a detector the window-size checks wait until it is loaded.
    """
    if args.online_config:
        config = OnlineConfig.from_json(args.online_config)
        config = config.replace(**{
            k: v for k, v in dict(
                ws=args.ws, r=args.refresh, te=args.tests, cr=args.capture_rate
            ).items() if v is not None
        })
    else:
        config = OnlineConfig.from_cfg(
            cfg,
            ws=args.ws if args.ws is not None else _window_size(cfg, detector),
            r=args.refresh,
            te=args.tests,
            cr=args.capture_rate,
        )
    if args.early:
        deadline = args.deadline if args.deadline is not None else config.deadline
        if deadline is None:
            raise ConfigError("early classification needs a deadline (--deadline or ONLINE.DEADLINE)")
        config = config.replace(deadline=deadline)
    else:
        config = config.replace(deadline=None)
    if args.live:
        config = config.replace(clock="live")
    return config.validate(window=detector is not None or args.ws is not None)


def _window_size(cfg, detector):
    return cfg.DETECTOR.WINDOW_SIZE if detector is None else detector.window_size


def run_live(engine: OnlineEngine, writer: EventLogWriter, stream=sys.stdin):
    capture_rate, layout = read_sequence_header(stream.readline())
    if abs(capture_rate - engine.config.cr) > 1e-9:
        raise ConfigError(
            "cr == stream capture rate violated: cr={}, stream at {}".format(engine.config.cr, capture_rate)
        )
    for _, frame in iter_frames(stream, layout.joint_count):
        writer.write_all(engine.push(frame))
    writer.write_all(engine.finalize())


def run_online(args, cfg):
    online_config(args, cfg)
    detector = _load(args.detector, DetectorModel)
    classifier = _load(args.model, MotionClassifier)
    config = online_config(args, cfg, detector)
    engine = OnlineEngine(detector, classifier, config)
    logger.info("Online engine: {}".format(config.to_json()))

    if args.live:
        with EventLogWriter(args.out or sys.stdout) as writer:
            run_live(engine, writer)
        logger.info("Summary: {}".format(engine.summary()))
        return 0
    if not args.input:
        raise ValueError("run-online needs --input or --live")

    if os.path.isdir(args.input):
        # one event log per stream, named after the sequence file
        if not args.out:
            raise ValueError("replaying a directory needs --out DIR")
        os.makedirs(args.out, exist_ok=True)
        inputs = sorted(
            os.path.join(args.input, f) for f in os.listdir(args.input) if f.endswith(SEQUENCE_SUFFIX)
        )
        if not inputs:
            raise FileNotFoundError("no sequence files found in '{}'".format(args.input))
        outputs = [
            os.path.join(args.out, os.path.basename(p)[: -len(SEQUENCE_SUFFIX)] + EVENTS_SUFFIX)
            for p in inputs
        ]
    else:
        inputs, outputs = [args.input], [args.out or sys.stdout]

    for seq_file, out in zip(inputs, outputs):
        engine.reset()
        with EventLogWriter(out) as writer:
            replay_sequence(engine, load_sequence(seq_file), sink=writer.write)
        logger.info("{}: {}".format(seq_file, engine.summary()))
    return 0


def evaluate(args, cfg):
    accuracy = None
    if args.detector:
        detector = _load(args.detector, DetectorModel)
        accuracy = detection_accuracy(
            detector,
            load_stream_dir(args.data),
            cfg.EVAL.DETECTION_WINDOWS_PER_SEQUENCE,
            seed=max(cfg.SEED, 0),
        )
    report = evaluate_event_logs(args.events, args.data, cfg.EVAL.IOU_THRESHOLD, accuracy)
    if args.out:
        report.save(args.out)
        logger.info("Metrics report saved to {}".format(args.out))
    return 0 if verify_results(cfg, {"online": report.scores()}) else 1


def sweep(args, cfg):
    base = OnlineConfig.from_cfg(cfg, r=args.refresh, cr=args.capture_rate).replace(deadline=None)
    base.validate(window=False)
    detectors = [_load(p, DetectorModel) for p in args.detectors]
    classifier = _load(args.model, MotionClassifier)
    streams = load_stream_dir(args.data)
    tests = args.tests or [cfg.ONLINE.TESTS]
    deadlines = [d if d > 0 else None for d in (args.deadlines or [0.0])]
    accuracies = None
    if cfg.EVAL.DETECTION_WINDOWS_PER_SEQUENCE > 0:
        accuracies = [
            detection_accuracy(d, streams, cfg.EVAL.DETECTION_WINDOWS_PER_SEQUENCE, seed=max(cfg.SEED, 0))
            for d in detectors
        ]
    rows = run_sweep(
        detectors, classifier, streams, base, tests, deadlines, cfg.EVAL.IOU_THRESHOLD, accuracies
    )
    write_sweep_csv(rows, args.out)
    logger.info("Sweep written to {}".format(args.out))
    if args.check:
        return 0 if all(sweep_acceptance(rows, base.cr).values()) else 1
    return 0


COMMANDS = {
    "train-classifier": train,
    "train-detector": train,
    "run-online": run_online,
    "evaluate": evaluate,
    "sweep": sweep,
}


def main(args):
    if args.command == "gen-synth":
        return gen_synth(args)
    cfg = setup(args)
    return COMMANDS[args.command](args, cfg)


if __name__ == "__main__":
    args = default_argument_parser().parse_args()
    try:
        code = main(args)
    except Exception as e:
        print("error: {}: {}".format(type(e).__name__, e), file=sys.stderr)
        code = 2
    sys.exit(code)
