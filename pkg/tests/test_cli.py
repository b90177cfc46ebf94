import io
import json
import os
from types import SimpleNamespace

import pytest
from conftest import SMALL_LAYOUT, RecordingClassifier, ScriptedDetector, indexed_frames

import main
from spdmotion.config import get_cfg
from spdmotion.data import SkeletonSequence, load_stream_dir, save_sequence
from spdmotion.engine import default_argument_parser
from spdmotion.online import ConfigError, EventLogWriter, OnlineConfig, OnlineEngine, replay_sequence


def parse(argv):
    return default_argument_parser().parse_args(argv)


def test_parser():
    args = parse(["gen-synth", "--out", "data"])
    assert (args.command, args.num_streams, args.classes, args.layout) == ("gen-synth", 20, 4, "body25")

    args = parse(["run-online", "--detector", "d.spdm", "--model", "m.spdm", "--early", "--deadline", "1.5"])
    assert args.early and args.deadline == 1.5 and not args.live
    assert args.ws is None and args.refresh is None

    args = parse(["sweep", "--detectors", "a", "b", "--model", "m", "--data", "d", "--out", "s.csv",
                  "--tests", "1", "3", "--opts", "SEED", "4"])
    assert args.detectors == ["a", "b"] and args.tests == [1, 3]
    assert args.opts == ["SEED", "4"]

    with pytest.raises(SystemExit):
        parse([])
    with pytest.raises(SystemExit):
        parse(["train-detector", "--data", "d", "--out", "o", "--mode", "ternary"])


def test_gen_synth(tmp_path):
    outs = [str(tmp_path / "a"), str(tmp_path / "b")]
    for out in outs:
        assert main.main(parse(["gen-synth", "--out", out, "--num-streams", "2", "--classes", "2"])) == 0
    streams = load_stream_dir(outs[0])
    assert len(streams) == 2
    for seq, annotations in streams:
        assert seq.layout.name == "body25" and seq.capture_rate == 30.0
        assert annotations.total_frames == len(seq)
        assert annotations.classes == ["motion_0", "motion_1"]
    # the same seed writes the same files
    for name in sorted(os.listdir(outs[0])):
        with open(os.path.join(outs[0], name)) as a, open(os.path.join(outs[1], name)) as b:
            assert a.read() == b.read()


def online_args(*argv):
    return parse(["run-online", "--detector", "d", "--model", "m"] + list(argv))


DETECTOR = SimpleNamespace(window_size=21)


def test_online_config_from_cfg():
    config = main.online_config(online_args(), get_cfg(), DETECTOR)
    assert (config.ws, config.r, config.te, config.cr) == (21, 6, 3, 30.0)
    assert config.deadline is None and config.clock == "replay"

    config = main.online_config(online_args("--early", "--deadline", "1.0", "--live"), get_cfg(), DETECTOR)
    assert config.deadline == 1.0 and config.clock == "live"


def test_online_config_errors():
    with pytest.raises(ConfigError, match="needs a deadline"):
        main.online_config(online_args("--early"), get_cfg(), DETECTOR)
    with pytest.raises(ConfigError, match=r"r <= 0\.3\*cr"):
        main.online_config(online_args("--refresh", "10"), get_cfg(), DETECTOR)


def test_online_config_file_with_overrides(tmp_path):
    path = tmp_path / "online.json"
    path.write_text(OnlineConfig(ws=21, r=6, te=3, cr=30.0, deadline=2.0).to_json())
    config = main.online_config(online_args("--online-config", str(path), "--tests", "5"), get_cfg(), DETECTOR)
    assert config.te == 5
    # the deadline only applies with --early
    assert config.deadline is None

    config = main.online_config(
        online_args("--online-config", str(path), "--early"), get_cfg(), DETECTOR
    )
    assert config.deadline == 2.0


def engine_pair():
    def make():
        config = OnlineConfig(ws=12, r=6, te=3, cr=30.0)
        detector = ScriptedDetector(lambda end: 1 if 30 <= end <= 60 else 0, 12)
        return OnlineEngine(detector, RecordingClassifier(label=1), config)

    return make(), make()


def test_live_input_matches_replay(tmp_path):
    seq = SkeletonSequence(indexed_frames(90), 30.0, SMALL_LAYOUT)
    path = str(tmp_path / "take.seq.jsonl")
    save_sequence(seq, path)

    live, replay = engine_pair()
    out = io.StringIO()
    with open(path) as stream:
        main.run_live(live, EventLogWriter(out), stream=stream)
    expected = [e.to_json() for e in replay_sequence(replay, seq)]
    assert out.getvalue().splitlines() == expected
    assert any(json.loads(line)["kind"] == "motion_recognized" for line in expected)


def test_live_input_capture_rate_mismatch(tmp_path):
    path = str(tmp_path / "take.seq.jsonl")
    save_sequence(SkeletonSequence(indexed_frames(20), 25.0, SMALL_LAYOUT), path)
    live, _ = engine_pair()
    with open(path) as stream, pytest.raises(ConfigError, match="capture rate"):
        main.run_live(live, EventLogWriter(io.StringIO()), stream=stream)


def test_flag_violations_are_rejected_before_loading_models(tmp_path):
    missing = str(tmp_path / "missing.spdm")
    args = parse(["run-online", "--detector", missing, "--model", missing, "--refresh", "10"])
    with pytest.raises(ConfigError, match=r"r <= 0\.3\*cr"):
        main.run_online(args, get_cfg())
    args = parse(["run-online", "--detector", missing, "--model", missing, "--early"])
    with pytest.raises(ConfigError, match="needs a deadline"):
        main.run_online(args, get_cfg())

    args = parse(["sweep", "--detectors", missing, "--model", missing, "--data", str(tmp_path),
                  "--out", str(tmp_path / "s.csv"), "--refresh", "10", "--check"])
    assert args.check
    with pytest.raises(ConfigError, match=r"r <= 0\.3\*cr"):
        main.sweep(args, get_cfg())


def test_window_checks_wait_for_the_detector():
    # the configured window size is not checked until the detector is known
    cfg = get_cfg()
    cfg.DETECTOR.WINDOW_SIZE = 1
    config = main.online_config(online_args(), cfg)
    assert config.ws == 1
    with pytest.raises(ConfigError, match="ws >= 2"):
        main.online_config(online_args("--ws", "1"), cfg)
