import json

import pytest
import yaml

from callscat.cli import build_parser, main
from callscat.config import PipelineConfig, describe_keys, load_config
from callscat.errors import ValidationError


def test_defaults_validate_and_round_trip(tmp_path):
    cfg = PipelineConfig()
    cfg.validate()
    cfg.dump(tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg
    assert PipelineConfig.from_dict(cfg.to_dict()).digest() == cfg.digest()


def test_file_keys_and_overrides(tmp_path):
    (tmp_path / "c.yaml").write_text("seed: 4\nscattering:\n  T: 8192\n")
    cfg = load_config(tmp_path / "c.yaml", ["classifier.C_grid=[1, 2]", "run.scheme=seg-mfcc"])
    assert cfg.seed == 4 and cfg.scattering.T == 8192
    assert cfg.classifier.C_grid == (1.0, 2.0) and cfg.run.scheme == "seg-mfcc"
    assert cfg.digest() != PipelineConfig().digest()


def test_run_dir_does_not_change_digest():
    a = PipelineConfig()
    assert a.with_overrides(["run.run_dir=elsewhere"]).digest() == a.digest()


@pytest.mark.parametrize("override, field", [
    ("scattering.T=1000", "scattering.T"),
    ("features.context=4", "features.context"),
    ("run.scheme=nope", "run.scheme"),
    ("evaluation.event_mode=fuzzy", "evaluation.event_mode"),
    ("classifier.gamma_grid=[]", "classifier.gamma_grid"),
    ("scattering.Q1=two", "scattering.Q1"),
    ("nosuch.key=1", "nosuch.key"),
])
def test_invalid_values_name_the_field(override, field):
    with pytest.raises(ValidationError, match=field.replace(".", r"\.")):
        PipelineConfig().with_overrides([override])


def test_unknown_file_key(tmp_path):
    (tmp_path / "c.yaml").write_text("detection:\n  bogus: 1\n")
    with pytest.raises(ValidationError, match="detection.bogus"):
        load_config(tmp_path / "c.yaml")
    (tmp_path / "v.yaml").write_text("version: 9\n")
    with pytest.raises(ValidationError, match="version"):
        load_config(tmp_path / "v.yaml")


def test_help_lists_every_key(capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for line in describe_keys().splitlines():
        assert line.split("=")[0].strip() in out


def _synth(out, *extra):
    return main(["synth", "--out-dir", str(out), "-q", "--set", "synth.n_calls=4", *extra])


def test_synth_is_byte_identical(tmp_path):
    assert _synth(tmp_path / "a") == 0 and _synth(tmp_path / "b") == 0
    for name in ("subject.wav", "subject.csv", "manifest.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "subject.csv").read_text().splitlines()
    assert len(rows) == 5                  # header + one row per call


def test_exit_codes(tmp_path, capsys):
    assert main(["detect", str(tmp_path / "missing.wav"), "--out-dir", str(tmp_path), "-q"]) == 2
    assert _synth(tmp_path / "x", "--set", "synth.p_pleasure=3") == 1
    assert "synth.p_pleasure" in capsys.readouterr().err
    assert _synth(tmp_path / "one") == 0
    # one subject cannot be split leave-one-subject-out
    assert main(["run", str(tmp_path / "one" / "manifest.csv"), "--run-dir", str(tmp_path / "r"), "-q"]) == 1


def test_detect_silence_gives_empty_csvs(tmp_path):
    import numpy as np
    from callscat.signal_io import AudioClip, save_audio
    save_audio(tmp_path / "s.wav", AudioClip(np.zeros(44100), 44100))
    assert main(["detect", str(tmp_path / "s.wav"), "--out-dir", str(tmp_path / "d"), "-q", "--emit-plots"]) == 0
    assert (tmp_path / "d" / "onsets.csv").read_text() == "onset\n"
    assert (tmp_path / "d" / "segments.csv").read_text() == "start,end\n"
    assert (tmp_path / "d" / "envelope.csv").exists()


def test_detect_on_synthetic_file(tmp_path):
    from callscat.evaluation import match_onsets
    from callscat.signal_io import load_annotations
    assert _synth(tmp_path, "--set", "synth.n_calls=10") == 0
    assert main(["detect", str(tmp_path / "subject.wav"), "--out-dir", str(tmp_path / "d"), "-q"]) == 0
    onsets = [float(v) for v in (tmp_path / "d" / "onsets.csv").read_text().split()[1:]]
    ref = [e.onset for e in load_annotations(tmp_path / "subject.csv").events]
    assert match_onsets(ref, onsets).f_measure >= 0.95


def test_evaluate_command(tmp_path, capsys):
    assert _synth(tmp_path) == 0
    ann = str(tmp_path / "subject.csv")
    assert main(["evaluate", ann, ann, "--json", "-q"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["overall"]["macro_event"]["f_measure"] == 1.0


def test_config_file_option(tmp_path):
    (tmp_path / "c.yaml").write_text(yaml.safe_dump({"synth": {"n_calls": 2}}))
    assert main(["synth", "--out-dir", str(tmp_path / "o"), "--config", str(tmp_path / "c.yaml"), "-q"]) == 0
    assert len((tmp_path / "o" / "subject.csv").read_text().splitlines()) == 3
