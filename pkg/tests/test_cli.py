## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import logging
import os

## third-party libraries
import pytest

## custom modules
from conftest import TINY_SETTINGS

from easyst import EasyST
from easyst.cli import main
from easyst.services.evaluation_service import EvaluationService
from easyst.util.checkpoint_util import list_checkpoints, load_checkpoint

@pytest.fixture(autouse=True)
def _detach_audit_log():
    yield
    EasyST.set_log_directory(None)

def _tiny(*skip:str) -> list[str]:

    _arguments = []

    for _key, _value in TINY_SETTINGS.items():
        if(_key not in skip):
            _arguments += ["--set", f"{_key}={_value}"]

    return _arguments

def _bytes(path) -> bytes:

    with open(path, "rb") as _file:
        return _file.read()

##-------------------start-of-test_gen_data()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_gen_data_is_reproducible(tmp_path, capsys):

    assert main(["gen-data", "--out", str(tmp_path / "a"), "--seed", "5"] + _tiny()) == 0
    assert main(["gen-data", "--out", str(tmp_path / "b"), "--seed", "5"] + _tiny()) == 0

    assert "train=24" in capsys.readouterr().out

    for _name in ("train.tsv", "train.f32", "dev.tsv", "test.f32", "text_only.tsv", "config.resolved"):
        assert _bytes(tmp_path / "a" / _name) == _bytes(tmp_path / "b" / _name)

def test_flags_beat_the_config_file(tmp_path, capsys):

    _config = tmp_path / "tiny.cfg"
    _config.write_text("# smaller splits\ntrain_size = 10\ndev_size = 4\n", encoding="utf-8")

    assert main(["gen-data", "--out", str(tmp_path / "run"), "--config", str(_config), "--set", "train_size=12"] + _tiny("train_size", "dev_size")) == 0

    _printed = capsys.readouterr().out

    assert "train=12" in _printed and "dev=4" in _printed
    assert "train_size = 12\n" in (tmp_path / "run" / "config.resolved").read_text(encoding="utf-8")

##-------------------start-of-test_usage_errors()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_existing_run_directory_is_refused(tmp_path):

    assert main(["gen-data", "--out", str(tmp_path / "run")] + _tiny()) == 0

    _marker = _bytes(tmp_path / "run" / "train.tsv")

    assert main(["gen-data", "--out", str(tmp_path / "run")] + _tiny()) == 2
    assert _bytes(tmp_path / "run" / "train.tsv") == _marker

def test_settings_errors_exit_with_two(tmp_path):

    assert main(["gen-data", "--out", str(tmp_path / "a"), "--set", "bogus_key=1"]) == 2
    assert main(["gen-data", "--out", str(tmp_path / "b"), "--set", "beam_size=wide"]) == 2
    assert main(["gen-data", "--out", str(tmp_path / "c"), "--set", "no-equals-sign"]) == 2
    assert main(["gen-data", "--out", str(tmp_path / "d"), "--config", str(tmp_path / "missing.cfg")]) == 2

    assert not any(os.path.exists(tmp_path / _name) for _name in "abcd")

def test_parser_errors_exit_with_two(tmp_path):

    assert main(["translate-everything"]) == 2
    assert main(["gen-data"]) == 2
    assert main(["train", "--out", str(tmp_path / "run"), "--scheme", "jt-everything"]) == 2

def test_missing_checkpoint_is_a_failure(tmp_path):

    assert main(["evaluate", "--out", str(tmp_path / "run"), "--checkpoints", str(tmp_path / "nothing.bmtc")] + _tiny()) == 1

##-------------------start-of-test_score()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_score_prints_bleu(tmp_path, capsys):

    EvaluationService.write_hypotheses(str(tmp_path / "h.txt"), ["a", "b"], [[4, 5, 6, 7], [8, 9, 10, 11]])
    EvaluationService.write_hypotheses(str(tmp_path / "r.txt"), ["a", "b"], [[4, 5, 6, 7], [8, 9, 10, 11]])

    assert main(["score", str(tmp_path / "h.txt"), str(tmp_path / "r.txt")]) == 0
    assert capsys.readouterr().out.strip() == "BLEU = 100.00"

##-------------------start-of-test_pipeline()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_whole_pipeline_on_a_tiny_corpus(tmp_path):

    _data = str(tmp_path / "data")
    _asr = str(tmp_path / "asr")
    _mt = str(tmp_path / "mt")
    _joint = str(tmp_path / "joint")

    assert main(["gen-data", "--out", _data] + _tiny()) == 0
    assert main(["pretrain-asr", "--out", _asr, "--data", _data] + _tiny()) == 0
    assert main(["pretrain-mt", "--out", _mt, "--data", _data, "--epochs", "2"] + _tiny("pretrain_epochs")) == 0

    assert [os.path.basename(_path) for _path in list_checkpoints(os.path.join(_mt, "checkpoints"))] == ["epoch0001.bmtc", "epoch0002.bmtc"]
    assert load_checkpoint(os.path.join(_asr, "final.bmtc")).scheme == "asr"

    _pretrained = ["--asr", os.path.join(_asr, "final.bmtc"), "--mt", os.path.join(_mt, "final.bmtc")]

    assert main(["train", "--out", _joint, "--data", _data, "--scheme", "jt-proposed", "--epochs", "2"] + _pretrained + _tiny("epochs")) == 0
    assert os.path.getsize(os.path.join(_joint, "metrics.csv")) > 0

    _checkpoints = os.path.join(_joint, "checkpoints")

    assert main(["evaluate", "--out", str(tmp_path / "eval"), "--data", _data, "--checkpoints", _checkpoints, "--task", "mt"] + _tiny()) == 0
    assert main(["average-checkpoints", "--out", str(tmp_path / "avg"), "--checkpoints", _checkpoints] + _tiny()) == 0

    assert load_checkpoint(str(tmp_path / "avg" / "averaged.bmtc")).metadata["averaged_from"] == ["epoch0001.bmtc", "epoch0002.bmtc"]

    _bleu = float((tmp_path / "eval" / "bleu.txt").read_text(encoding="utf-8"))

    assert 0.0 <= _bleu <= 100.0
    assert EvaluationService.score_files(str(tmp_path / "eval" / "hypotheses.txt"), str(tmp_path / "eval" / "references.txt")) == pytest.approx(_bleu, abs=0.005)

    assert main(["analyze-criticality", "--out", str(tmp_path / "crit"), "--data", _data, "--checkpoints", os.path.join(_joint, "final.bmtc"),
                 "--ratios", "0,1", "--selectors", "decoder.1"] + _pretrained + _tiny()) == 0

    assert len((tmp_path / "crit" / "criticality.csv").read_text(encoding="utf-8").splitlines()) == 3

    assert main(["analyze-correlation", "--out", str(tmp_path / "corr"), "--data", _data,
                 "--checkpoints", os.path.join(_joint, "final.bmtc"), str(tmp_path / "avg" / "averaged.bmtc"),
                 "--labels", "final", "averaged"] + _tiny()) == 0

    assert {"correlation-averaged.csv", "correlation-final.csv", "correlation.svg"} <= set(os.listdir(tmp_path / "corr"))


##-------------------start-of-main()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

if(__name__ == "__main__"):

    logging.basicConfig(level=logging.DEBUG,
                        filename='test_cli.log',
                        filemode='w',
                        format='[%(asctime)s] [%(levelname)s] [%(filename)s] %(message)s',
                        datefmt='%Y-%m-%d %H:%M:%S')

    console = logging.StreamHandler()
    console.setLevel(logging.INFO)
    formatter = logging.Formatter('[%(asctime)s] [%(levelname)s] [%(filename)s] %(message)s', datefmt='%Y-%m-%d %H:%M:%S')
    console.setFormatter(formatter)
    logging.getLogger('').addHandler(console)

    raise SystemExit(pytest.main([__file__, "-q"]))
