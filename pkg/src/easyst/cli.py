## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import argparse
import logging
import os
import sys
import typing

## custom modules
from .easyst import EasyST

from .classes import NOT_GIVEN
from .exceptions import EasySTException, InvalidEasySTSettingsException
from .services.evaluation_service import EvaluationService
from .util.checkpoint_util import load_checkpoint, save_checkpoint
from .util.config_util import resolve_settings, write_resolved
from .util.constants import ALLOWED_SCHEMES

LOG_FORMAT = "[%(asctime)s] [%(levelname)s] [%(filename)s] %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

## flag dest -> settings key; every one defaults to NOT_GIVEN so only passed flags override the config
_SETTING_FLAGS = {
    "seed": "seed",
    "scheme": "scheme",
    "alpha": "alpha",
    "lambda_": "lambda",
    "epochs": "epochs",
    "pretrain_epochs": "pretrain_epochs",
    "beam": "beam_size",
    "average_last": "average_last",
    "ratios": "ratios",
    "workers": "workers",
    "max_samples": "analysis_max_samples",
    "eval_max_samples": "eval_max_samples"
}

##-------------------start-of-argument-groups()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def add_common_args(parser:argparse.ArgumentParser, needs_out:bool = True) -> None:
    parser.add_argument(
        "--config",
        type=str,
        default=None,
        help="Flat 'key = value' settings file; flags override it"
    )
    parser.add_argument(
        "--seed",
        default=NOT_GIVEN
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"]
    )
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override any setting, may repeat"
    )

    if(needs_out):
        parser.add_argument(
            "--out",
            type=str,
            required=True,
            help="Run directory, must not exist yet"
        )

def add_data_args(parser:argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--data",
        type=str,
        default=None,
        help="Corpus directory written by gen-data; regenerated in memory from the settings when omitted"
    )

def add_pretrained_args(parser:argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--asr",
        type=str,
        default=None,
        help="Pretrained ASR-analog checkpoint"
    )
    parser.add_argument(
        "--mt",
        type=str,
        default=None,
        help="Pretrained MT checkpoint"
    )

def add_checkpoint_args(parser:argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--checkpoints",
        nargs="+",
        required=True,
        help="Checkpoint files or directories"
    )
    parser.add_argument(
        "--average-last",
        dest="average_last",
        default=NOT_GIVEN,
        help="Average the newest k checkpoints"
    )

def add_training_args(parser:argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--scheme",
        choices=ALLOWED_SCHEMES,
        default=NOT_GIVEN
    )
    parser.add_argument(
        "--alpha",
        default=NOT_GIVEN,
        help="Weight of the ST NLL against KD"
    )
    parser.add_argument(
        "--lambda",
        dest="lambda_",
        default=NOT_GIVEN,
        help="Weight of CAR"
    )
    parser.add_argument(
        "--epochs",
        default=NOT_GIVEN
    )

def add_analysis_args(parser:argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--workers",
        default=NOT_GIVEN,
        help="Parallel evaluations, 0 means one per core"
    )
    parser.add_argument(
        "--max-samples",
        dest="max_samples",
        default=NOT_GIVEN,
        help="Dev samples used per analysis, 0 means all"
    )

##-------------------start-of-build_parser()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:

    _parser = argparse.ArgumentParser(prog="easyst", description="Joint speech and text translation experiments on a synthetic corpus.")
    _commands = _parser.add_subparsers(dest="command", required=True)

    _gen = _commands.add_parser("gen-data", help="Generate the synthetic corpus")
    add_common_args(_gen)

    for _task in ("asr", "mt"):
        _pretrain = _commands.add_parser(f"pretrain-{_task}", help=f"Pretrain the {_task.upper()} model")
        add_common_args(_pretrain)
        add_data_args(_pretrain)
        _pretrain.add_argument("--epochs", dest="pretrain_epochs", default=NOT_GIVEN)

    _train = _commands.add_parser("train", help="Joint fine-tuning under a sharing scheme")
    add_common_args(_train)
    add_data_args(_train)
    add_pretrained_args(_train)
    add_training_args(_train)

    _evaluate = _commands.add_parser("evaluate", help="Beam-search decode and score")
    add_common_args(_evaluate)
    add_data_args(_evaluate)
    add_checkpoint_args(_evaluate)
    _evaluate.add_argument("--beam", default=NOT_GIVEN)
    _evaluate.add_argument("--task", choices=["st", "mt"], default="st", help="mt decodes the co-trained text branch")
    _evaluate.add_argument("--split", choices=["dev", "test"], default="test")
    _evaluate.add_argument("--max-samples", dest="eval_max_samples", default=NOT_GIVEN)

    _criticality = _commands.add_parser("analyze-criticality", help="Roll modules back toward their pretrained values")
    add_common_args(_criticality)
    add_data_args(_criticality)
    add_checkpoint_args(_criticality)
    add_pretrained_args(_criticality)
    add_analysis_args(_criticality)
    _criticality.add_argument("--ratios", default=NOT_GIVEN, help="Comma separated, weight on the pretrained parameters")
    _criticality.add_argument("--selectors", nargs="+", default=None, help="Module prefixes such as decoder.1")
    _criticality.add_argument("--beam", default=NOT_GIVEN)

    _correlation = _commands.add_parser("analyze-correlation", help="Speech/text decoder state correlation per layer")
    add_common_args(_correlation)
    add_data_args(_correlation)
    add_analysis_args(_correlation)
    _correlation.add_argument("--checkpoints", nargs="+", required=True, help="One checkpoint file or directory per system")
    _correlation.add_argument("--labels", nargs="+", default=None)
    _correlation.add_argument("--average-last", dest="average_last", default=NOT_GIVEN)

    _average = _commands.add_parser("average-checkpoints", help="Average checkpoints into one file")
    add_common_args(_average)
    add_checkpoint_args(_average)

    _ablation = _commands.add_parser("ablation", help="Run the JT -> JT-S-MT -> +CAR -> +CAR+KD ladder")
    add_common_args(_ablation)
    add_data_args(_ablation)
    add_pretrained_args(_ablation)
    _ablation.add_argument("--seeds", nargs="+", default=None, help="One ladder per seed")
    _ablation.add_argument("--include-st", action="store_true", help="Add the single-task ST row first")
    _ablation.add_argument("--epochs", default=NOT_GIVEN)

    _score = _commands.add_parser("score", help="Corpus BLEU of two hypothesis dumps")
    add_common_args(_score, needs_out=False)
    _score.add_argument("hypotheses")
    _score.add_argument("references")

    return _parser

##-------------------start-of-settings()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _overrides(args:argparse.Namespace) -> dict[str, typing.Any]:

    _values:dict[str, typing.Any] = {}

    for _dest, _key in _SETTING_FLAGS.items():
        if(hasattr(args, _dest)):
            _values[_key] = getattr(args, _dest)

    for _item in args.set:

        if("=" not in _item):
            raise InvalidEasySTSettingsException(f"--set expects KEY=VALUE, got '{_item}'.")

        _key, _value = _item.split("=", 1)
        _values[_key.strip()] = _value.strip()

    return _values

def _configure_logging(level:str, run_dir:str | None) -> None:

    if(run_dir is not None):
        logging.basicConfig(level=logging.DEBUG,
                            filename=os.path.join(run_dir, "run.log"),
                            format=LOG_FORMAT,
                            datefmt=LOG_DATE_FORMAT,
                            force=True)
    else:
        logging.basicConfig(level=logging.DEBUG, handlers=[], force=True)

    console = logging.StreamHandler()
    console.setLevel(getattr(logging, level))
    console.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT))
    logging.getLogger().addHandler(console)

def _start_run(args:argparse.Namespace) -> tuple[dict[str, typing.Any], str | None]:

    """

    Resolves settings, creates the run directory, and wires logging and auditing to it.

    """

    _settings = resolve_settings(args.config, _overrides(args))
    _run_dir = getattr(args, "out", None)

    if(_run_dir is not None):

        if(os.path.exists(_run_dir)):
            raise InvalidEasySTSettingsException(f"Run directory '{_run_dir}' already exists; refusing to overwrite it.")

        os.makedirs(_run_dir)

    _configure_logging(args.log_level, _run_dir)

    if(_run_dir is not None):
        write_resolved(_settings, _run_dir)

    EasyST.set_log_directory(_run_dir, _settings)

    logging.debug(f"easyst {args.command}: {vars(args)}")

    return _settings, _run_dir

def _pretrained(path:str | None) -> typing.Any:
    return load_checkpoint(path) if path is not None else None

##-------------------start-of-commands()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _gen_data(args:argparse.Namespace, settings:dict[str, typing.Any], run_dir:str) -> None:

    _corpus = EasyST.generate_corpus(settings, run_dir)

    print(" ".join(f"{_split}={len(_samples)}" for _split, _samples in _corpus.items()))

def _pretrain(task:typing.Literal["asr", "mt"]):

    def _command(args:argparse.Namespace, settings:dict[str, typing.Any], run_dir:str) -> None:

        _corpus = EasyST.load_corpus(settings, args.data)
        _run = EasyST.pretrain(task, settings, _corpus, run_dir)

        _final = save_checkpoint(_run.checkpoint, os.path.join(run_dir, "final.bmtc"))

        print(_final)

    return _command

def _train(args:argparse.Namespace, settings:dict[str, typing.Any], run_dir:str) -> None:

    _corpus = EasyST.load_corpus(settings, args.data)
    _run = EasyST.train(settings, _corpus, _pretrained(args.asr), _pretrained(args.mt), run_dir)

    _final = save_checkpoint(_run.checkpoint, os.path.join(run_dir, "final.bmtc"))

    print(_final)

def _evaluate(args:argparse.Namespace, settings:dict[str, typing.Any], run_dir:str) -> None:

    _corpus = EasyST.load_corpus(settings, args.data)
    _model = EasyST.load_model(args.checkpoints, settings["average_last"])

    _bleu, _ids, _hypotheses = EasyST.evaluate(_model, _corpus[args.split], args.task, settings["beam_size"], settings["eval_max_samples"])

    _samples = {_sample.id: _sample for _sample in _corpus[args.split]}

    EvaluationService.write_hypotheses(os.path.join(run_dir, "hypotheses.txt"), _ids, _hypotheses)
    EvaluationService.write_hypotheses(os.path.join(run_dir, "references.txt"), _ids, [list(_samples[_id].target) for _id in _ids])

    with open(os.path.join(run_dir, "bleu.txt"), "w", encoding="utf-8") as _file:
        _file.write(f"{_bleu:.2f}\n")

    print(f"BLEU = {_bleu:.2f}")

def _analyze_criticality(args:argparse.Namespace, settings:dict[str, typing.Any], run_dir:str) -> None:

    _corpus = EasyST.load_corpus(settings, args.data)
    _trained = EasyST.load_averaged(args.checkpoints, settings["average_last"])

    _curves = EasyST.criticality(_trained, _pretrained(args.asr), _pretrained(args.mt), _corpus["dev"], settings, args.selectors)

    for _path in EasyST.report(_curves, run_dir):
        print(_path)

def _analyze_correlation(args:argparse.Namespace, settings:dict[str, typing.Any], run_dir:str) -> None:

    _labels = args.labels or [os.path.basename(os.path.normpath(_path)) for _path in args.checkpoints]

    if(len(_labels) != len(args.checkpoints)):
        raise InvalidEasySTSettingsException(f"{len(_labels)} labels for {len(args.checkpoints)} checkpoints.")

    _corpus = EasyST.load_corpus(settings, args.data)
    _models = {_label: EasyST.load_model([_path], settings["average_last"]) for _label, _path in zip(_labels, args.checkpoints)}

    _profiles = EasyST.correlation(_models, _corpus["dev"], settings["analysis_max_samples"])

    for _path in EasyST.report(_profiles, run_dir):
        print(_path)

def _average_checkpoints(args:argparse.Namespace, settings:dict[str, typing.Any], run_dir:str) -> None:

    _averaged = EasyST.load_averaged(args.checkpoints, settings["average_last"])

    print(save_checkpoint(_averaged, os.path.join(run_dir, "averaged.bmtc")))

def _ablation(args:argparse.Namespace, settings:dict[str, typing.Any], run_dir:str) -> None:

    try:
        _seeds = [int(_seed) for _seed in args.seeds] if args.seeds else None
    except ValueError:
        raise InvalidEasySTSettingsException(f"--seeds expects integers, got {args.seeds}.")

    _corpus = EasyST.load_corpus(settings, args.data)
    _rows = EasyST.ablation(settings, _corpus, run_dir, _seeds, args.include_st, _pretrained(args.asr), _pretrained(args.mt))

    EasyST.report(_rows, run_dir)

    with open(os.path.join(run_dir, "ablation.txt"), "r", encoding="utf-8") as _file:
        print(_file.read(), end="")

def _score(args:argparse.Namespace, settings:dict[str, typing.Any], run_dir:str | None) -> None:
    print(f"BLEU = {EvaluationService.score_files(args.hypotheses, args.references):.2f}")

_COMMANDS = {
    "gen-data": _gen_data,
    "pretrain-asr": _pretrain("asr"),
    "pretrain-mt": _pretrain("mt"),
    "train": _train,
    "evaluate": _evaluate,
    "analyze-criticality": _analyze_criticality,
    "analyze-correlation": _analyze_correlation,
    "average-checkpoints": _average_checkpoints,
    "ablation": _ablation,
    "score": _score
}

##-------------------start-of-main()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def main(argv:typing.Sequence[str] | None = None) -> int:

    """

    Runs one subcommand.

    Returns:
    (int) : 0 on success, 2 for usage and settings errors, 1 for any other failure.

    """

    try:
        _args = build_parser().parse_args(argv)

    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    try:
        _settings, _run_dir = _start_run(_args)
        _COMMANDS[_args.command](_args, _settings, _run_dir)

    except InvalidEasySTSettingsException as e:
        logging.debug("settings error", exc_info=True)
        print(f"easyst: error: {e.message}", file=sys.stderr)
        return 2

    except (EasySTException, OSError) as e:
        logging.debug(f"{_args.command} failed", exc_info=True)
        print(f"easyst: {type(e).__name__}: {e}", file=sys.stderr)
        return 1

    return 0

if(__name__ == "__main__"):
    sys.exit(main())
