## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import csv
import logging
import os
import typing

## third-party libraries
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

## custom modules
from ..classes import AblationRow, CorrelationProfile, CriticalityCurve
from ..decorators import _sync_logging_decorator
from ..exceptions import ContractError, ReportIOError
from ..util.constants import CORRELATION_COLUMNS, CRITICALITY_COLUMNS

ABLATION_COLUMNS = ["system", "scheme", "alpha", "lambda", "seeds", "st_bleu", "st_bleu_mean", "mt_bleu", "mt_bleu_mean"]

## fixed ids and no date stamp, so the same curves give the same bytes
_FIGURE_PARAMS = {"svg.hashsalt": "easyst",
                  "svg.fonttype": "path",
                  "figure.figsize": [6.4, 4.0],
                  "axes.labelsize": 10,
                  "axes.titlesize": 10,
                  "legend.fontsize": 8,
                  "xtick.labelsize": 8,
                  "ytick.labelsize": 8,
                  "lines.linewidth": 1.2,
                  "font.family": "DejaVu Sans"}

ReportInput = typing.Union[typing.Sequence[CriticalityCurve], CorrelationProfile, typing.Sequence[CorrelationProfile], typing.Sequence[AblationRow]]

class ReportService:

    """

    Writes analysis results as CSV tables and SVG line charts.

    """

    _log_directory:str | None = None

##-------------------start-of-set_attributes()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _set_attributes(log_directory:str | None = None) -> None:

        ReportService._log_directory = log_directory

##-------------------start-of-_prepare_directory()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _prepare_directory(out_dir:str) -> None:

        try:
            os.makedirs(out_dir, exist_ok=True)

        except OSError as e:
            raise ReportIOError(f"Cannot create report directory '{out_dir}': {e}")

    @staticmethod
    def _write_rows(path:str, columns:list[str], rows:typing.Iterable[dict[str, typing.Any]]) -> str:

        try:
            with open(path, "w", newline="", encoding="utf-8") as file:

                _writer = csv.DictWriter(file, fieldnames=columns, lineterminator="\n")
                _writer.writeheader()

                for _row in rows:
                    _writer.writerow(_row)

        except OSError as e:
            raise ReportIOError(f"Cannot write '{path}': {e}")

        return path

    @staticmethod
    def _save_figure(figure, path:str) -> str:

        try:
            figure.savefig(path, format="svg", metadata={"Date": None})

        except OSError as e:
            raise ReportIOError(f"Cannot write '{path}': {e}")

        finally:
            plt.close(figure)

        return path

##-------------------start-of-write_criticality()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def write_criticality(curves:typing.Sequence[CriticalityCurve], out_dir:str, name:str = "criticality") -> list[str]:

        """

        One CSV row per (selector, ratio) and one polyline per selector of BLEU delta against ratio.

        Parameters:
        curves (sequence of CriticalityCurve) : At least one curve.
        out_dir (string) : Created when missing.
        name (string) : File stem.

        Returns:
        (list of string) : The CSV and SVG paths.

        """

        if(not curves):
            raise ContractError("write_criticality needs at least one curve.")

        ReportService._prepare_directory(out_dir)

        _rows = [{"selector": _curve.selector.prefix, "ratio": repr(float(_ratio)), "bleu": repr(float(_bleu)), "bleu_delta": repr(float(_delta))}
                 for _curve in curves
                 for _ratio, _bleu, _delta in zip(_curve.ratios, _curve.bleu, _curve.bleu_delta)]

        _csv = ReportService._write_rows(os.path.join(out_dir, f"{name}.csv"), CRITICALITY_COLUMNS, _rows)

        with plt.rc_context(_FIGURE_PARAMS):

            _figure, _axes = plt.subplots()

            for _curve in curves:
                _axes.plot(_curve.ratios, _curve.bleu_delta, marker="o", label=_curve.selector.prefix, gid=_curve.selector.prefix)

            _axes.axhline(0.0, color="grey", linewidth=0.6)
            _axes.set_xlabel("interpolation ratio (1.0 = pretrained parameters)")
            _axes.set_ylabel("BLEU change")
            _axes.set_title(name)
            _axes.legend(loc="best")

            _svg = ReportService._save_figure(_figure, os.path.join(out_dir, f"{name}.svg"))

        return [_csv, _svg]

##-------------------start-of-write_correlation()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def write_correlation(profiles:typing.Sequence[CorrelationProfile], out_dir:str, name:str = "correlation") -> list[str]:

        """

        A CSV per profile and one chart with a polyline per profile of r against decoder layer.

        """

        if(not profiles or any(not _profile.layer_coefficients for _profile in profiles)):
            raise ContractError("write_correlation needs at least one non-empty profile.")

        ReportService._prepare_directory(out_dir)

        _paths = []

        for _index, _profile in enumerate(profiles):

            _rows = []

            for _layer, _mean in enumerate(_profile.layer_coefficients):

                _audited = _profile.audit_components(_layer)

                _rows.append({"layer": _layer + 1,
                              "r_mean": repr(float(_mean)),
                              "r_min_component": repr(float(_audited.min())) if _audited.size else "",
                              "r_max_component": repr(float(_audited.max())) if _audited.size else "",
                              "n_points": _profile.n_points})

            _stem = name if len(profiles) == 1 else f"{name}-{_profile.label or _index}"

            _paths.append(ReportService._write_rows(os.path.join(out_dir, f"{_stem}.csv"), CORRELATION_COLUMNS, _rows))

        with plt.rc_context(_FIGURE_PARAMS):

            _figure, _axes = plt.subplots()

            for _index, _profile in enumerate(profiles):
                _layers = list(range(1, len(_profile.layer_coefficients) + 1))
                _axes.plot(_layers, _profile.layer_coefficients, marker="s", label=_profile.label or f"model {_index}", gid=f"profile-{_index}")

            _axes.set_xticks(list(range(1, max(len(_profile.layer_coefficients) for _profile in profiles) + 1)))
            _axes.set_xlabel("decoder layer")
            _axes.set_ylabel("mean Pearson r (speech vs text)")
            _axes.set_title(name)
            _axes.legend(loc="best")

            _paths.append(ReportService._save_figure(_figure, os.path.join(out_dir, f"{name}.svg")))

        return _paths

##-------------------start-of-write_ablation()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def write_ablation(rows:typing.Sequence[AblationRow], out_dir:str, name:str = "ablation") -> list[str]:

        """

        The ablation ladder as a CSV plus a plain-text table for reading in a terminal.

        """

        if(not rows):
            raise ContractError("write_ablation needs at least one row.")

        ReportService._prepare_directory(out_dir)

        _records = [{"system": _row.system,
                     "scheme": _row.scheme,
                     "alpha": repr(float(_row.alpha)),
                     "lambda": repr(float(_row.lambda_)),
                     "seeds": " ".join(str(_seed) for _seed in _row.seeds),
                     "st_bleu": " ".join(f"{_value:.2f}" for _value in _row.st_bleu),
                     "st_bleu_mean": f"{_row.st_mean:.2f}",
                     "mt_bleu": " ".join(f"{_value:.2f}" for _value in _row.mt_bleu),
                     "mt_bleu_mean": "" if _row.mt_mean is None else f"{_row.mt_mean:.2f}"}
                    for _row in rows]

        _csv = ReportService._write_rows(os.path.join(out_dir, f"{name}.csv"), ABLATION_COLUMNS, _records)

        _width = max(len(_row.system) for _row in rows) + 2
        _lines = [f"{'System':<{_width}}{'ST BLEU':>10}{'MT BLEU':>10}"]
        _lines.append("-" * (_width + 20))

        for _row in rows:
            _mt = "-" if _row.mt_mean is None else f"{_row.mt_mean:.2f}"
            _lines.append(f"{_row.system:<{_width}}{_row.st_mean:>10.2f}{_mt:>10}")

        _table = os.path.join(out_dir, f"{name}.txt")

        try:
            with open(_table, "w", encoding="utf-8") as file:
                file.write("\n".join(_lines) + "\n")

        except OSError as e:
            raise ReportIOError(f"Cannot write '{_table}': {e}")

        return [_csv, _table]

##-------------------start-of-emit_report()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    @_sync_logging_decorator
    def emit_report(result:ReportInput, out_dir:str, name:str | None = None) -> list[str]:

        """

        Writes whatever analysis result it is given.

        Parameters:
        result (curves, profile(s) or ablation rows) : A non-empty analysis result.
        out_dir (string) : Report directory.
        name (string or None) : File stem, defaults to the analysis kind.

        Returns:
        (list of string) : Written paths.

        """

        if(isinstance(result, CorrelationProfile)):
            result = [result]

        if(not result):
            raise ContractError("Nothing to report.")

        _first = result[0]

        if(isinstance(_first, CriticalityCurve)):
            _paths = ReportService.write_criticality(typing.cast(typing.Sequence[CriticalityCurve], result), out_dir, name or "criticality")

        elif(isinstance(_first, CorrelationProfile)):
            _paths = ReportService.write_correlation(typing.cast(typing.Sequence[CorrelationProfile], result), out_dir, name or "correlation")

        elif(isinstance(_first, AblationRow)):
            _paths = ReportService.write_ablation(typing.cast(typing.Sequence[AblationRow], result), out_dir, name or "ablation")

        else:
            raise ContractError(f"Cannot report a {type(_first).__name__}.")

        logging.info(f"Report written: {', '.join(_paths)}")

        return _paths
