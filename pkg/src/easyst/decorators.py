## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
from functools import wraps

import datetime
import os
import reprlib
import typing

## numpy arrays and corpora make raw reprs unreadable
_abbreviator = reprlib.Repr()
_abbreviator.maxlist = 4
_abbreviator.maxdict = 4
_abbreviator.maxstring = 80
_abbreviator.maxother = 80

##-------------------start-of-get_nested_attribute()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _get_nested_attribute(obj, attrs):

    for attr, type_hint in attrs:
        try:
            if(isinstance(obj, (list, tuple)) and attr.isdigit()):
                obj = obj[int(attr)]
            else:
                try:
                    if(type_hint is None or isinstance(obj, type_hint)):
                        obj = getattr(obj, attr)
                except AttributeError:
                    ## Try dictionary access
                    obj = obj[attr]

        except (AttributeError, IndexError, KeyError, TypeError):
            raise ValueError(f"Attribute {attr} in object {obj} not found.")

    return str(obj)

##-------------------start-of-_describe_result()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _describe_result(cls_name:str, func_name:str, result:typing.Any) -> str:

    _paths = log_attributes.get(f"{cls_name}.{func_name}", None)

    if(not _paths):
        return _abbreviator.repr(result)

    _lines = []

    for _path in _paths:
        try:
            _lines.append(f"{'.'.join(_attr for _attr, _ in _path)} = {_get_nested_attribute(result, _path)}")
        except ValueError:
            _lines.append(_abbreviator.repr(result))

    return "\n".join(_lines)

##-------------------start-of-_resolve_log_directory()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _resolve_log_directory(func) -> tuple[str, str | None]:

    ## Get the class name from the function's qualified name
    cls_name = func.__qualname__.split('.')[0]

    ## Perform lazy import of the module where the class is defined
    module = __import__(func.__module__, fromlist=[cls_name])
    cls = getattr(module, cls_name)

    if(not hasattr(cls, '_log_directory')):
        raise ValueError(f"No log directory defined for class {cls_name}")

    return cls_name, getattr(cls, '_log_directory', None)

##-------------------start-of-_write_record()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _write_record(directory:str, cls_name:str, func, args, kwargs, result, started:datetime.datetime) -> None:

    timestamp = started.strftime('%Y-%m-%d-%H-%M-%S')
    elapsed = (datetime.datetime.now() - started).total_seconds()

    filepath = os.path.join(directory, "easyst-log.txt")

    ## did you know multi-line f-strings take leading spaces into account?
    log_data = f"""
{'=' * 40}
Function Call Details:
{'-' * 40}
Class Name: {cls_name}
Function Name: {func.__name__}
Arguments: {_abbreviator.repr(args)}
Keyword Arguments: {_abbreviator.repr(kwargs)}
{'-' * 40}
Result Details:
{'-' * 40}
Result: {_describe_result(cls_name, func.__name__, result)}
Elapsed Seconds: {elapsed:.3f}
{'-' * 40}
Timestamp: {timestamp}
{'=' * 40}
        """

    with open(filepath, 'a+') as file:
        file.write(log_data)

##-------------------start-of-logging_decorator()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _async_logging_decorator(func):

    @wraps(func)
    async def wrapper(*args, **kwargs):

        cls_name, directory = _resolve_log_directory(func)

        if(directory is None):
            return await func(*args, **kwargs)

        started = datetime.datetime.now()
        result = await func(*args, **kwargs)

        _write_record(directory, cls_name, func, args, kwargs, result, started)

        return result

    return wrapper

def _sync_logging_decorator(func):

    @wraps(func)
    def wrapper(*args, **kwargs):

        cls_name, directory = _resolve_log_directory(func)

        if(directory is None):
            return func(*args, **kwargs)

        started = datetime.datetime.now()
        result = func(*args, **kwargs)

        _write_record(directory, cls_name, func, args, kwargs, result, started)

        return result

    return wrapper

## what to pull out of each audited result, keyed by "Class.function"; anything unlisted is abbreviated with reprlib
log_attributes = {
    'TrainerService.pretrain': [[('checkpoint', None), ('metadata', None), ('step', None)], [('checkpoints', None)]],
    'TrainerService.train_joint': [[('checkpoints', None)], [('steps', None)]],
    'EvaluationService.evaluate': [[('0', None)]],
    'AnalysisService.criticality_sweep': [[('0', None), ('bleu', None)]],
    'AnalysisService.criticality_sweep_async': [[('0', None), ('bleu', None)]],
    'AnalysisService.modality_correlation': [[('layer_coefficients', None)], [('n_points', None)]],
    'ReportService.emit_report': [[('0', None)]]
}
