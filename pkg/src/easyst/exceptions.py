## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

class EasySTException(Exception):

    """

    EasySTException is the base exception class for all exceptions in the EasyST package.

    """

    def __init__(self, message:str) -> None:

        """

        Parameters:
        message (string) : The message to display when the exception is raised.

        """

        self.message = message

        super().__init__(message)

##-------------------start-of-InvalidEasySTSettingsException--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class InvalidEasySTSettingsException(EasySTException):

    """

    InvalidEasySTSettingsException is raised when a configuration value, a corpus spec or a command line flag is invalid.

    """

    pass

##-------------------start-of-DimensionError--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class DimensionError(EasySTException):

    """

    DimensionError is raised when the shapes given to a tensor operation do not agree.

    """

    def __init__(self, operation:str, *shapes:tuple) -> None:

        """

        Parameters:
        operation (string) : The name of the operation that failed.
        shapes (tuple) : The offending shapes, in operand order.

        """

        _shapes = " and ".join(str(tuple(_shape)) for _shape in shapes)

        super().__init__(f"{operation}: incompatible shapes {_shapes}.")

        self.shapes = shapes

##-------------------start-of-VocabularyError--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class VocabularyError(EasySTException):

    """

    VocabularyError is raised when a token id falls outside of its vocabulary.

    """

    pass

##-------------------start-of-LengthError--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class LengthError(EasySTException):

    """

    LengthError is raised when a sequence is longer than the model's position table.

    """

    pass

##-------------------start-of-ContractError--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class ContractError(EasySTException):

    """

    ContractError is raised when a caller breaks an operation's precondition.

    """

    pass

##-------------------start-of-GraphError--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class GraphError(EasySTException):

    """

    GraphError is raised when a recorded graph is used after it has been consumed by backward.

    """

    pass

##-------------------start-of-InitializationError--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class InitializationError(EasySTException):

    """

    InitializationError is raised when a model cannot be built from the checkpoints an initialization scheme demands.

    """

    def __init__(self, message:str, tensor_name:str | None = None) -> None:

        """

        Parameters:
        message (string) : The message to display when the exception is raised.
        tensor_name (string or None) : The tensor that caused the failure, if any.

        """

        super().__init__(message)

        self.tensor_name = tensor_name

##-------------------start-of-CheckpointFormatError--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class CheckpointFormatError(EasySTException):

    """

    CheckpointFormatError is raised when a checkpoint file is malformed.

    """

    def __init__(self, message:str, offset:int) -> None:

        """

        Parameters:
        message (string) : What was wrong.
        offset (int) : The byte offset at which reading failed.

        """

        super().__init__(f"{message} (at byte offset {offset})")

        self.offset = offset

##-------------------start-of-AveragingError--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class AveragingError(EasySTException):

    """

    AveragingError is raised when checkpoints with different tensor sets are averaged.

    """

    pass

##-------------------start-of-AnalysisError--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class AnalysisError(EasySTException):

    """

    AnalysisError is raised by the criticality and correlation instruments.

    """

    pass

##-------------------start-of-DivergenceError--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class DivergenceError(EasySTException):

    """

    DivergenceError is raised when a training loss stops being finite.

    """

    pass

##-------------------start-of-ReportIOError--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class ReportIOError(EasySTException):

    """

    ReportIOError is raised when a report directory cannot be written.

    """

    pass
