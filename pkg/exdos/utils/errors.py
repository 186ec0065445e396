"""统一异常定义。

说明：
- 每个异常携带 exit_code，CLI 层只在 run() 里做一次映射
- 可恢复的问题（无法解析的跳转、未解析的标识符等）不抛异常，走 diagnostics
"""
from __future__ import annotations


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT_FORMAT = 2
EXIT_NUMERIC_FAULT = 3


class ExdosError(Exception):
    exit_code = EXIT_INPUT_FORMAT


class UsageError(ExdosError):
    exit_code = EXIT_USAGE


class InputFormatError(ExdosError):
    exit_code = EXIT_INPUT_FORMAT


class MalformedInputError(InputFormatError):
    """输入不是合法的十六进制字节码，position 指向原始字符串中的出错字符。"""

    def __init__(self, message: str, *, position: int) -> None:
        super().__init__(f"{message} (position {position})")
        self.position = position


class UnsupportedSchemaError(InputFormatError):
    def __init__(self, version: str) -> None:
        super().__init__(f"unsupported AST schema: {version}")
        self.version = version


class EmbeddingImportError(InputFormatError):
    pass


class DatasetError(InputFormatError):
    pass


class ConfigError(InputFormatError):
    pass


class WrongModalityError(ExdosError):
    exit_code = EXIT_INPUT_FORMAT

    def __init__(self, *, expected: str, found: str) -> None:
        super().__init__(f"wrong modality: expected {expected}, found {found}")
        self.expected = expected
        self.found = found


class AlignmentError(ExdosError):
    exit_code = EXIT_INPUT_FORMAT


class EmptyGraphError(ExdosError):
    exit_code = EXIT_INPUT_FORMAT


class NumericFaultError(ExdosError):
    exit_code = EXIT_NUMERIC_FAULT


class ShapeError(ExdosError):
    exit_code = EXIT_NUMERIC_FAULT

    def __init__(self, op: str, *shapes: tuple[int, ...]) -> None:
        joined = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"shape mismatch in {op}: {joined}")
        self.op = op
        self.shapes = shapes


class TrainingError(ExdosError):
    exit_code = EXIT_NUMERIC_FAULT
