from pathlib import Path
from typing import Any, TypeVar

import click
import pydantic

from ..exceptions.btd_exception import BTDException, InvalidArgumentError


M = TypeVar("M", bound=pydantic.BaseModel)

INPUT_FILE = click.Path(exists=True, dir_okay=False, path_type=Path)
INPUT_DIR = click.Path(exists=True, file_okay=False, path_type=Path)
OUTPUT_FILE = click.Path(dir_okay=False, path_type=Path)
OUTPUT_DIR = click.Path(file_okay=False, path_type=Path)


def parse_model(model: type[M], error: type[BTDException] = InvalidArgumentError, **values: Any) -> M:
    """Build a config model from command options, leaving unset options at the model's defaults."""

    try:
        return model(**{key: value for key, value in values.items() if value is not None})
    except pydantic.ValidationError as e:
        raise error(str(e)) from e
