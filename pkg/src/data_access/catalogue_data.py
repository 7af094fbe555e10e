import io
import sys
from typing import Union

import pandas as pd

from src.constants import CATALOGUE_COLUMNS
from src.exception import CatalogueError, MyException
from src.logger import logging


class CatalogueData:
    """
    Reads a Hipparcos-style delimited catalogue into a string-valued DataFrame.
    The frame index holds the 1-based source line number of each row.
    """

    def __init__(self, delimiter: str = ","):
        self.delimiter = delimiter

    @staticmethod
    def _read_text(stream: Union[str, io.TextIOBase]) -> str:
        if hasattr(stream, "read"):
            return stream.read()
        try:
            with open(stream, "r", encoding="utf-8") as handle:
                return handle.read()
        except OSError as e:
            raise CatalogueError(f"cannot read catalogue {stream!r}: {e}", sys) from e

    def export_catalogue_as_dataframe(self, stream) -> pd.DataFrame:
        try:
            lines = self._read_text(stream).splitlines()
            if not lines:
                raise CatalogueError("catalogue is empty: header row missing", sys)
            header = [name.strip() for name in lines[0].split(self.delimiter)]
            missing = [name for name in CATALOGUE_COLUMNS if name not in header]
            if missing:
                raise CatalogueError(f"catalogue header lacks columns {missing}", sys)

            body = pd.Series(lines[1:], index=pd.RangeIndex(2, len(lines) + 1, name="line"), dtype=object)
            body = body[body.str.strip() != ""]
            if body.empty:
                return pd.DataFrame(columns=header + ["_extra"], index=pd.Index([], name="line"), dtype=object)

            fields = body.str.split(self.delimiter, expand=True)
            fields = fields.apply(lambda column: column.str.strip())
            width = len(header)
            while fields.shape[1] < width:
                fields[fields.shape[1]] = None
            frame = fields.iloc[:, :width].copy()
            frame.columns = header
            extra = fields.iloc[:, width:].fillna("").astype(str)
            frame["_extra"] = extra.ne("").any(axis=1) if extra.shape[1] else False
            logging.info(f"Read {len(frame)} catalogue rows")
            return frame
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e
