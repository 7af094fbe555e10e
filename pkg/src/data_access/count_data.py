import json
import sys

from src.entity.rates_entity import RateBudget
from src.entity.timetag_entity import CoincidenceTable, SinglesTable
from src.exception import MyException, TableError
from src.logger import logging
from src.utils.main_utils import write_json_report


class CountData:
    """
    JSON documents holding pre-tabulated counts: coincidences under key
    "N_ij_AB" (row-major i, j, A, B), singles under "N_a_i_b_j_A" and
    "N_b_j_a_i_B", and rate budgets keyed by side.
    """

    @staticmethod
    def _load(file_path: str) -> dict:
        try:
            with open(file_path, "r", encoding="utf-8") as handle:
                content = json.load(handle)
        except FileNotFoundError as e:
            raise TableError(f"count file not found: {file_path}", sys) from e
        except json.JSONDecodeError as e:
            raise TableError(f"count file {file_path} is not valid JSON: {e}", sys) from e
        if not isinstance(content, dict):
            raise TableError(f"count file {file_path} must hold a JSON object", sys)
        return content

    def read_coincidences(self, file_path: str) -> CoincidenceTable:
        table = CoincidenceTable.from_dict(self._load(file_path))
        logging.info(f"Loaded coincidence table with N = {table.total} from {file_path}")
        return table

    def read_singles(self, file_path: str) -> SinglesTable:
        return SinglesTable.from_dict(self._load(file_path))

    def read_rates(self, file_path: str) -> RateBudget:
        return RateBudget.from_dict(self._load(file_path))

    @staticmethod
    def write_coincidences(file_path: str, table: CoincidenceTable) -> None:
        try:
            write_json_report(file_path, table.to_dict())
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e

    @staticmethod
    def write_singles(file_path: str, table: SinglesTable) -> None:
        write_json_report(file_path, table.to_dict())
