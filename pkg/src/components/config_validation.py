import sys
from typing import List

from src.constants import SCHEMA_FILE_PATH
from src.entity.config_entity import RunConfig, resolve_path
from src.exception import ConfigError, MyException
from src.logger import logging
from src.utils.main_utils import read_yaml_file

TYPE_CHECKS = {
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "string": lambda v: isinstance(v, str),
    "boolean": lambda v: isinstance(v, bool),
    "list": lambda v: isinstance(v, list),
    "mapping": lambda v: isinstance(v, dict),
    "any": lambda v: True,
}


class ConfigValidation:
    def __init__(self, schema_file_path: str = SCHEMA_FILE_PATH):
        """
        :param schema_file_path: YAML file listing the allowed keys and value types per section
        """
        try:
            self._schema_config = read_yaml_file(file_path=resolve_path(schema_file_path))
        except Exception as e:
            raise MyException(e, sys)

    def check_section(self, content, schema, path: str) -> List[str]:
        """
        Method Name :   check_section
        Description :   Collects unknown keys and type mismatches below one section

        Output      :   Returns the list of problems, each prefixed with its dotted path
        """
        if isinstance(schema, str):
            if not TYPE_CHECKS[schema](content):
                return [f"{path}: expected {schema}, got {type(content).__name__}"]
            return []
        if not isinstance(content, dict):
            return [f"{path}: expected a section, got {type(content).__name__}"]
        problems = []
        for key, value in content.items():
            dotted = f"{path}.{key}" if path else str(key)
            if key not in schema:
                problems.append(f"{dotted}: unknown key")
            else:
                problems.extend(self.check_section(value, schema[key], dotted))
        return problems

    def initiate_config_validation(self, content: dict) -> RunConfig:
        """
        Method Name :   initiate_config_validation
        Description :   Validates a run configuration document against the schema and builds the RunConfig

        Output      :   Returns the validated RunConfig
        On Failure  :   Raise ConfigError listing every problem
        """
        logging.info("Entered initiate_config_validation method of ConfigValidation class")
        try:
            problems = self.check_section(content, self._schema_config, "")
            if problems:
                logging.info(f"Configuration problems: {problems}")
                raise ConfigError("invalid configuration: " + "; ".join(problems), sys)
            run_config = RunConfig.from_dict(content)
            logging.info("Exited initiate_config_validation method of ConfigValidation class")
            return run_config
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e
