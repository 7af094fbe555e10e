import os
import sys

import pandas as pd

from src.constants import SPECTRA_FIXTURE_DIR, SPECTRA_FIXTURE_FILES
from src.entity.spectral_entity import SettingReaderModel, SpectralCurve
from src.exception import MyException, SpectralCurveError
from src.logger import logging


class SpectralData:
    """Loads two-column (wavelength_nm, value) response curves; '#' starts a comment."""

    def __init__(self, directory: str = SPECTRA_FIXTURE_DIR, files: dict = None):
        self.directory = directory
        self.files = dict(SPECTRA_FIXTURE_FILES)
        self.files.update(files or {})

    @staticmethod
    def read_curve(file_path: str, kind: str = "probability", name: str = None) -> SpectralCurve:
        try:
            frame = pd.read_csv(file_path, comment="#", header=None, names=["wavelength_nm", "value"],
                                skipinitialspace=True, skip_blank_lines=True)
        except FileNotFoundError as e:
            raise SpectralCurveError(f"spectral curve file not found: {file_path}", sys) from e
        except Exception as e:
            raise SpectralCurveError(f"cannot parse spectral curve {file_path}: {e}", sys) from e
        numbers = frame.apply(pd.to_numeric, errors="coerce")
        if numbers.isna().any().any():
            bad = numbers.index[numbers.isna().any(axis=1)].tolist()
            raise SpectralCurveError(f"{file_path}: unparsable rows {bad[:5]}", sys)
        name = name or os.path.splitext(os.path.basename(file_path))[0]
        return SpectralCurve(numbers["wavelength_nm"].to_numpy(), numbers["value"].to_numpy(), kind, name)

    @staticmethod
    def write_curve(file_path: str, curve: SpectralCurve, title: str = "") -> None:
        try:
            os.makedirs(os.path.dirname(file_path) or ".", exist_ok=True)
            with open(file_path, "w", encoding="utf-8") as handle:
                handle.write(f"# {title or curve.name}\n# wavelength_nm,value\n")
                pd.DataFrame({"wavelength_nm": curve.wavelength, "value": curve.values}).to_csv(
                    handle, header=False, index=False, float_format="%.6g")
        except Exception as e:
            raise MyException(e, sys) from e

    def load_setting_reader_model(self) -> SettingReaderModel:
        curves = {}
        for role, file_name in self.files.items():
            curves[role] = self.read_curve(os.path.join(self.directory, file_name), name=role)
        logging.info(f"Loaded setting reader model from {self.directory}")
        return SettingReaderModel(**curves)
