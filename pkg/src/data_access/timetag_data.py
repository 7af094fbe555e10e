import io
import os
import sys
from typing import Dict, Optional

import numpy as np
import pandas as pd

from src.constants import TIMETAG_CHANNELS, TIMETAG_RECORD_DTYPE, TIMETAG_SITES
from src.entity.timetag_entity import TRUTH_LABELS, TimeTagStream, TruthRecord
from src.exception import MyException, TimeTagFormatError
from src.logger import logging

RECORD_DTYPE = np.dtype(TIMETAG_RECORD_DTYPE)
TEXT_COLUMNS = ["site", "channel", "timestamp_ps"]
TRUTH_COLUMNS = ["index", "site", "channel", "label", "pair_id"]


def _read_bytes(stream) -> bytes:
    if isinstance(stream, (bytes, bytearray, memoryview)):
        return bytes(stream)
    if hasattr(stream, "read"):
        return stream.read()
    try:
        with open(stream, "rb") as handle:
            return handle.read()
    except OSError as e:
        raise TimeTagFormatError(f"cannot read time-tag file {stream!r}: {e}", sys) from e


def _split_sites(site_codes: np.ndarray, channels: np.ndarray, timestamps: np.ndarray) -> Dict[str, TimeTagStream]:
    if site_codes.size and site_codes.max() >= len(TIMETAG_SITES):
        raise TimeTagFormatError(f"unknown site code {int(site_codes.max())}", sys)
    if channels.size and channels.max() >= len(TIMETAG_CHANNELS):
        raise TimeTagFormatError(f"unknown channel code {int(channels.max())}", sys)
    if timestamps.size and timestamps.max() > np.iinfo(np.int64).max:
        raise TimeTagFormatError("timestamp exceeds the signed 64-bit range", sys)
    streams = {}
    for code, site in enumerate(TIMETAG_SITES):
        mask = site_codes == code
        stamps = timestamps[mask].astype(np.int64)
        order = np.argsort(stamps, kind="stable")
        streams[site] = TimeTagStream(site, stamps[order], channels[mask][order])
    return streams


class TimeTagData:
    """
    Reads and writes time-tag streams. The binary format is a sequence of packed
    10-byte records (site u1, channel u1, timestamp u8 little-endian, ps); the
    text format is a CSV with columns site,channel,timestamp_ps where site and
    channel may be given by code or by name.
    """

    @staticmethod
    def parse_binary(stream) -> Dict[str, TimeTagStream]:
        data = _read_bytes(stream)
        if len(data) % RECORD_DTYPE.itemsize:
            raise TimeTagFormatError(
                f"truncated record: {len(data)} bytes is not a multiple of {RECORD_DTYPE.itemsize}", sys)
        records = np.frombuffer(data, dtype=RECORD_DTYPE)
        return _split_sites(records["site"], records["channel"], records["timestamp"])

    @staticmethod
    def parse_text(stream) -> Dict[str, TimeTagStream]:
        source = stream
        if isinstance(stream, (bytes, bytearray)):
            source = io.BytesIO(stream)
        try:
            frame = pd.read_csv(source, comment="#", skipinitialspace=True, dtype=str)
        except pd.errors.EmptyDataError:
            frame = pd.DataFrame(columns=TEXT_COLUMNS)
        except Exception as e:
            raise TimeTagFormatError(f"cannot parse time-tag text: {e}", sys) from e
        missing = [c for c in TEXT_COLUMNS if c not in frame.columns]
        if missing:
            raise TimeTagFormatError(f"time-tag text lacks columns {missing}", sys)
        frame = frame.dropna(how="all")
        if frame.isna().any().any():
            raise TimeTagFormatError("truncated record in time-tag text", sys)
        sites = frame["site"].str.strip().replace({name: str(code) for code, name in enumerate(TIMETAG_SITES)})
        channels = frame["channel"].str.strip().replace(
            {name: str(code) for code, name in enumerate(TIMETAG_CHANNELS)})
        numbers = pd.DataFrame({"site": pd.to_numeric(sites, errors="coerce"),
                                "channel": pd.to_numeric(channels, errors="coerce"),
                                "timestamp": pd.to_numeric(frame["timestamp_ps"].str.strip(), errors="coerce")})
        bad = numbers.isna().any(axis=1)
        if bad.any():
            bad_channel = numbers["channel"].isna() & ~numbers["site"].isna()
            what = "unknown channel code" if bad_channel.any() else "unparsable record"
            raise TimeTagFormatError(f"{what} at row(s) {numbers.index[bad].tolist()[:5]}", sys)
        if (numbers["timestamp"] < 0).any():
            raise TimeTagFormatError("negative timestamp in time-tag text", sys)
        return _split_sites(numbers["site"].to_numpy(np.int64), numbers["channel"].to_numpy(np.int64),
                            numbers["timestamp"].to_numpy(np.uint64))

    @staticmethod
    def to_records(streams: Dict[str, TimeTagStream]) -> np.ndarray:
        """Packs streams into the binary record layout, site A first then site B."""
        parts = []
        for code, site in enumerate(TIMETAG_SITES):
            stream = streams.get(site) or TimeTagStream.empty(site)
            part = np.empty(len(stream), dtype=RECORD_DTYPE)
            part["site"] = code
            part["channel"] = stream.channels
            part["timestamp"] = stream.timestamps.astype(np.uint64)
            parts.append(part)
        return np.concatenate(parts)

    def write_binary(self, file_path: str, streams: Dict[str, TimeTagStream]) -> int:
        try:
            os.makedirs(os.path.dirname(file_path) or ".", exist_ok=True)
            records = self.to_records(streams)
            records.tofile(file_path)
            logging.info(f"Wrote {records.size} time-tag records to {file_path}")
            return int(records.size)
        except Exception as e:
            raise MyException(e, sys) from e

    def write_text(self, file_path: str, streams: Dict[str, TimeTagStream]) -> int:
        try:
            records = self.to_records(streams)
            frame = pd.DataFrame({
                "site": np.asarray(TIMETAG_SITES)[records["site"]],
                "channel": np.asarray(TIMETAG_CHANNELS)[records["channel"]],
                "timestamp_ps": records["timestamp"],
            })
            os.makedirs(os.path.dirname(file_path) or ".", exist_ok=True)
            frame.to_csv(file_path, index=False)
            return int(records.size)
        except Exception as e:
            raise MyException(e, sys) from e

    def read(self, file_path: str, fmt: str = "binary") -> Dict[str, TimeTagStream]:
        streams = self.parse_text(file_path) if fmt == "text" else self.parse_binary(file_path)
        logging.info(f"Read {len(streams['A'])} events for A and {len(streams['B'])} for B from {file_path}")
        return streams

    @staticmethod
    def write_truth(file_path: str, streams: Dict[str, TimeTagStream], truth: Dict[str, TruthRecord]) -> None:
        """Truth sidecar keyed by the record index in the binary file."""
        try:
            frames, offset = [], 0
            for site in TIMETAG_SITES:
                stream, record = streams[site], truth[site]
                frames.append(pd.DataFrame({
                    "index": np.arange(offset, offset + len(stream)),
                    "site": site,
                    "channel": np.asarray(TIMETAG_CHANNELS)[stream.channels],
                    "label": np.asarray(TRUTH_LABELS)[record.labels],
                    "pair_id": record.pair_id,
                }, columns=TRUTH_COLUMNS))
                offset += len(stream)
            os.makedirs(os.path.dirname(file_path) or ".", exist_ok=True)
            pd.concat(frames, ignore_index=True).to_csv(file_path, index=False)
        except Exception as e:
            raise MyException(e, sys) from e

    @staticmethod
    def read_truth(file_path: str) -> pd.DataFrame:
        try:
            return pd.read_csv(file_path, dtype={"site": str, "channel": str, "label": str})
        except Exception as e:
            raise TimeTagFormatError(f"cannot read truth file {file_path}: {e}", sys) from e


def parse_timetags(stream, fmt: Optional[str] = None) -> Dict[str, TimeTagStream]:
    """
    Per-site event streams sorted by timestamp (stable, so ties keep file
    order). `fmt` is 'binary' or 'text'; a path ending in .csv or .txt
    defaults to text.
    """
    if fmt is None:
        fmt = "text" if isinstance(stream, str) and stream.lower().endswith((".csv", ".txt")) else "binary"
    if fmt == "text":
        return TimeTagData.parse_text(stream)
    if fmt != "binary":
        raise TimeTagFormatError(f"unknown time-tag format {fmt!r}", sys)
    return TimeTagData.parse_binary(stream)
