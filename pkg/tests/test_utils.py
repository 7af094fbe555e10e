import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from src.exception import ConfigError
from src.utils.main_utils import parse_utc, report_to_frame, round_significant, to_jsonable


def test_to_jsonable_converts_numpy_and_nan():
    report = {"a": np.array([1.5, np.nan]), "b": np.int64(3), "c": np.bool_(True), 4: (np.float64(math.inf),)}

    assert to_jsonable(report) == {"a": [1.5, None], "b": 3, "c": True, "4": [None]}


def test_to_jsonable_rounds_significant_digits():
    assert to_jsonable(0.123456789, digits=3) == 0.123
    assert to_jsonable(123456.0, digits=2) == 120000.0
    assert round_significant(0.0) == 0.0


def test_to_jsonable_datetime():
    stamp = datetime(2016, 4, 21, 21, 23, tzinfo=timezone.utc)
    assert to_jsonable({"t": stamp}) == {"t": "2016-04-21T21:23:00+00:00"}


def test_parse_utc():
    assert parse_utc("2016-04-21T21:23:00Z") == datetime(2016, 4, 21, 21, 23, tzinfo=timezone.utc)
    assert parse_utc("2016-04-21T21:23:00").tzinfo == timezone.utc
    shifted = parse_utc("2016-04-21T23:23:00+02:00")
    assert shifted == datetime(2016, 4, 21, 21, 23, tzinfo=timezone.utc)
    assert shifted.utcoffset() == timedelta(0)


def test_parse_utc_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_utc("yesterday")


def test_report_to_frame_flattens_nested_keys():
    frame = report_to_frame({"chsh": {"C": 0.2125, "E_ij": [[1, 2], [3, 4]]}, "rows": [{"x": 1}]})

    values = dict(zip(frame["key"], frame["value"]))
    assert values["chsh.C"] == 0.2125
    assert values["chsh.E_ij[0]"] == [1, 2]
    assert values["rows[0].x"] == 1
