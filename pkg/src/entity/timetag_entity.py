import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.constants import TIMETAG_CHANNELS
from src.exception import TableError, TimeTagFormatError

OUTCOME_PLUS, OUTCOME_MINUS, SETTING_RED, SETTING_BLUE = range(len(TIMETAG_CHANNELS))


@dataclass(eq=False)
class TimeTagStream:
    """
    Detection events of one site, stored column-wise. Timestamps are integer
    picoseconds since the run epoch, channels use the codes of TIMETAG_CHANNELS.
    """
    site: str
    timestamps: np.ndarray
    channels: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        if self.timestamps.shape != self.channels.shape:
            raise TimeTagFormatError(f"site {self.site}: timestamp/channel lengths differ", sys)
        if self.timestamps.size and self.timestamps.min() < 0:
            raise TimeTagFormatError(f"site {self.site}: negative timestamp", sys)
        if self.channels.size and self.channels.max() >= len(TIMETAG_CHANNELS):
            raise TimeTagFormatError(f"site {self.site}: unknown channel code {int(self.channels.max())}", sys)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @classmethod
    def empty(cls, site: str) -> "TimeTagStream":
        return cls(site, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.uint8))

    def select(self, mask) -> "TimeTagStream":
        return TimeTagStream(self.site, self.timestamps[mask], self.channels[mask])

    @property
    def outcome_mask(self) -> np.ndarray:
        return self.channels <= OUTCOME_MINUS

    @property
    def setting_mask(self) -> np.ndarray:
        return self.channels >= SETTING_RED

    def outcomes(self) -> "TimeTagStream":
        return self.select(self.outcome_mask)

    def settings(self) -> "TimeTagStream":
        return self.select(self.setting_mask)

    @property
    def span(self) -> float:
        """Covered time in seconds (first to last event)."""
        if self.timestamps.size < 2:
            return 0.0
        return float(self.timestamps[-1] - self.timestamps[0]) * 1e-12

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.timestamps) >= 0))


@dataclass(frozen=True, eq=False)
class DriftModel:
    """Piecewise-linear offset of B's clock relative to A: t_B = t_A + offset(t_B)."""
    knots_ps: np.ndarray
    offsets_ps: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots_ps, dtype=float)
        offsets = np.asarray(self.offsets_ps, dtype=float)
        object.__setattr__(self, "knots_ps", knots)
        object.__setattr__(self, "offsets_ps", offsets)
        if knots.shape != offsets.shape or knots.ndim != 1:
            raise TableError("drift knots and offsets must be equal-length vectors", sys)
        if np.any(np.diff(knots) <= 0):
            raise TableError("drift knots must be strictly ascending", sys)
        if not np.all(np.isfinite(offsets)):
            raise TableError("drift offsets must be finite", sys)

    @classmethod
    def zero(cls) -> "DriftModel":
        return cls(np.zeros(1), np.zeros(1))

    @classmethod
    def constant(cls, offset_ps: float) -> "DriftModel":
        return cls(np.zeros(1), np.array([float(offset_ps)]))

    def offset(self, t_ps) -> np.ndarray:
        """Offset at the given B-clock times; linear extrapolation beyond the end knots."""
        t = np.asarray(t_ps, dtype=float)
        knots, offsets = self.knots_ps, self.offsets_ps
        if knots.size == 1:
            return np.full(t.shape, offsets[0])
        out = np.interp(t, knots, offsets)
        lo_slope = (offsets[1] - offsets[0]) / (knots[1] - knots[0])
        hi_slope = (offsets[-1] - offsets[-2]) / (knots[-1] - knots[-2])
        out = np.where(t < knots[0], offsets[0] + lo_slope * (t - knots[0]), out)
        out = np.where(t > knots[-1], offsets[-1] + hi_slope * (t - knots[-1]), out)
        return out

    def to_a_clock(self, t_b_ps) -> np.ndarray:
        t = np.asarray(t_b_ps, dtype=np.int64)
        return t - np.rint(self.offset(t)).astype(np.int64)

    def to_b_clock(self, t_a_ps) -> np.ndarray:
        # the offset varies by picoseconds per second, so evaluating it at t_A is exact to sub-ps
        t = np.asarray(t_a_ps, dtype=np.int64)
        return t + np.rint(self.offset(t)).astype(np.int64)

    def negated(self) -> "DriftModel":
        return DriftModel(self.knots_ps - self.offsets_ps, -self.offsets_ps)

    def slope_ps_per_s(self) -> float:
        if self.knots_ps.size < 2:
            return 0.0
        return float(np.polyfit(self.knots_ps * 1e-12, self.offsets_ps, 1)[0])

    def to_dict(self) -> dict:
        return {"knots_ps": self.knots_ps, "offsets_ps": self.offsets_ps}


@dataclass(eq=False)
class GatedOutcomes:
    """
    Outcome events of one side annotated with the setting active at detection.
    `setting` is 0 for port 1 and 1 for port 2 (-1 before any setting), `outcome`
    is 0 for '+' and 1 for '-'.
    """
    site: str
    timestamps: np.ndarray
    outcome: np.ndarray
    setting: np.ndarray
    age_ps: np.ndarray
    valid: np.ndarray
    deleted: np.ndarray = None

    def __post_init__(self):
        if self.deleted is None:
            self.deleted = np.zeros(self.timestamps.shape, dtype=bool)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @property
    def usable(self) -> np.ndarray:
        return self.valid & ~self.deleted

    def select(self, mask) -> "GatedOutcomes":
        return GatedOutcomes(self.site, self.timestamps[mask], self.outcome[mask], self.setting[mask],
                             self.age_ps[mask], self.valid[mask], self.deleted[mask])


def _counts_array(counts, dtype) -> np.ndarray:
    array = np.asarray(counts, dtype=dtype)
    if array.size != 16:
        raise TableError(f"count table needs 16 entries, got {array.size}", sys)
    array = array.reshape(2, 2, 2, 2)
    if not np.all(np.isfinite(array)) or np.any(array < 0):
        raise TableError("count tables must hold finite non-negative entries", sys)
    return array


@dataclass(frozen=True, eq=False)
class CoincidenceTable:
    """
    Counts N_ij^{AB} indexed [i, j, A, B] with settings i, j in {0: port 1, 1: port 2}
    and outcomes A, B in {0: '+', 1: '-'}. Integer for measured tables, real-valued
    after efficiency correction.
    """
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        dtype = np.int64 if np.issubdtype(counts.dtype, np.integer) else float
        object.__setattr__(self, "counts", _counts_array(counts, dtype))

    @classmethod
    def zeros(cls) -> "CoincidenceTable":
        return cls(np.zeros(16, dtype=np.int64))

    @classmethod
    def from_rows(cls, rows) -> "CoincidenceTable":
        """Rows for settings 11, 12, 21, 22, columns ++, +-, -+, --."""
        return cls(np.asarray(rows).reshape(16))

    @property
    def n_ij(self) -> np.ndarray:
        return self.counts.sum(axis=(2, 3))

    @property
    def total(self):
        return self.counts.sum()

    def __add__(self, other: "CoincidenceTable") -> "CoincidenceTable":
        return CoincidenceTable(self.counts + other.counts)

    def __eq__(self, other) -> bool:
        return isinstance(other, CoincidenceTable) and np.array_equal(self.counts, other.counts)

    def transposed(self) -> "CoincidenceTable":
        """Table seen with the roles of A and B swapped."""
        return CoincidenceTable(self.counts.transpose(1, 0, 3, 2).reshape(16))

    def to_dict(self) -> dict:
        return {"N_ij_AB": self.counts.reshape(16).tolist()}

    @classmethod
    def from_dict(cls, content: dict) -> "CoincidenceTable":
        if "N_ij_AB" not in content:
            raise TableError("coincidence table document lacks key 'N_ij_AB'", sys)
        return cls(np.asarray(content["N_ij_AB"]))


@dataclass(frozen=True, eq=False)
class SinglesTable:
    """
    Local outcome counts split by the concurrent distant setting.
    `alice[i, j, A]` counts Alice's outcome A under her setting i and Bob's setting j;
    `bob[j, i, B]` counts Bob's outcome B under his setting j and Alice's setting i.
    """
    alice: np.ndarray
    bob: np.ndarray

    def __post_init__(self):
        for name in ("alice", "bob"):
            array = np.asarray(getattr(self, name), dtype=np.int64)
            if array.size != 8:
                raise TableError(f"singles table '{name}' needs 8 entries", sys)
            array = array.reshape(2, 2, 2)
            if np.any(array < 0):
                raise TableError("singles counts must be non-negative", sys)
            object.__setattr__(self, name, array)

    @classmethod
    def zeros(cls) -> "SinglesTable":
        return cls(np.zeros(8, dtype=np.int64), np.zeros(8, dtype=np.int64))

    def __add__(self, other: "SinglesTable") -> "SinglesTable":
        return SinglesTable(self.alice + other.alice, self.bob + other.bob)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SinglesTable) and np.array_equal(self.alice, other.alice)
                and np.array_equal(self.bob, other.bob))

    @property
    def total(self) -> int:
        return int(self.alice.sum() + self.bob.sum())

    def to_dict(self) -> dict:
        return {"N_a_i_b_j_A": self.alice.reshape(8).tolist(), "N_b_j_a_i_B": self.bob.reshape(8).tolist()}

    @classmethod
    def from_dict(cls, content: dict) -> "SinglesTable":
        try:
            return cls(np.asarray(content["N_a_i_b_j_A"]), np.asarray(content["N_b_j_a_i_B"]))
        except KeyError as e:
            raise TableError(f"singles table document lacks key {e}", sys) from e


TRUTH_LABELS = ("stellar_correct", "stellar_wrong_way", "noise", "pair", "dark")


@dataclass(eq=False)
class TruthRecord:
    """
    Ground truth of a simulated stream: one label per event (index into
    TRUTH_LABELS) and the emitted pair id for outcome events (-1 otherwise).
    """
    site: str
    labels: np.ndarray
    pair_id: np.ndarray
    true_colour: Optional[np.ndarray] = field(default=None)

    def __len__(self) -> int:
        return int(self.labels.size)
