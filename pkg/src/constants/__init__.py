import os

PIPELINE_NAME: str = "cosmic-bell"
ARTIFACT_DIR: str = "artifact"

SCHEMA_FILE_PATH = os.path.join("config", "schema.yaml")
DATA_DIR: str = "data"
LOG_DIR: str = "logs"
LOG_LEVEL_ENV_KEY = "COSMIC_BELL_LOG_LEVEL"
LOG_MAX_BYTES: int = 5 * 1024 * 1024
LOG_BACKUP_COUNT: int = 3
LOG_FORMAT = "[ %(asctime)s ] %(name)s - %(levelname)s - %(message)s"

REPORT_SIGNIFICANT_DIGITS: int = 12


"""
Physical constants and astronomical conventions
"""
SPEED_OF_LIGHT: float = 299_792_458.0  # m/s, exact
PARALLAX_LY_MAS: float = 3261.6  # d[ly] = PARALLAX_LY_MAS / parallax[mas]
WGS84_A: float = 6_378_137.0
WGS84_F: float = 1.0 / 298.257223563
J2000_JD: float = 2_451_545.0
UNIX_EPOCH_JD: float = 2_440_587.5
SUPPORTED_YEARS = (1990, 2100)
PS_PER_SECOND: int = 1_000_000_000_000


"""
Geometry related constants start with GEOMETRY var name
"""
GEOMETRY_DIR_NAME: str = "plan"
GEOMETRY_VALIDITY_STEP_S: float = 1.0
GEOMETRY_INDEX_AIR: float = 1.00027
GEOMETRY_TAU_SET_S: float = 0.17e-6
GEOMETRY_TAU_BUFFER_A_S: float = 0.38e-6
GEOMETRY_TAU_BUFFER_B_S: float = 1.76e-6
GEOMETRY_TAU_ATM_S: float = 18e-9
GEOMETRY_ATM_SCALE_HEIGHT_M: float = 8000.0


"""
Catalogue related constants start with CATALOGUE var name
"""
CATALOGUE_COLUMNS = ("hip", "ra_deg", "dec_deg", "plx_mas", "e_plx_mas", "hp_mag")
CATALOGUE_FILE_PATH = os.path.join(DATA_DIR, "catalogue", "hipparcos_fixture.csv")
CATALOGUE_MIN_DISTANCE_LY: float = 500.0
CATALOGUE_MAX_FRACTIONAL_ERROR: float = 0.5
CATALOGUE_MAGNITUDE_RANGE = (5.0, 9.0)
CATALOGUE_MAGNITUDE_TOLERANCE: float = 0.5
CATALOGUE_MIN_VISIBLE_S: float = 179.0
CATALOGUE_SEARCH_SPAN_S: float = 3600.0
CATALOGUE_SEARCH_STEP_S: float = 60.0
CATALOGUE_SCORE_WEIGHTS = {
    "brightness": 1.0,
    "distance": 1.0,
    "visibility": 1.0,
    "tau_valid": 1.0,
    "inverse_airmass": 1.0,
}
# fixed scales used to normalise score features into [0, 1]
CATALOGUE_SCORE_DISTANCE_SCALE_LY: float = 5000.0
CATALOGUE_SCORE_TAU_SCALE_S: float = 10e-6


"""
Spectra related constants start with SPECTRA var name
"""
SPECTRA_DIR_NAME: str = "spectra"
SPECTRA_FIXTURE_DIR = os.path.join(DATA_DIR, "spectra")
SPECTRA_GRID_RANGE_NM = (350.0, 1150.0)
SPECTRA_TRANSMISSION_FLOOR: float = 1e-12
SPECTRA_FIXTURE_FILES = {
    "shortpass_transmission": "shortpass_transmission.csv",
    "shortpass_reflection": "shortpass_reflection.csv",
    "longpass_transmission": "longpass_transmission.csv",
    "lens": "lens.csv",
    "mirror": "mirror.csv",
    "detector": "detector_qe.csv",
    "atmosphere": "atmosphere_zenith.csv",
}
SPECTRA_RELATIVE_ERROR_F: float = 0.1


"""
Time tag related constants start with TIMETAG var name
"""
TIMETAG_RECORD_DTYPE = [("site", "u1"), ("channel", "u1"), ("timestamp", "<u8")]
TIMETAG_SITES = ("A", "B")
TIMETAG_CHANNELS = ("outcome_plus", "outcome_minus", "setting_red", "setting_blue")
TIMETAG_COINCIDENCE_WINDOW_PS: int = 2_500
TIMETAG_TAU_CUT_PS: int = 500_000
TIMETAG_DRIFT_BLOCK_S: float = 10.0
TIMETAG_DRIFT_BIN_PS: int = 100
TIMETAG_DRIFT_RANGE_PS: int = 20_000
TIMETAG_DRIFT_MIN_PROMINENCE: float = 5.0
TIMETAG_DRIFT_MIN_BLOCKS: int = 4
TIMETAG_TAU_USED_PS = {"A": 2_000_000, "B": 5_000_000}
# colour read by setting port 1 and port 2 on each side
TIMETAG_PORT_COLOURS = {"A": ("red", "blue"), "B": ("blue", "red")}
TIMETAG_FILE_NAME: str = "timetags.bin"
TIMETAG_TRUTH_FILE_NAME: str = "truth.csv"


"""
Statistics related constants start with BELLSTATS var name
"""
BELLSTATS_DIR_NAME: str = "analysis"
BELLSTATS_REPORT_FILE_NAME: str = "report.json"
BELLSTATS_NO_SIGNALING_ALPHA: float = 0.05
BELLSTATS_KKT_MAX_STEPS: int = 4
MEMORY_N_MAX: int = 15


"""
Simulation related constants start with SIMULATION var name
"""
SIMULATION_DIR_NAME: str = "simulation"
SIMULATION_SEED: int = 1
SIMULATION_DURATION_S: float = 1.0
SIMULATION_ANGLES_DEG = {
    "A": {"red": 0.0, "blue": 45.0},
    "B": {"blue": 22.5, "red": -22.5},
}
SIMULATION_CALIBRATED_VISIBILITY: float = 0.8574
SIMULATION_BLOCK_S: float = 1.0
# slot layout of streams rebuilt from count tables
SIMULATION_SLOT_LEAD_PS: int = 100_000
SIMULATION_SLOT_STEP_PS: int = 50_000
SIMULATION_SLOT_GAP_PS: int = 1_000_000
