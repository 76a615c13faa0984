"""Physical constants and fixed experimental-design values."""

from scipy import constants as _sc

SPEED_OF_LIGHT = _sc.c  # m/s, exact
MU_0 = _sc.mu_0  # H/m
EPSILON_0 = _sc.epsilon_0  # F/m

# Guard floors applied before log / division / log-ratio.
MAGNITUDE_FLOOR = 1e-12
DENSITY_FLOOR = 1e-12

GRID_SPACING_CM = 5.0
DEFAULT_D_EFF_M = 0.254  # 10 in antenna separation

# Stepped-tone sweep of the reference rig.
SWEEP_F_START_HZ = 2.0e9
SWEEP_F_STOP_HZ = 5.0e9
SWEEP_F_STEP_HZ = 40e6
SWEEP_RATE_SPS = 500e3
SWEEP_DWELL_S = 0.2

BAND_F1_HZ = 2.0e9
BAND_F2_HZ = 3.5e9
BAND_SPLIT_HZ = 2.75e9

METRICS = ("RSRP", "SINR", "MCS", "throughput", "BLER")
STAGES = ("early", "middle", "late")
