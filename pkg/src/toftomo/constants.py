"""Physical constants and measured apparatus values used as defaults."""

from scipy import constants as _c

HBAR = _c.hbar
K_B = _c.k
ATOMIC_MASS = _c.atomic_mass

#: Mass of a single 87Rb atom in kilograms.
RB87_MASS = 86.909180527 * ATOMIC_MASS

#: Gravitational acceleration used for the magnification calibration (m/s^2).
GRAVITY = 9.8

#: Default Fock-space truncation (maximum occupation).
DEFAULT_N_MAX = 25

# Measured oscillation frequencies (Hz) of the displaced ground state and of
# the first excited Fock state, and the anharmonic-model best-fit values.
TRAP_FREQ_N0_HZ = 7.84e3
TRAP_FREQ_N1_HZ = 9.05e3
FIT_TRAP_FREQ_HZ = 8.50e3
FIT_LAMBDA = -0.0037
FIT_DISPLACEMENT = 166e-9

# Imaging system.
MAGNIFICATION = 64.0
FLIGHT_TIME = 0.5e-3
EXPOSURE = 10e-6
CAMERA_PIXEL = 16e-6
PSF_SIGMA_X = 445e-9
PSF_SIGMA_Y = 328e-9
INITIAL_SIZE_BLUR = 100e-9
EXPOSURE_MOTION_BLUR = 57e-9

# EMCCD noise table.
CIC_RATE = 7.0e-2
EM_GAIN_COUNTS = 73.1
READOUT_SIGMA = 5.4
COUNT_OFFSET = 88.4
AVERAGED_NOISE_AMPLITUDE = 26.5
NOISE_SCALE_PRESETS = {
    "displaced_n0": 1.6,
    "n1": 1.05,
    "displaced_n1": 1.16,
}
PHOTONS_PER_COUNT = 0.0124
PHOTONS_PER_SHOT = 7.0

# Richardson-Lucy defaults.
RL_ITERATIONS = 2
RL_FILTER_FLOOR = 0.69

# Maximum-likelihood defaults.
MLE_TOLERANCE = 1e-4
MLE_MAX_ITERATIONS = 500

#: Default total counts of one simulated, noiseless frame.
SIMULATED_FRAME_COUNTS = 1.0e5
