"""Numerical tolerances and fixed protocol constants shared across modules."""

import math

# structural checks: PSD eigenvalues, POVM completeness, Hermiticity
STRUCT_TOL = 1e-10
# scalar identities and unit-trace checks
SCALAR_TOL = 1e-12
# eigenvalues of PSD inputs below this are treated as roundoff and clamped
EIG_CLAMP = 1e-12

# one-way (Shor-Preskill) and two-way bit-error thresholds for BB84
ONE_WAY_THRESHOLD = 0.110
TWO_WAY_THRESHOLD = 0.189

# (1 - 1/sqrt 2)/2: zero-error coin threshold, also the UKD resend error rate
COIN_THRESHOLD = 0.5 - 0.5 / math.sqrt(2.0)

# error-correction inefficiency used for the rate-vs-distance comparison
DEFAULT_F_EC = 1.22

# distance cap used when a configuration never becomes insecure
DISTANCE_CAP_KM = 500.0
