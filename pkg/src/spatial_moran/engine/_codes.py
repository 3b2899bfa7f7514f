"""Integer codes shared by the compiled kernels and the Python wrappers."""

# event codes returned by a single step
EV_UP = 0
EV_DOWN = 1
EV_MUT01 = 2
EV_MUT12 = 3
EV_NOOP = 4
EV_ABSORBED = 5
EV_OVERFLOW = -1

# family fates
FATE_EXTINCT = 0
FATE_TYPE2 = 1
FATE_SIZE_CAP = 2
FATE_MANHOUR_CAP = 3
FATE_OVERFLOW = 4
FATE_EVENT_BUDGET = 5

# int64 state slots
N1 = 0
NB = 1
NSLOT = 2
NFREE = 3
NUP = 4
NDOWN = 5
NEV = 6
SITE = 7
NFAM = 8
BITS = 9
IST_SIZE = 10

# float64 state slots
TIME = 0
MANHOURS = 1
FST_SIZE = 2
