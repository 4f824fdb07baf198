"""Neural-network quantum states with tangent-kernel training dynamics.

Subpackages cover basis enumeration (`hilbert`), sparse Hamiltonians and
time evolution (`hamiltonian`), finite-width complex network states
(`nnqs`), empirical and closed-form tangent kernels (`kernel`), linearized
supervised-learning dynamics (`dynamics`), gradient-descent ensembles
(`trainer`), ensemble entanglement estimators (`entropy`), and
positive-definiteness checks (`spectra`).
"""

__version__ = "0.1.0"
