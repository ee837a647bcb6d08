"""
infinichain
Perfect simulation of chains of infinite order and d-bar bounds for their
k-step Markov approximations

Subcommands:
- sample: perfect stationary samples
- couple: coupled runs of a chain and its k-step approximation
- dbar / bounds: empirical d-bar next to the theoretical bounds
- hoc: house-of-cards return probabilities and their bounds
- conc: concentration of geometric sums
- selftest: end-to-end checks on the shipped kernels
"""

import os
import sys

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from modules.cli import main

if __name__ == '__main__':
    sys.exit(main())
