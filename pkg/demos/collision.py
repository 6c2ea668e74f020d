"""Classical kink-antikink collisions below and above the bion threshold.

Every fluctuation mode is frozen, so each run is a single deterministic
trajectory. Prints the class and the wall separation every 20 time units.
"""

import numpy as np

from jrlattice.fermions import FermionParams
from jrlattice.lattice import LatticeSpec
from jrlattice.twa import ExperimentConfig, collision_experiment, collision_setup

spec = LatticeSpec.from_kink(N=160, Phi0=5.0, xi0=5.0)
D, P_BAR = 40.0, -2.0

for g in (0.02, 0.24):
    wigner, _ = collision_setup(spec, D, P_BAR, frozen_all=True)
    cfg = ExperimentConfig(
        spec, FermionParams(J=3.0, g=g), wigner, dt=0.1, t_max=160.0,
        record_stride=5, zero_mode_occupation="both", observables=("phi",),
    )
    res, summary = collision_experiment(cfg, D, P_BAR)
    sep = res.per_trajectory["separation"][0]
    print(f"g = {g}: {summary['classes'][0]}")
    print("  separation:", np.round(sep[::40], 1).tolist())
