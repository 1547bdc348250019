#!/usr/bin/env python3
"""Run both stability families and print their trend tables.

The mass family halves m five times; the perturbation family halves the
Y_20 displacement four times at fixed mass.  Distances should fall roughly
like the square of the small parameter.
"""

import sys
import time

from imcflab.experiments import ExperimentConfig, run_experiment


def main() -> int:
    ok = True
    t0 = time.time()
    pmt = run_experiment(
        ExperimentConfig(
            scenario="pmt_stability",
            out_dir="out/pmt_family",
            family_count=5,
            family_base=0.1,
            s0=1.0,
            t_final=1.0,
            n_out=21,
            mode="ode",
        )
    )
    print("\n".join(pmt.lines))
    ok &= pmt.passed

    rpi = run_experiment(
        ExperimentConfig(
            scenario="rpi_stability",
            out_dir="out/rpi_family",
            family_count=4,
            family_base=0.05,
            family_l=2,
            family_m=0,
            mass=0.1,
            s0=1.0,
            t_final=1.0,
            n_out=41,
            mode="pde",
            n_theta=24,
            n_phi=48,
        )
    )
    print()
    print("\n".join(rpi.lines))
    ok &= rpi.passed
    print(f"\ntotal {time.time() - t0:.1f}s")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
