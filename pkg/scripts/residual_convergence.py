#!/usr/bin/env python3
"""Refinement sweep of the rate-identity residual on a radial reference.

The residual couples a centered difference in t (second order) to exact
spatial integrals, so halving the output interval should quarter it until
roundoff; prints the observed orders as a quick discretization audit.
"""

import sys

import numpy as np

from imcflab.ambient import schwarzschild
from imcflab.diagnostics import rate_balance_report
from imcflab.flow import FlowConfig, run_flow


def main() -> int:
    prev = None
    print("n_out    dt_out      max residual   order")
    for n_out in (26, 51, 101, 201, 401):
        cfg = FlowConfig(
            ambient=schwarzschild(1.0),
            s0=3.0,
            t_final=2.0,
            n_out=n_out,
            mode="ode",
            record_iso=False,
        )
        trace = run_flow(cfg)
        resid = float(np.max(np.abs(rate_balance_report(trace).residuals)))
        dt = trace.dt_out
        order = "" if prev is None else f"{np.log2(prev / resid):5.2f}"
        print(f"{n_out:5d}  {dt:9.5f}  {resid:13.3e}   {order}")
        prev = resid
    return 0


if __name__ == "__main__":
    sys.exit(main())
