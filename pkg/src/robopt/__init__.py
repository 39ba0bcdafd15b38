"""Robust policy optimization for a simulated Furuta pendulum.

Multi-objective Bayesian optimization (multi-output GP surrogate with an
intrinsic-coregionalization kernel, expected hypervolume improvement
acquisition) over linear state-feedback gains, trading off control
performance against data-driven stability margins (delay margin, lower
gain margin), plus a scalar expected-improvement baseline and a
perturbation test battery.
"""

__version__ = "0.1.0"
