"""Parameter and trajectory containers for the Furuta-pendulum simulator.

State convention throughout: ``[alpha, beta, omega, phi]`` with ``alpha`` the
rotary-arm angle (rad), ``beta`` the pendulum angle from upright (rad, kept
unwrapped so divergence stays visible), and ``omega``/``phi`` the respective
angular rates (rad/s).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PhysicalParams",
    "ObservationConfig",
    "PerturbationConfig",
    "Trajectory",
    "default_physical_params",
    "DEFAULT_SENSOR_NOISE_PROBS",
]

# Multinomial over encoder-count offsets -4..4; the center carries 0.6 and the
# eight other values 0.05 each.
DEFAULT_SENSOR_NOISE_PROBS = (0.05, 0.05, 0.05, 0.05, 0.6, 0.05, 0.05, 0.05, 0.05)


@dataclass(frozen=True)
class PhysicalParams:
    """Rigid-body and motor constants of the rotary pendulum.

    The pendulum is modeled as its mass lumped at half the (possibly
    extended) length plus an optional tip mass at the full length; the arm is
    a uniform rod driven by a DC motor through voltage ``u``.
    """

    arm_mass: float = 0.095          # kg
    arm_length: float = 0.085        # m
    pendulum_mass: float = 0.024     # kg
    pendulum_length: float = 0.129   # m
    arm_damping: float = 5e-4        # N*m*s
    pendulum_damping: float = 5e-5   # N*m*s
    motor_resistance: float = 3.0    # ohm
    motor_torque_constant: float = 0.05   # N*m/A
    motor_back_emf_constant: float = 0.05  # V*s/rad
    gravity: float = 9.81            # m/s^2
    voltage_limit: float = 10.0      # V
    added_tip_mass: float = 0.0      # kg
    added_length: float = 0.0        # m

    def __post_init__(self):
        positives = {
            "arm_mass": self.arm_mass,
            "arm_length": self.arm_length,
            "pendulum_mass": self.pendulum_mass,
            "pendulum_length": self.pendulum_length,
            "motor_resistance": self.motor_resistance,
            "motor_torque_constant": self.motor_torque_constant,
            "motor_back_emf_constant": self.motor_back_emf_constant,
            "gravity": self.gravity,
            "voltage_limit": self.voltage_limit,
        }
        for name, value in positives.items():
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and strictly positive")
        for name, value in (("arm_damping", self.arm_damping),
                            ("pendulum_damping", self.pendulum_damping),
                            ("added_tip_mass", self.added_tip_mass),
                            ("added_length", self.added_length)):
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and nonnegative")

    def derived_constants(self, mass_delta: float = 0.0,
                          length_delta: float = 0.0) -> np.ndarray:
        """Pack the constants the rollout kernels consume.

        ``mass_delta`` attaches at the pendulum tip; ``length_delta`` extends
        the pendulum. Layout:
        [J_total, M1, M2, M1*L_arm, b_arm, b_pend, kt/Rm, kt*km/Rm, g*M1, v_limit]
        with M1/M2 the first/second mass moments of the pendulum assembly
        about its pivot.
        """
        length = self.pendulum_length + self.added_length + length_delta
        tip_mass = self.added_tip_mass + mass_delta
        if length <= 0 or tip_mass < 0:
            raise ValueError("perturbed pendulum must keep positive length and mass")
        half = length / 2.0
        m1 = self.pendulum_mass * half + tip_mass * length
        m2 = self.pendulum_mass * half**2 + tip_mass * length**2
        j_total = (self.arm_mass * self.arm_length**2 / 3.0
                   + (self.pendulum_mass + tip_mass) * self.arm_length**2)
        return np.array([
            j_total,
            m1,
            m2,
            m1 * self.arm_length,
            self.arm_damping,
            self.pendulum_damping,
            self.motor_torque_constant / self.motor_resistance,
            self.motor_torque_constant * self.motor_back_emf_constant / self.motor_resistance,
            self.gravity * m1,
            self.voltage_limit,
        ])


def default_physical_params() -> PhysicalParams:
    """Nominal plant. Chosen so the upright equilibrium is open-loop unstable
    and pole-placement gains inside the default search box stabilize it."""
    return PhysicalParams()


@dataclass(frozen=True)
class ObservationConfig:
    """Encoder, velocity-filter, control-rate, and noise-model settings."""

    encoder_counts_per_rev: int = 2048
    control_period: float = 0.002       # s
    filter_coefficient: float = 0.7     # low-pass pole for velocity estimates
    sensor_noise_probs: tuple = DEFAULT_SENSOR_NOISE_PROBS
    actuation_noise_std: float = 0.5    # V
    n_substeps: int = 5                 # RK4 substeps per control period

    def __post_init__(self):
        if self.encoder_counts_per_rev <= 0:
            raise ValueError("encoder_counts_per_rev must be positive")
        if not (np.isfinite(self.control_period) and self.control_period > 0):
            raise ValueError("control_period must be positive")
        if not 0 <= self.filter_coefficient < 1:
            raise ValueError("filter_coefficient must lie in [0, 1)")
        probs = np.asarray(self.sensor_noise_probs, dtype=float)
        if len(probs) != 9 or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("sensor_noise_probs must be 9 nonnegative values summing to 1")
        if self.actuation_noise_std < 0:
            raise ValueError("actuation_noise_std must be nonnegative")
        if self.n_substeps < 1:
            raise ValueError("n_substeps must be >= 1")

    @property
    def quantum(self) -> float:
        """Encoder resolution in radians."""
        return 2.0 * np.pi / self.encoder_counts_per_rev


@dataclass(frozen=True)
class PerturbationConfig:
    """Deviations applied to one rollout: control-action scaling, observation
    delay, plant modifications, and noise injection toggles."""

    gain_factor: float = 1.0
    observation_delay_steps: int = 0
    mass_delta: float = 0.0     # kg, attached at the pendulum tip
    length_delta: float = 0.0   # m
    actuation_noise: bool = False
    sensor_noise: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.gain_factor) and self.gain_factor > 0):
            raise ValueError("gain_factor must be strictly positive")
        if self.observation_delay_steps < 0:
            raise ValueError("observation_delay_steps must be nonnegative")


NOMINAL = PerturbationConfig()


@dataclass(frozen=True)
class Trajectory:
    """One simulated episode sampled at the control rate.

    ``states`` holds the true state at the start of each control step,
    ``observations`` the encoder/filter estimates the controller saw, and
    ``voltages`` the input held over the step. ``diverged`` marks episodes
    truncated because the state left the representable range.
    """

    times: np.ndarray
    states: np.ndarray
    observations: np.ndarray
    voltages: np.ndarray
    control_period: float
    diverged: bool = False

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.states) == len(self.observations) == len(self.voltages) == n):
            raise ValueError("trajectory arrays must share one length")

    @property
    def n_steps(self) -> int:
        return len(self.times)

    def covers(self, t_end: float) -> bool:
        """Whether the episode ran through ``t_end`` seconds (each recorded
        step spans one control period)."""
        if self.n_steps == 0:
            return False
        return self.times[-1] + self.control_period >= t_end - 1e-12

    def to_csv(self, path) -> None:
        header = "t,alpha,beta,omega,phi,alpha_hat,beta_hat,omega_hat,phi_hat,voltage"
        table = np.column_stack([
            self.times, self.states, self.observations, self.voltages,
        ])
        np.savetxt(path, table, delimiter=",", header=header, comments="")
