"""Mixed-integer instances and the two instance families.

An instance has ``num_binary`` binary variables and ``num_continuous`` real
variables.  Complex beamformers are stored interleaved: complex entry ``i``
lives at continuous indices ``2*i`` (real part) and ``2*i + 1`` (imaginary
part).  For a Cloud-RAN instance with ``L`` RRHs, ``N`` antennas each and
``K`` users, complex entry ``k*L*N + l*N + n`` is the weight that RRH ``l``,
antenna ``n`` applies to user ``k``'s symbol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .errors import DimensionError, InvalidScenario

TOL_FEAS = 1e-6

# 128.1 + 37.6 log10(d / 1 km) dB
PATHLOSS_INTERCEPT_DB = 128.1
PATHLOSS_SLOPE_DB = 37.6
MIN_DISTANCE_M = 10.0
DEFAULT_NOISE_DBM = -102.0


class Sense(str, Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ObjectiveSpec:
    """``bin_linear @ a + cont_linear @ w + sum(cont_quadratic * w**2) + constant``."""

    bin_linear: np.ndarray
    cont_linear: np.ndarray
    cont_quadratic: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "bin_linear", _frozen(self.bin_linear))
        object.__setattr__(self, "cont_linear", _frozen(self.cont_linear))
        object.__setattr__(self, "cont_quadratic", _frozen(self.cont_quadratic))
        if np.any(self.cont_quadratic < 0):
            raise ValueError("quadratic objective coefficients must be nonnegative")

    def value(self, binaries, continuous) -> float:
        return float(
            self.bin_linear @ binaries
            + self.cont_linear @ continuous
            + self.cont_quadratic @ (continuous * continuous)
            + self.constant
        )


@dataclass(frozen=True)
class LinearConstraint:
    """``bin_coeffs @ a + cont_coeffs @ w <= rhs``."""

    bin_coeffs: np.ndarray
    cont_coeffs: np.ndarray
    rhs: float

    def __post_init__(self):
        object.__setattr__(self, "bin_coeffs", _frozen(self.bin_coeffs))
        object.__setattr__(self, "cont_coeffs", _frozen(self.cont_coeffs))
        object.__setattr__(self, "rhs", float(self.rhs))

    def violation(self, binaries, continuous) -> float:
        return float(self.bin_coeffs @ binaries + self.cont_coeffs @ continuous - self.rhs)


@dataclass(frozen=True)
class SinrConstraint:
    """SINR of ``user`` must reach ``gamma``.

    ``channel`` is the user's complex channel row over all transmit antennas;
    user ``i``'s beamformer occupies complex entries
    ``[i*len(channel), (i+1)*len(channel))`` of the continuous vector.
    """

    user: int
    num_users: int
    channel: np.ndarray
    gamma: float
    noise_std: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "channel", _frozen(self.channel, complex))

    def beams(self, continuous) -> np.ndarray:
        m = len(self.channel)
        z = continuous[0::2] + 1j * continuous[1::2]
        return z.reshape(self.num_users, m)

    def sinr(self, continuous) -> float:
        gains = np.abs(self.beams(continuous) @ np.conj(self.channel)) ** 2
        interference = gains.sum() - gains[self.user] + self.noise_std**2
        return float(gains[self.user] / interference)

    def violation(self, continuous) -> float:
        # gamma * (interference + noise) - signal, in noise-power units
        gains = np.abs(self.beams(continuous) @ np.conj(self.channel)) ** 2
        interference = gains.sum() - gains[self.user] + self.noise_std**2
        return float(self.gamma * interference - gains[self.user])


@dataclass(frozen=True)
class PowerCapConstraint:
    """``sum(w[indices]**2) <= cap * a[binary]``; ties a group's power to its switch."""

    binary: int
    indices: np.ndarray
    cap: float

    def __post_init__(self):
        object.__setattr__(self, "indices", _frozen(self.indices, np.int64))

    def violation(self, binaries, continuous) -> float:
        return float(np.sum(continuous[self.indices] ** 2) - self.cap * binaries[self.binary])


Constraint = Union[LinearConstraint, SinrConstraint, PowerCapConstraint]


@dataclass(frozen=True)
class InstanceMeta:
    instance_id: str
    seed: int
    family: str  # "cloudran" or "toy"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MinlpInstance:
    sense: Sense
    num_binary: int
    num_continuous: int
    objective: ObjectiveSpec
    constraints: tuple
    cont_lower: np.ndarray
    cont_upper: np.ndarray
    meta: InstanceMeta

    def __post_init__(self):
        object.__setattr__(self, "sense", Sense(self.sense))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "cont_lower", _frozen(self.cont_lower))
        object.__setattr__(self, "cont_upper", _frozen(self.cont_upper))
        self._validate()

    def _validate(self):
        nb, nc = self.num_binary, self.num_continuous
        if nb < 1:
            raise DimensionError("an instance needs at least one binary variable")
        obj = self.objective
        if obj.bin_linear.shape != (nb,) or obj.cont_linear.shape != (nc,) \
                or obj.cont_quadratic.shape != (nc,):
            raise DimensionError("objective dimensions do not match the instance")
        if self.cont_lower.shape != (nc,) or self.cont_upper.shape != (nc,):
            raise DimensionError("continuous bounds do not match the instance")
        for con in self.constraints:
            if isinstance(con, LinearConstraint):
                if con.bin_coeffs.shape != (nb,) or con.cont_coeffs.shape != (nc,):
                    raise DimensionError("linear constraint dimensions do not match")
            elif isinstance(con, SinrConstraint):
                if 2 * con.num_users * len(con.channel) != nc or not 0 <= con.user < con.num_users:
                    raise DimensionError("SINR constraint does not match the beamformer layout")
            elif isinstance(con, PowerCapConstraint):
                if not 0 <= con.binary < nb or np.any(con.indices < 0) or np.any(con.indices >= nc):
                    raise DimensionError("power cap references a variable out of range")
            else:
                raise TypeError(f"unknown constraint type {type(con).__name__}")

    @property
    def instance_id(self) -> str:
        return self.meta.instance_id

    @property
    def family(self) -> str:
        return self.meta.family

    @cached_property
    def power_caps(self) -> dict:
        """binary index -> PowerCapConstraint"""
        return {c.binary: c for c in self.constraints if isinstance(c, PowerCapConstraint)}


@dataclass(frozen=True)
class Assignment:
    binaries: np.ndarray
    continuous: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "binaries", _frozen(self.binaries))
        object.__setattr__(self, "continuous", _frozen(self.continuous))


@dataclass(frozen=True)
class Evaluation:
    objective: float
    feasible: bool
    violations: list


def evaluate_assignment(instance: MinlpInstance, x: Assignment, tol: float = TOL_FEAS) -> Evaluation:
    """Objective value of ``x`` and the names of every violated constraint.

    Binaries must be within ``tol`` of {0, 1}; constraint violations are
    measured in the units of each constraint (noise-normalized power for SINR).
    """
    a, w = np.asarray(x.binaries, float), np.asarray(x.continuous, float)
    if a.shape != (instance.num_binary,) or w.shape != (instance.num_continuous,):
        raise DimensionError(
            f"assignment has shape ({a.size}, {w.size}), instance expects "
            f"({instance.num_binary}, {instance.num_continuous})"
        )
    violations = []
    frac = np.abs(a - np.round(a))
    for i in np.flatnonzero((frac > tol) | (a < -tol) | (a > 1 + tol)):
        violations.append(f"integrality[{i}]")
    for i in np.flatnonzero((w < instance.cont_lower - tol) | (w > instance.cont_upper + tol)):
        violations.append(f"bound[{i}]")
    for j, con in enumerate(instance.constraints):
        if isinstance(con, LinearConstraint):
            v = con.violation(a, w)
            name = f"linear[{j}]"
        elif isinstance(con, SinrConstraint):
            v = con.violation(w)
            name = f"sinr[{con.user}]"
        else:
            v = con.violation(a, w)
            name = f"power_cap[{con.binary}]"
        if v > tol:
            violations.append(name)
    return Evaluation(instance.objective.value(a, w), not violations, violations)


# ---------------------------------------------------------------- Cloud-RAN


@dataclass(frozen=True)
class CloudRanScenario:
    L: int
    K: int
    N: int
    rrh_positions: np.ndarray
    mu_positions: np.ndarray
    H: np.ndarray  # K x (L*N) complex, watts^(1/2) gain
    noise_power: float
    sinr_target: float
    fronthaul_powers: np.ndarray
    per_rrh_power_cap: float
    amp_efficiency: float
    region_halfwidth: float

    def __post_init__(self):
        object.__setattr__(self, "rrh_positions", _frozen(self.rrh_positions))
        object.__setattr__(self, "mu_positions", _frozen(self.mu_positions))
        object.__setattr__(self, "H", _frozen(self.H, complex))
        object.__setattr__(self, "fronthaul_powers", _frozen(self.fronthaul_powers))
        if self.fronthaul_powers.shape != (self.L,) or np.any(self.fronthaul_powers <= 0):
            raise InvalidScenario("fronthaul powers must be positive, one per RRH")
        if self.sinr_target <= 0 or self.noise_power <= 0:
            raise InvalidScenario("SINR target and noise power must be positive")
        if not 0 < self.amp_efficiency <= 1:
            raise InvalidScenario("amplifier efficiency must lie in (0, 1]")
        if self.per_rrh_power_cap <= 0:
            raise InvalidScenario("per-RRH power cap must be positive")
        if self.H.shape != (self.K, self.L * self.N) or not np.all(np.isfinite(self.H)):
            raise InvalidScenario("channel matrix has wrong shape or non-finite entries")
        for pos in (self.rrh_positions, self.mu_positions):
            if pos.size and np.max(np.abs(pos)) > self.region_halfwidth:
                raise InvalidScenario("node placed outside the square region")


def linear_fronthaul_powers(L: int) -> np.ndarray:
    """P_l = 5 + l watts for l = 1..L."""
    return 5.0 + np.arange(1, L + 1, dtype=float)


def pathloss_db(distance_m) -> np.ndarray:
    d = np.maximum(np.asarray(distance_m, float), MIN_DISTANCE_M)
    return PATHLOSS_INTERCEPT_DB + PATHLOSS_SLOPE_DB * np.log10(d / 1000.0)


def gen_cloudran_scenario(seed: int, L: int, K: int, N: int, sinr_db: float,
                          fronthaul_powers: Sequence[float] | None = None,
                          region_halfwidth: float = 1000.0,
                          noise_dbm: float = DEFAULT_NOISE_DBM,
                          per_rrh_power_cap: float = 1.0,
                          amp_efficiency: float = 0.25) -> CloudRanScenario:
    if L < 1 or N < 1 or K < 0:
        raise InvalidScenario(f"need L, N >= 1 and K >= 0, got L={L}, K={K}, N={N}")
    if fronthaul_powers is None:
        fronthaul_powers = linear_fronthaul_powers(L)
    fronthaul_powers = np.asarray(fronthaul_powers, float)
    if fronthaul_powers.shape != (L,) or np.any(fronthaul_powers <= 0):
        raise InvalidScenario("fronthaul powers must be positive, one per RRH")
    rng = np.random.default_rng(seed)
    rrh = rng.uniform(-region_halfwidth, region_halfwidth, size=(L, 2))
    mu = rng.uniform(-region_halfwidth, region_halfwidth, size=(K, 2))
    dist = np.linalg.norm(mu[:, None, :] - rrh[None, :, :], axis=-1)  # K x L
    amp = 10.0 ** (-pathloss_db(dist) / 20.0)
    g = (rng.standard_normal((K, L, N)) + 1j * rng.standard_normal((K, L, N))) / math.sqrt(2.0)
    H = (amp[:, :, None] * g).reshape(K, L * N)
    return CloudRanScenario(
        L=L, K=K, N=N, rrh_positions=rrh, mu_positions=mu, H=H,
        noise_power=dbm_to_watts(noise_dbm), sinr_target=db_to_linear(sinr_db),
        fronthaul_powers=fronthaul_powers, per_rrh_power_cap=per_rrh_power_cap,
        amp_efficiency=amp_efficiency, region_halfwidth=region_halfwidth,
    )


def cloudran_instance(scenario: CloudRanScenario, instance_id: str, seed: int = 0) -> MinlpInstance:
    """Network power minimization over RRH switches ``s`` and beamformers ``w``.

    minimize  sum_l s_l P_l + (1/eta) sum_l ||w_l||^2
    s.t.      SINR_k >= gamma for every user, ||w_l||^2 <= s_l * cap.

    Channels are divided by the noise standard deviation so the stored
    constraints see unit noise; SINR values are unchanged by the scaling.
    """
    sc = scenario
    L, K, N = sc.L, sc.K, sc.N
    m = L * N
    nc = 2 * K * m
    sigma = math.sqrt(sc.noise_power)
    constraints: list = []
    for k in range(K):
        constraints.append(SinrConstraint(user=k, num_users=K, channel=sc.H[k] / sigma,
                                          gamma=sc.sinr_target, noise_std=1.0))
    complex_idx = np.arange(K * m).reshape(K, L, N)
    for l in range(L):
        cidx = complex_idx[:, l, :].ravel()
        idx = np.sort(np.concatenate([2 * cidx, 2 * cidx + 1]))
        constraints.append(PowerCapConstraint(binary=l, indices=idx, cap=sc.per_rrh_power_cap))
    objective = ObjectiveSpec(
        bin_linear=sc.fronthaul_powers,
        cont_linear=np.zeros(nc),
        cont_quadratic=np.full(nc, 1.0 / sc.amp_efficiency),
    )
    meta = InstanceMeta(
        instance_id=instance_id, seed=int(seed), family="cloudran",
        params={
            "L": L, "K": K, "N": N,
            "sinr_db": 10.0 * math.log10(sc.sinr_target),
            "mean_fronthaul": float(np.mean(sc.fronthaul_powers)),
        },
    )
    return MinlpInstance(
        sense=Sense.MINIMIZE, num_binary=L, num_continuous=nc, objective=objective,
        constraints=tuple(constraints), cont_lower=np.full(nc, -np.inf),
        cont_upper=np.full(nc, np.inf), meta=meta,
    )


def gen_cloudran_instance(seed: int, L: int, K: int, N: int, sinr_db: float,
                          fronthaul_powers: Sequence[float] | None = None,
                          region_halfwidth: float = 1000.0, **scenario_kw):
    """Draw a random network and return ``(scenario, instance)``.

    Positions are uniform in ``[-region_halfwidth, region_halfwidth]^2``;
    each channel is a pathloss-scaled standard complex Gaussian.  Output is a
    deterministic function of the arguments.
    """
    sc = gen_cloudran_scenario(seed, L, K, N, sinr_db, fronthaul_powers,
                               region_halfwidth, **scenario_kw)
    iid = f"cloudran-L{L}K{K}N{N}-g{sinr_db:g}-s{seed}"
    return sc, cloudran_instance(sc, iid, seed)


# --------------------------------------------------------------- toy MILPs


def bits_for_bound(upper: int) -> int:
    return max(1, math.ceil(math.log2(upper + 1)))


def gen_toy_milp(seed: int, n_int: int, n_cons: int, upper: int = 3, n_cont: int = 1,
                 sense: Sense | str = Sense.MINIMIZE) -> MinlpInstance:
    """Random bounded MILP over integers in ``{0..upper}`` plus a few reals in ``[0, upper]``.

    Each integer ``x_j`` is the binary expansion ``sum_t 2^t a_{j,t}``.  When
    ``upper + 1`` is not a power of two, ``x_j <= upper`` is added as a
    constraint.  A random integer point is kept feasible so every instance
    has a solution.
    """
    if not 1 <= n_int <= 20:
        raise ValueError(f"n_int must lie in [1, 20], got {n_int}")
    if n_cons < 0 or n_cont < 0 or upper < 1:
        raise ValueError("n_cons and n_cont must be nonnegative, upper >= 1")
    sense = Sense(sense)
    rng = np.random.default_rng(seed)
    bits = bits_for_bound(upper)
    nb = n_int * bits
    # expansion[j] maps the binaries to integer j
    expansion = np.zeros((n_int, nb))
    for j in range(n_int):
        expansion[j, j * bits:(j + 1) * bits] = 2.0 ** np.arange(bits)

    c_int = rng.integers(-10, 11, size=n_int).astype(float)
    c_cont = rng.integers(-10, 11, size=n_cont).astype(float)
    x0 = rng.integers(0, upper + 1, size=n_int).astype(float)
    y0 = rng.uniform(0, upper, size=n_cont)
    constraints = []
    for _ in range(n_cons):
        a_int = rng.integers(-5, 6, size=n_int).astype(float)
        a_cont = rng.integers(-5, 6, size=n_cont).astype(float)
        slack = float(rng.integers(0, 4))
        rhs = float(a_int @ x0 + a_cont @ y0) + slack
        constraints.append(LinearConstraint(a_int @ expansion, a_cont, math.ceil(rhs * 1e6) / 1e6))
    if (upper + 1) & upper:  # upper + 1 not a power of two
        for j in range(n_int):
            constraints.append(LinearConstraint(expansion[j], np.zeros(n_cont), float(upper)))
    objective = ObjectiveSpec(bin_linear=c_int @ expansion, cont_linear=c_cont,
                              cont_quadratic=np.zeros(n_cont))
    meta = InstanceMeta(
        instance_id=f"toy-n{n_int}c{n_cons}u{upper}r{n_cont}-{sense.value[:3]}-s{seed}",
        seed=int(seed), family="toy",
        params={"n_int": n_int, "n_cons": n_cons, "upper": upper, "n_cont": n_cont,
                "bits": bits},
    )
    return MinlpInstance(
        sense=sense, num_binary=nb, num_continuous=n_cont, objective=objective,
        constraints=tuple(constraints), cont_lower=np.zeros(n_cont),
        cont_upper=np.full(n_cont, float(upper)), meta=meta,
    )


def toy_integer_values(instance: MinlpInstance, binaries) -> np.ndarray:
    """Decode the binary expansion of a toy instance back to its integers."""
    bits = instance.meta.params["bits"]
    a = np.asarray(binaries, float).reshape(-1, bits)
    return a @ (2.0 ** np.arange(bits))
