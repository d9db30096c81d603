"""Data generation for open- and closed-loop experiments.

The closed loop is ``u_t = -K(q) y_t + r_t`` realized through the stable
sensitivity ``S = 1/(1 + K G)``; all signal paths are expanded into rational
filters and applied with zero initial conditions, so every generated record
satisfies ``y = G u + H e`` exactly (up to round-off).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lti import (
    CONST_ONE,
    CONST_ZERO,
    BjModel,
    Polynomial,
    RationalFilter,
    filter_signal,
    is_stable,
    poly_add,
    poly_mul,
)

LOOP_KINDS = ("open", "closed", "closed_ref_through_K")


class UnstableLoopError(RuntimeError):
    pass


@dataclass(frozen=True)
class LoopConfig:
    system: BjModel
    controller: RationalFilter = field(default=CONST_ZERO)
    reference_filter: RationalFilter = field(default=CONST_ONE)
    reference_gain: float = 1.0
    noise_std: float = 1.0
    N: int = 1000
    seed: int = 0
    loop_kind: str = "closed"
    snr_target: Optional[float] = None
    # Some published experiments close an unstable loop on purpose; signals
    # then grow geometrically but remain finite over short records.
    allow_unstable: bool = False

    def __post_init__(self):
        if self.loop_kind not in LOOP_KINDS:
            raise ValueError(f"loop_kind must be one of {LOOP_KINDS}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.snr_target is not None and self.snr_target <= 0:
            raise ValueError("snr_target must be > 0")


@dataclass(frozen=True)
class DataSet:
    r: np.ndarray
    u: np.ndarray
    y: np.ndarray
    e: Optional[np.ndarray] = None
    seed: Optional[int] = None
    loop_kind: Optional[str] = None
    system: Optional[BjModel] = None

    def __post_init__(self):
        for name in ("r", "u", "y"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.e is not None:
            object.__setattr__(self, "e", np.asarray(self.e, dtype=float))
        lengths = {len(self.r), len(self.u), len(self.y)}
        if self.e is not None:
            lengths.add(len(self.e))
        if len(lengths) != 1:
            raise ValueError("r, u, y (and e) must have equal lengths")
        for name in ("r", "u", "y", "e"):
            v = getattr(self, name)
            if v is not None and not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite values in {name}")

    @property
    def N(self) -> int:
        return len(self.y)

    def to_csv(self, path):
        cols = [self.r, self.u, self.y]
        header = "t,r,u,y"
        if self.e is not None:
            cols.append(self.e)
            header += ",e"
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for t in range(self.N):
                row = ",".join("%.17g" % c[t] for c in cols)
                fh.write(f"{t + 1},{row}\n")

    @classmethod
    def from_csv(cls, path) -> "DataSet":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        cols = {name: data[:, i] for i, name in enumerate(header)}
        return cls(
            r=cols["r"], u=cols["u"], y=cols["y"], e=cols.get("e")
        )


def sensitivity(system: BjModel, controller: RationalFilter) -> RationalFilter:
    """S = 1/(1 + K G) as a rational filter; denominator is monic because
    L has no constant term."""
    kd_f = poly_mul(controller.den, system.F)
    kn_l = poly_mul(controller.num, system.L)
    return RationalFilter(kd_f, poly_add(kd_f, kn_l))


def _check_loop(cfg: LoopConfig):
    s = sensitivity(cfg.system, cfg.controller)
    if not cfg.allow_unstable and not is_stable(s.den)[0]:
        raise UnstableLoopError("closed-loop sensitivity is unstable")
    return s


def _draw(cfg: LoopConfig):
    """Independent sub-streams for the reference driver and the noise."""
    ss_r, ss_e = np.random.SeedSequence(cfg.seed).spawn(2)
    r_white = np.random.default_rng(ss_r).standard_normal(cfg.N)
    e_unit = np.random.default_rng(ss_e).standard_normal(cfg.N)
    return r_white, e_unit


def _reference(cfg: LoopConfig, r=None) -> np.ndarray:
    if r is not None:
        return np.asarray(r, dtype=float)
    r_white, _ = _draw(cfg)
    return cfg.reference_gain * filter_signal(cfg.reference_filter, r_white)


def scale_noise_to_snr(cfg: LoopConfig, r: np.ndarray, e_unit: np.ndarray) -> float:
    """Noise standard deviation making the realized signal-to-noise ratio

        sum [ (K G / (1 + K G)) r ]^2  /  sum [ H e ]^2

    equal cfg.snr_target exactly for the given sequences."""
    if cfg.snr_target is None:
        raise ValueError("snr_target is not set")
    s = _check_loop(cfg)
    t_ry = RationalFilter(
        poly_mul(cfg.controller.num, cfg.system.L), s.den
    )  # K G S = Kn L / (Kd F + Kn L)
    sig = filter_signal(t_ry, r)
    noise_path = filter_signal(cfg.system.H, e_unit)
    den = float(np.sum(noise_path**2))
    if den == 0.0:
        raise ZeroDivisionError("noise path has zero energy")
    return math.sqrt(float(np.sum(sig**2)) / (cfg.snr_target * den))


def generate_closed_loop(cfg: LoopConfig, r=None) -> DataSet:
    """Reference enters below the controller:

    u = S r - K S H e,    y = G S r + S H e.
    """
    s = _check_loop(cfg)
    r = _reference(cfg, r)
    _, e_unit = _draw(cfg)
    e = cfg.noise_std * e_unit

    p = s.den  # Kd F + Kn L
    ksh = RationalFilter(
        poly_mul(poly_mul(cfg.controller.num, cfg.system.F), cfg.system.C),
        poly_mul(p, cfg.system.D),
    )
    gs = RationalFilter(poly_mul(cfg.system.L, cfg.controller.den), p)
    sh = RationalFilter(
        poly_mul(poly_mul(cfg.controller.den, cfg.system.F), cfg.system.C),
        poly_mul(p, cfg.system.D),
    )
    u = filter_signal(s, r) - filter_signal(ksh, e)
    y = filter_signal(gs, r) + filter_signal(sh, e)
    return DataSet(r=r, u=u, y=y, e=e, seed=cfg.seed, loop_kind="closed",
                   system=cfg.system)


def generate_open_loop(cfg: LoopConfig, r=None) -> DataSet:
    """u = S r (no noise path into the input), y = G u + H e."""
    s = _check_loop(cfg)
    r = _reference(cfg, r)
    _, e_unit = _draw(cfg)
    e = cfg.noise_std * e_unit
    u = filter_signal(s, r)
    y = filter_signal(cfg.system.G, u) + filter_signal(cfg.system.H, e)
    return DataSet(r=r, u=u, y=y, e=e, seed=cfg.seed, loop_kind="open",
                   system=cfg.system)


def generate_closed_loop_ref_through_K(cfg: LoopConfig, r=None) -> DataSet:
    """Reference enters through the controller:

    u = K S r - K S H e,    y = K G S r + S H e.

    If ``cfg.snr_target`` is set, the noise variance is rescaled so the
    realized signal-to-noise ratio hits the target exactly.
    """
    s = _check_loop(cfg)
    r = _reference(cfg, r)
    _, e_unit = _draw(cfg)
    sigma = cfg.noise_std
    if cfg.snr_target is not None:
        sigma = scale_noise_to_snr(cfg, r, e_unit)
    e = sigma * e_unit

    p = s.den
    ks = RationalFilter(poly_mul(cfg.controller.num, cfg.system.F), p)
    ksh = RationalFilter(
        poly_mul(poly_mul(cfg.controller.num, cfg.system.F), cfg.system.C),
        poly_mul(p, cfg.system.D),
    )
    kgs = RationalFilter(poly_mul(cfg.controller.num, cfg.system.L), p)
    sh = RationalFilter(
        poly_mul(poly_mul(cfg.controller.den, cfg.system.F), cfg.system.C),
        poly_mul(p, cfg.system.D),
    )
    u = filter_signal(ks, r) - filter_signal(ksh, e)
    y = filter_signal(kgs, r) + filter_signal(sh, e)
    return DataSet(r=r, u=u, y=y, e=e, seed=cfg.seed,
                   loop_kind="closed_ref_through_K", system=cfg.system)


def generate(cfg: LoopConfig, r=None) -> DataSet:
    gen = {
        "open": generate_open_loop,
        "closed": generate_closed_loop,
        "closed_ref_through_K": generate_closed_loop_ref_through_K,
    }[cfg.loop_kind]
    return gen(cfg, r=r)


@dataclass(frozen=True)
class RandomSystemSpec:
    """Sampling ranges for random resonant plants and noise models."""

    pole_pairs: int = 3
    pole_radius: tuple = (0.88, 0.98)
    pole_phase_deg: tuple = (0.0, 90.0)
    zero_pairs: int = 1
    real_zero_range: tuple = (-1.2, 1.2)
    noise_pairs: int = 1
    noise_radius: tuple = (0.0, 0.95)
    noise_phase_deg: tuple = (0.0, 180.0)


def _conjugate_pair_poly(rng, radius_range, phase_range_deg) -> Polynomial:
    rad = rng.uniform(*radius_range)
    phase = np.deg2rad(rng.uniform(*phase_range_deg))
    # (1 - p q^-1)(1 - conj(p) q^-1) with p = rad e^{i phase}
    return Polynomial(np.array([1.0, -2.0 * rad * np.cos(phase), rad**2]))


def random_system(rng: np.random.Generator,
                  spec: RandomSystemSpec = RandomSystemSpec()) -> BjModel:
    """Sample a random Box-Jenkins system with resonant plant poles in an
    annulus and a possibly non-minimum-phase real zero."""
    f = Polynomial(np.array([1.0]))
    for _ in range(spec.pole_pairs):
        f = poly_mul(f, _conjugate_pair_poly(rng, spec.pole_radius,
                                             spec.pole_phase_deg))
    lnum = Polynomial(np.array([0.0, 1.0]))
    for _ in range(spec.zero_pairs):
        lnum = poly_mul(lnum, _conjugate_pair_poly(rng, spec.pole_radius,
                                                   spec.pole_phase_deg))
    z = rng.uniform(*spec.real_zero_range)
    lnum = poly_mul(lnum, Polynomial(np.array([1.0, -z])))

    c = Polynomial(np.array([1.0]))
    d = Polynomial(np.array([1.0]))
    for _ in range(spec.noise_pairs):
        c = poly_mul(c, _conjugate_pair_poly(rng, spec.noise_radius,
                                             spec.noise_phase_deg))
        d = poly_mul(d, _conjugate_pair_poly(rng, spec.noise_radius,
                                             spec.noise_phase_deg))
    return BjModel(L=lnum, F=f, C=c, D=d)
