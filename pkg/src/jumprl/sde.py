"""Seedable simulation of Brownian and jump-diffusion paths on uniform time grids.

Paths are generated by the Euler recursion

    X(i+1) = X(i) + b(t_i, X_i) dt + sigma(t_i, X_i) sqrt(dt) Z_i

with an optional jump component. A path's jump time is snapped to the first
grid point at or after it, and the jump is applied after that step's diffusion
increment. Alongside the observed path we retain the jump-free accumulation of
the same realized increments (the latent continuous component), which downstream
oracle computations evaluate in place of the observed states.

Drift and diffusion may be plain floats (the common case, simulated fully
vectorized) or callables (t, x) -> value, simulated with a per-step loop with
coefficients evaluated at the observed pre-jump state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np

from .errors import ConfigurationError, SimulationOverflowError
from .rng import path_rng

Coefficient = Union[float, Callable[[float, float], float]]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, horizon] into n_steps steps."""

    horizon: float
    n_steps: int
    dt: float
    times: np.ndarray  # (n_steps + 1,), times[0] = 0, times[-1] = horizon

    def __post_init__(self):
        self.times.setflags(write=False)


def build_grid(horizon: float, n_steps: int) -> TimeGrid:
    """Build the uniform grid with dt = horizon / n_steps.

    Raises ConfigurationError for horizon <= 0 or n_steps < 2.
    """
    if not math.isfinite(horizon) or horizon <= 0:
        raise ConfigurationError(f"horizon must be positive and finite, got {horizon}")
    if int(n_steps) != n_steps or n_steps < 2:
        raise ConfigurationError(f"n_steps must be an integer >= 2, got {n_steps}")
    n_steps = int(n_steps)
    times = np.linspace(0.0, float(horizon), n_steps + 1)
    return TimeGrid(horizon=float(horizon), n_steps=n_steps,
                    dt=float(horizon) / n_steps, times=times)


@dataclass(frozen=True)
class NoJumps:
    pass


@dataclass(frozen=True)
class SingleUniformJump:
    """Exactly one jump per path, at a time uniform over the horizon."""


@dataclass(frozen=True)
class PoissonRate:
    """Jumps arrive as Bernoulli(rate * dt) per step; requires rate * dt < 0.1."""

    rate: float


JumpLaw = Union[NoJumps, SingleUniformJump, PoissonRate]


@dataclass(frozen=True)
class JumpDiffusionSpec:
    """Coefficients, jump law, and initial state of a scalar jump diffusion."""

    drift: Coefficient
    diffusion: Coefficient
    jump_size: Callable[[float, float], float]  # (time, pre-jump state) -> size
    jump_law: JumpLaw
    x0: float

    def __post_init__(self):
        if not math.isfinite(self.x0):
            raise ConfigurationError(f"x0 must be finite, got {self.x0}")
        if isinstance(self.diffusion, (int, float)) and self.diffusion < 0:
            raise ConfigurationError(f"constant diffusion must be >= 0, got {self.diffusion}")
        if isinstance(self.jump_law, PoissonRate) and self.jump_law.rate < 0:
            raise ConfigurationError("Poisson rate must be >= 0")

    @property
    def has_constant_coefficients(self) -> bool:
        return isinstance(self.drift, (int, float)) and isinstance(self.diffusion, (int, float))


class JumpEvent(NamedTuple):
    time: float
    pre_state: float
    size: float


@dataclass(frozen=True)
class PathSample:
    """One simulated trajectory with its latent continuous component and jump ledger."""

    grid: TimeGrid
    observed: np.ndarray         # (n+1,)
    continuous_part: np.ndarray  # (n+1,), jump-free accumulation of the same increments
    jump_events: tuple[JumpEvent, ...]
    seed_tag: str = ""

    def __post_init__(self):
        self.observed.setflags(write=False)
        self.continuous_part.setflags(write=False)

    def jump_flags(self) -> np.ndarray:
        """0/1 per grid point: 1 where at least one jump landed."""
        flags = np.zeros(self.grid.n_steps + 1, dtype=int)
        for event in self.jump_events:
            flags[_snap_index(self.grid.times, event.time)] = 1
        return flags


def sample_single_jump_time(rng: np.random.Generator) -> float:
    """Uniform draw on the open interval (0, 1)."""
    u = float(rng.random())
    while u == 0.0:
        u = float(rng.random())
    return u


def _snap_index(times: np.ndarray, jump_time: float) -> int:
    """Index of the first grid point >= jump_time."""
    return int(np.searchsorted(times, jump_time, side="left"))


def _jump_schedule(spec: JumpDiffusionSpec, grid: TimeGrid,
                   rng: np.random.Generator) -> list[tuple[int, float]]:
    """Jump grid indices and event times for one path.

    Drawn after the path's normal increments so the Brownian part of a path
    is identical across jump laws for the same stream.
    """
    law = spec.jump_law
    if isinstance(law, NoJumps):
        return []
    if isinstance(law, SingleUniformJump):
        u = sample_single_jump_time(rng) * grid.horizon
        return [(_snap_index(grid.times, u), u)]
    if isinstance(law, PoissonRate):
        p = law.rate * grid.dt
        if p >= 0.1:
            raise ConfigurationError(
                f"PoissonRate requires rate*dt < 0.1 (one jump per cell); got {p:.4g}")
        flags = rng.random(grid.n_steps) < p
        return [(i + 1, grid.times[i + 1]) for i in np.flatnonzero(flags)]
    raise ConfigurationError(f"unknown jump law {law!r}")


def _simulate_constant(spec: JumpDiffusionSpec, grid: TimeGrid, z: np.ndarray,
                       schedule: list[tuple[int, float]]):
    b = float(spec.drift)
    s = float(spec.diffusion)
    inc = b * grid.dt + s * math.sqrt(grid.dt) * z
    cont = np.empty(grid.n_steps + 1)
    cont[0] = spec.x0
    np.cumsum(inc, out=cont[1:])
    cont[1:] += spec.x0
    observed = cont.copy()
    events = []
    for k, t_evt in schedule:
        pre = float(observed[k])
        size = float(spec.jump_size(t_evt, pre))
        observed[k:] += size
        events.append(JumpEvent(t_evt, pre, size))
    return observed, cont, events


def _simulate_looped(spec: JumpDiffusionSpec, grid: TimeGrid, z: np.ndarray,
                     schedule: list[tuple[int, float]]):
    jumps_at = {}
    for k, t_evt in schedule:
        jumps_at.setdefault(k, []).append(t_evt)
    drift = spec.drift if callable(spec.drift) else (lambda t, x: spec.drift)
    diff = spec.diffusion if callable(spec.diffusion) else (lambda t, x: spec.diffusion)
    n = grid.n_steps
    sq = math.sqrt(grid.dt)
    observed = np.empty(n + 1)
    cont = np.empty(n + 1)
    observed[0] = cont[0] = spec.x0
    x = xc = spec.x0
    events = []
    for i in range(n):
        t = grid.times[i]
        s = diff(t, x)
        if s < 0:
            raise ConfigurationError(f"diffusion({t!r}, {x!r}) = {s} < 0")
        step = drift(t, x) * grid.dt + s * sq * z[i]
        x += step
        xc += step
        for t_evt in jumps_at.get(i + 1, ()):
            pre = x
            size = float(spec.jump_size(t_evt, pre))
            x += size
            events.append(JumpEvent(t_evt, pre, size))
        if not math.isfinite(x):
            raise SimulationOverflowError(
                f"state became non-finite at step {i + 1} (t={grid.times[i + 1]:.6g})",
                step_index=i + 1)
        observed[i + 1] = x
        cont[i + 1] = xc
    return observed, cont, events


def simulate_path(spec: JumpDiffusionSpec, grid: TimeGrid,
                  rng: np.random.Generator, seed_tag: str = "") -> PathSample:
    """Simulate one path. Deterministic given (spec, grid, generator state)."""
    z = rng.standard_normal(grid.n_steps)
    schedule = _jump_schedule(spec, grid, rng)
    if spec.has_constant_coefficients:
        observed, cont, events = _simulate_constant(spec, grid, z, schedule)
        bad = np.flatnonzero(~np.isfinite(observed))
        if bad.size:
            raise SimulationOverflowError(
                f"state became non-finite at step {bad[0]}", step_index=int(bad[0]))
    else:
        observed, cont, events = _simulate_looped(spec, grid, z, schedule)
    return PathSample(grid=grid, observed=observed, continuous_part=cont,
                      jump_events=tuple(events), seed_tag=seed_tag)


def simulate_seeded(spec: JumpDiffusionSpec, grid: TimeGrid, master_seed: int,
                    episode: int = 0, path: int = 0) -> PathSample:
    """Simulate the path of stream (master_seed, episode, path)."""
    return simulate_path(spec, grid, path_rng(master_seed, episode, path),
                         seed_tag=f"{master_seed}/{episode}/{path}")


@dataclass(frozen=True)
class PathBatch:
    """Dense arrays for a batch of paths sharing one spec and grid.

    pre_jump holds the left limits: the observed states with the jump landing
    at each grid point backed out. Jump records are flattened across paths.
    """

    grid: TimeGrid
    observed: np.ndarray    # (paths, n+1)
    continuous: np.ndarray  # (paths, n+1)
    pre_jump: np.ndarray    # (paths, n+1)
    jump_path: np.ndarray   # (events,) path row of each jump
    jump_step: np.ndarray   # (events,) grid index of each jump
    jump_pre: np.ndarray    # (events,) pre-jump state
    jump_size: np.ndarray   # (events,) jump size

    @property
    def n_paths(self) -> int:
        return self.observed.shape[0]


def simulate_batch(spec: JumpDiffusionSpec, grid: TimeGrid, master_seed: int,
                   episode: int, n_paths: int, path_offset: int = 0) -> PathBatch:
    """Simulate n_paths paths with per-path streams (master_seed, episode, offset+i).

    Row i reproduces simulate_seeded(spec, grid, master_seed, episode,
    path_offset + i) bit for bit, so results do not depend on batch or chunk
    boundaries.
    """
    n = grid.n_steps
    z = np.empty((n_paths, n))
    schedules = []
    for i in range(n_paths):
        rng = path_rng(master_seed, episode, path_offset + i)
        z[i] = rng.standard_normal(n)
        schedules.append(_jump_schedule(spec, grid, rng))

    jp, js, jpre, jsz = [], [], [], []
    if spec.has_constant_coefficients:
        inc = float(spec.drift) * grid.dt + float(spec.diffusion) * math.sqrt(grid.dt) * z
        cont = np.empty((n_paths, n + 1))
        cont[:, 0] = spec.x0
        np.cumsum(inc, axis=1, out=cont[:, 1:])
        cont[:, 1:] += spec.x0
        observed = cont.copy()
        for i, schedule in enumerate(schedules):
            for k, t_evt in schedule:
                pre = float(observed[i, k])
                size = float(spec.jump_size(t_evt, pre))
                observed[i, k:] += size
                jp.append(i); js.append(k); jpre.append(pre); jsz.append(size)
        if not np.isfinite(observed).all():
            bad = np.argwhere(~np.isfinite(observed))[0]
            raise SimulationOverflowError(
                f"path {path_offset + bad[0]} became non-finite at step {bad[1]}",
                step_index=int(bad[1]))
    else:
        observed = np.empty((n_paths, n + 1))
        cont = np.empty((n_paths, n + 1))
        for i, schedule in enumerate(schedules):
            obs_i, cont_i, events = _simulate_looped(spec, grid, z[i], schedule)
            observed[i] = obs_i
            cont[i] = cont_i
            for event in events:
                jp.append(i); js.append(_snap_index(grid.times, event.time))
                jpre.append(event.pre_state); jsz.append(event.size)

    pre_jump = observed.copy()
    jump_path = np.asarray(jp, dtype=int)
    jump_step = np.asarray(js, dtype=int)
    jump_pre = np.asarray(jpre, dtype=float)
    jump_size = np.asarray(jsz, dtype=float)
    # back out sizes at landing points only; earlier jumps stay folded in
    np.subtract.at(pre_jump, (jump_path, jump_step), jump_size)
    return PathBatch(grid=grid, observed=observed, continuous=cont, pre_jump=pre_jump,
                     jump_path=jump_path, jump_step=jump_step,
                     jump_pre=jump_pre, jump_size=jump_size)


def doubling_jump_spec(x0: float = 0.1) -> JumpDiffusionSpec:
    """Standard Brownian state that doubles at one uniformly placed jump.

    dX = dW + X dN with a single uniform jump time: the jump size equals the
    pre-jump state. This is the process driving the simulation study.
    """
    return JumpDiffusionSpec(drift=0.0, diffusion=1.0,
                             jump_size=lambda t, x_pre: x_pre,
                             jump_law=SingleUniformJump(), x0=x0)


def path_to_csv(path: PathSample, destination) -> None:
    """Write `t,observed,continuous,jump_flag` rows at 17 significant digits."""
    flags = path.jump_flags()
    lines = ["t,observed,continuous,jump_flag"]
    for t, x, xc, f in zip(path.grid.times, path.observed, path.continuous_part, flags):
        lines.append(f"{t:.17g},{x:.17g},{xc:.17g},{f:d}")
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w") as fh:
            fh.write(text)
