"""Time stepping for the nonlocal Allen-Cahn family.

Every variant is advanced in the form

    phi_t = Laplacian phi - W'(phi) / eps^2 + lambda(t) * g(phi)

with ``g = sqrt(2 W(phi)) / eps`` (Golovaty, Brassel-Bretin), ``g = 1 / eps``
(Rubinstein-Sternberg) or ``g = 0`` (plain Allen-Cahn). The multiplier is
either the variant's closed-form quotient evaluated at the old time level
("analytic") or the scalar that makes the new phase volume ``integral k(phi)``
equal the initial one ("conservative").

Schemes: explicit Euler; semi-implicit Euler with the Laplacian inverted in
Fourier space; and its two-step BDF2 counterpart, which extrapolates the
reaction and forcing terms linearly and removes the O(dt / eps^2) interface
lag of the one-step scheme. The two-step scheme starts (and restarts after a
change of ``dt``) with one semi-implicit Euler step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .diagnostics import DiagnosticsRecord, HistoryEntry, energy, make_record, volume
from .potential import clamp_events, eval_dW, eval_k, eval_sqrt2W, eval_W
from .torus_field import GridSpec

__all__ = [
    "EquationVariant",
    "Scheme",
    "MultiplierMode",
    "StepperSpec",
    "EvolutionState",
    "NumericalError",
    "DegenerateStateError",
    "ConservationRootError",
    "StabilityError",
    "StepFailure",
    "lambda_golovaty",
    "lambda_rs",
    "lambda_bb",
    "analytic_multiplier",
    "stability_bound",
    "initial_state",
    "step",
    "run",
]

DENOMINATOR_GUARD = 1e-14
OVERSHOOT_LEVEL = 1.0 + 1e-6


class EquationVariant(str, enum.Enum):
    GOLOVATY = "golovaty"
    RUBINSTEIN_STERNBERG = "rubinstein-sternberg"
    BRASSEL_BRETIN = "brassel-bretin"
    PLAIN_ALLEN_CAHN = "plain-allen-cahn"

    @property
    def has_multiplier(self) -> bool:
        return self is not EquationVariant.PLAIN_ALLEN_CAHN


class Scheme(str, enum.Enum):
    EXPLICIT = "explicit-euler"
    SEMI_IMPLICIT = "semi-implicit-spectral"
    # second-order IMEX: BDF2 for the Laplacian, extrapolated nonlinear terms
    SEMI_IMPLICIT_BDF2 = "semi-implicit-bdf2"


class MultiplierMode(str, enum.Enum):
    ANALYTIC = "analytic"
    CONSERVATIVE = "conservative"


class NumericalError(RuntimeError):
    """A step could not be completed."""


class DegenerateStateError(NumericalError):
    """Multiplier denominator vanishes (phi is close to +-1 everywhere)."""


class ConservationRootError(NumericalError):
    """The conservative multiplier root search failed.

    ``bracket`` holds the evaluated ``(lambda, Q(lambda))`` pairs.
    """

    def __init__(self, message, bracket=()):
        super().__init__(message)
        self.bracket = list(bracket)


class StabilityError(ValueError):
    """Time step above the documented stability bound."""


class StepFailure(NumericalError):
    def __init__(self, step_index: int, cause: Exception):
        super().__init__(f"step {step_index} failed: {cause}")
        self.step_index = step_index
        self.cause = cause


@dataclass(frozen=True)
class StepperSpec:
    scheme: Scheme = Scheme.SEMI_IMPLICIT
    dt: float = 1e-5
    multiplier_mode: MultiplierMode = MultiplierMode.ANALYTIC
    conservative_tol: float = 1e-12
    safety: float = 0.2
    max_iter: int = 50

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "multiplier_mode", MultiplierMode(self.multiplier_mode))
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if not self.conservative_tol > 0:
            raise ValueError("conservative_tol must be positive")


def stability_bound(stepper: StepperSpec, grid: GridSpec, eps: float) -> float:
    """Largest admissible ``dt``.

    Explicit Euler: ``safety * min(h^2 / (2d), eps^2 / 2)``. Semi-implicit
    (one- or two-step): the diffusion limit is removed, ``safety * eps^2 / 2``.
    """
    reaction = eps * eps / 2.0
    if stepper.scheme is Scheme.EXPLICIT:
        return stepper.safety * min(grid.h**2 / (2 * grid.d), reaction)
    return stepper.safety * reaction


def check_stability(stepper: StepperSpec, grid: GridSpec, eps: float) -> None:
    bound = stability_bound(stepper, grid, eps)
    if stepper.dt > bound * (1.0 + 1e-12):
        raise StabilityError(
            f"dt = {stepper.dt:.4g} exceeds the {stepper.scheme.value} stability bound {bound:.4g}"
        )


@dataclass(frozen=True)
class _Multistep:
    """Old-level terms kept by the two-step scheme."""

    phi: np.ndarray
    reaction: np.ndarray
    forcing: Optional[np.ndarray]
    lam: float
    dt: float


@dataclass
class EvolutionState:
    phi: np.ndarray
    eps: float
    variant: EquationVariant
    t: float = 0.0
    step: int = 0
    volume0: float = 0.0
    lambda_sq_accum: float = 0.0
    dissipation_accum: float = 0.0
    overshoot_count: int = 0
    clamp_count: int = 0
    last_lambda: float = 0.0
    multistep: Optional[_Multistep] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.variant = EquationVariant(self.variant)
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")


def initial_state(phi0, eps: float, variant, grid: GridSpec, t0: float = 0.0) -> EvolutionState:
    phi0 = grid.check(phi0, "initial field").copy()
    return EvolutionState(phi0, eps, EquationVariant(variant), t=t0, volume0=volume(phi0, grid))


# -- multipliers -----------------------------------------------------------


def lambda_golovaty(phi, eps: float, grid: GridSpec, disc=None) -> tuple[float, float]:
    """Golovaty multiplier in its two equivalent forms.

    Form A: ``-integral sqrt(2W)(eps Lap phi - W'/eps) / (2 integral W)``.
    Form B (after integrating by parts):
    ``-2 integral phi (eps |grad phi|^2 / 2 + W / eps) / integral W``.
    Form A drives the dynamics.
    """
    phi = grid.check(phi)
    form_a, w_int = _golovaty_form_a(phi, eps, grid, disc)
    edens = 0.5 * eps * grid.grad_norm_sq(phi, disc) + eval_W(phi) / eps
    form_b = -2.0 * grid.integrate(phi * edens) / w_int
    return form_a, form_b


def _golovaty_form_a(phi, eps, grid, disc):
    w_int = grid.integrate(eval_W(phi))
    if w_int <= DENOMINATOR_GUARD:
        raise DegenerateStateError(f"integral of W is {w_int:.3g}; phi is ~ +-1 everywhere")
    chem = eps * grid.laplacian(phi, disc) - eval_dW(phi) / eps
    return -grid.integrate(eval_sqrt2W(phi) * chem) / (2.0 * w_int), w_int


def lambda_rs(phi, eps: float, grid: GridSpec) -> float:
    """Mean of ``W'(phi) / eps`` (the torus has unit volume)."""
    return grid.integrate(eval_dW(grid.check(phi)) / eps)


def lambda_bb(phi, eps: float, grid: GridSpec) -> float:
    phi = grid.check(phi)
    denom = grid.integrate(eval_sqrt2W(phi))
    if denom <= DENOMINATOR_GUARD:
        raise DegenerateStateError(f"integral of sqrt(2W) is {denom:.3g}")
    return grid.integrate(eval_dW(phi) / eps) / denom


def analytic_multiplier(variant, phi, eps: float, grid: GridSpec, disc=None) -> float:
    variant = EquationVariant(variant)
    if variant is EquationVariant.GOLOVATY:
        return _golovaty_form_a(grid.check(phi), eps, grid, disc)[0]
    if variant is EquationVariant.RUBINSTEIN_STERNBERG:
        return lambda_rs(phi, eps, grid)
    if variant is EquationVariant.BRASSEL_BRETIN:
        return lambda_bb(phi, eps, grid)
    return 0.0


def _forcing(variant: EquationVariant, phi: np.ndarray, eps: float) -> Optional[np.ndarray]:
    if variant is EquationVariant.PLAIN_ALLEN_CAHN:
        return None
    if variant is EquationVariant.RUBINSTEIN_STERNBERG:
        return np.full(phi.shape, 1.0 / eps)
    return eval_sqrt2W(phi) / eps


# -- conservative root -----------------------------------------------------


def _conservative_lambda(base, direction, target, lam0, grid, tol, max_iter):
    """Solve ``integral k(base + lam * direction) = target`` for ``lam``.

    Secant iteration seeded at ``lam0``; falls back to bracketing and
    bisection when the secant stalls or leaves the bracket.
    """

    def q(lam):
        return grid.integrate(eval_k(base + lam * direction)) - target

    evals = []

    def record(lam):
        val = q(lam)
        evals.append((lam, val))
        return val

    scale = max(abs(lam0), 1.0)
    x0, f0 = lam0, record(lam0)
    if abs(f0) <= tol:
        return x0, len(evals)
    x1 = lam0 + 1e-3 * scale
    f1 = record(x1)
    for _ in range(max_iter):
        if abs(f1) <= tol:
            return x1, len(evals)
        if f1 == f0:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        if not math.isfinite(x2) or abs(x2 - lam0) > 1e6 * scale:
            break
        x0, f0 = x1, f1
        x1, f1 = x2, record(x2)
        if len(evals) >= max_iter:
            break

    # bisection fallback on the best sign-changing pair
    pos = [(l, v) for l, v in evals if v > 0]
    neg = [(l, v) for l, v in evals if v < 0]
    width = 1e-3 * scale
    while (not pos or not neg) and len(evals) < max_iter:
        width *= 4.0
        for lam in (lam0 - width, lam0 + width):
            v = record(lam)
            if abs(v) <= tol:
                return lam, len(evals)
            (pos if v > 0 else neg).append((lam, v))
    if not pos or not neg:
        raise ConservationRootError("could not bracket the conservative multiplier", evals)
    a = min(pos, key=lambda p: abs(p[1]))[0]
    b = min(neg, key=lambda p: abs(p[1]))[0]
    while len(evals) < max_iter:
        mid = 0.5 * (a + b)
        v = record(mid)
        if abs(v) <= tol:
            return mid, len(evals)
        if v > 0:
            a = mid
        else:
            b = mid
    raise ConservationRootError(
        f"conservative multiplier did not converge in {max_iter} evaluations "
        f"(bracket [{min(a, b):.6g}, {max(a, b):.6g}])",
        evals,
    )


# -- stepping --------------------------------------------------------------


def step(state: EvolutionState, stepper: StepperSpec, grid: GridSpec, disc=None, dt: float | None = None) -> EvolutionState:
    """Advance one time step and return the new state (input untouched)."""
    dt = stepper.dt if dt is None else dt
    check_stability(stepper, grid, state.eps)
    phi, eps, variant = state.phi, state.eps, state.variant
    clamps_before = clamp_events()

    g = _forcing(variant, phi, eps)
    lam = analytic_multiplier(variant, phi, eps, grid, disc) if g is not None else 0.0
    reaction = -eval_dW(phi) / eps**2

    prev = state.multistep
    two_step = (
        stepper.scheme is Scheme.SEMI_IMPLICIT_BDF2
        and prev is not None
        and abs(prev.dt - dt) <= 1e-12 * dt
    )
    if stepper.scheme is Scheme.EXPLICIT:
        base = phi + dt * (grid.laplacian(phi, disc) + reaction)
        direction = dt * g if g is not None else None
    elif two_step:
        # (3 phi1 - 4 phi0 + phi_old) / (2 dt) = Lap phi1 + 2 N0 - N_old
        c = 2.0 * dt / 3.0
        rhs = (4.0 * phi - prev.phi) / 3.0 + c * (2.0 * reaction - prev.reaction)
        if g is None:
            direction = None
        elif stepper.multiplier_mode is MultiplierMode.CONSERVATIVE:
            direction = grid.solve_helmholtz(c * (2.0 * g - prev.forcing), c, disc)
        else:
            rhs = rhs + c * (2.0 * lam * g - prev.lam * prev.forcing)
            direction = None
        base = grid.solve_helmholtz(rhs, c, disc)
    else:
        base = grid.solve_helmholtz(phi + dt * reaction, dt, disc)
        if g is None:
            direction = None
        elif variant is EquationVariant.RUBINSTEIN_STERNBERG:
            direction = dt * g  # constants are unchanged by the solve
        else:
            direction = grid.solve_helmholtz(dt * g, dt, disc)

    if direction is not None and stepper.multiplier_mode is MultiplierMode.CONSERVATIVE:
        lam, _ = _conservative_lambda(
            base, direction, state.volume0, lam, grid, stepper.conservative_tol, stepper.max_iter
        )
        new_phi = base + lam * direction
    elif direction is not None:
        new_phi = base + lam * direction
    else:
        new_phi = base

    if not np.all(np.isfinite(new_phi)):
        raise NumericalError(f"non-finite field after step at t={state.t + dt:.6g}")
    rate = (new_phi - phi) / dt
    overshoot = int(np.max(np.abs(new_phi)) > OVERSHOOT_LEVEL)
    return replace(
        state,
        phi=new_phi,
        t=state.t + dt,
        step=state.step + 1,
        lambda_sq_accum=state.lambda_sq_accum + dt * lam * lam,
        dissipation_accum=state.dissipation_accum + dt * grid.integrate(eps * rate * rate),
        overshoot_count=state.overshoot_count + overshoot,
        clamp_count=state.clamp_count + clamp_events() - clamps_before,
        last_lambda=lam,
        multistep=(
            _Multistep(phi, reaction, g, lam, dt) if stepper.scheme is Scheme.SEMI_IMPLICIT_BDF2 else None
        ),
    )


def run(
    state0: EvolutionState,
    stepper: StepperSpec,
    grid: GridSpec,
    T: float,
    cadence: int = 1,
    disc=None,
    history: list | None = None,
    history_every: int | None = None,
    on_record: Callable[[EvolutionState, DiagnosticsRecord], None] | None = None,
) -> tuple[EvolutionState, list[DiagnosticsRecord]]:
    """Integrate to time ``T`` with a fixed step (the last one shortened).

    A :class:`DiagnosticsRecord` is produced at the start, every ``cadence``
    steps and at ``T``. When ``history`` is a list, ``HistoryEntry`` snapshots
    are appended at the start, every ``history_every`` steps and at ``T``.
    """
    if T < state0.t:
        raise ValueError(f"final time {T} precedes the initial time {state0.t}")
    if cadence < 1:
        raise ValueError("cadence must be a positive integer")
    check_stability(stepper, grid, state0.eps)
    dt = stepper.dt
    span = T - state0.t
    nsteps = int(math.ceil(span / dt - 1e-9)) if span > 0 else 0

    def snap(s):
        if history is not None:
            history.append(HistoryEntry(s.t, s.phi.copy(), s.lambda_sq_accum))

    def emit(s, prev=None, dt_last=None):
        rec = make_record(s, grid, disc, previous=prev, dt_last=dt_last)
        records.append(rec)
        if on_record is not None:
            on_record(s, rec)

    records: list[DiagnosticsRecord] = []
    state = state0
    emit(state)
    snap(state)
    for i in range(1, nsteps + 1):
        t_target = T if i == nsteps else state0.t + i * dt
        this_dt = t_target - state.t
        prev = state
        try:
            state = step(state, stepper, grid, disc, dt=this_dt)
        except NumericalError as exc:
            raise StepFailure(prev.step + 1, exc) from exc
        state.t = t_target
        if i % cadence == 0 or i == nsteps:
            emit(state, (prev.phi, energy(prev.phi, prev.eps, grid, disc)), this_dt)
        if history is not None and ((history_every and i % history_every == 0) or i == nsteps):
            snap(state)
    return state, records
