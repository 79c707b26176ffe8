"""Drift and diffusion assembly for the curvature-length system.

State is the pair (f, L): the rescaled curvature f(r) = k(rL) on the unit
parameter interval together with the curve length L.  Both flows evolve

    df = dss V + f^2 V        (per unit time, s = arclength, dss = (1/L^2) drr)
    dL = -L * integral(f V dr)

where the normal velocity is V = -(dss f + f^3/2) + noise for the Willmore
(free elastic) flow and V = -dss f + noise for curve diffusion, plus the
arclength transport induced by evolving on the fixed parameter interval:
points of fixed r correspond to material points s = rL whose arclength
coordinate drifts as the curve moves, contributing

    ( cumint(f V)(r) + r * Ldot / L ) * df/dr

to the f-equation.  With this transport term the total turning L*mean(f) is
conserved along every noise mode exactly (each mode's f-row integrates to
-b_L/L), which is what makes the closed-curve invariants hold pathwise and
not just in expectation.

Noise rows are assembled per basis mode with unit amplitude: b_L is exactly
-2*pi for closed curves under scalar noise (the total turning of a simple
closed curve), and -L*integral(f*phi_l) otherwise.  The global amplitude
multiplies the Brownian increments in the stepper, and enters the
Stratonovich-to-Ito correction quadratically.  The correction is the exact
directional derivative of each diffusion row along itself,

    C = (a^2/2) * sum_l  D(b_l)[(b_f,l, b_L,l)],

so the Ito drift equals the Stratonovich drift plus C by construction.

The fourth-order term -(1/L^4) drrrr f is returned separately (stiff) so the
stepper can treat it implicitly; everything else, corrections included, is
in the explicit part.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import CLOSED, Grid
from .noise import SCALAR, NoiseModel, basis_eval

WILLMORE = "willmore"
CURVE_DIFFUSION = "curve_diffusion"

_KINDS = (WILLMORE, CURVE_DIFFUSION)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FlowSpec:
    """Which flow, on which topology, driven by which noise."""

    kind: str
    topology: str
    noise: NoiseModel

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"flow kind must be one of {_KINDS}, got {self.kind!r}")
        if self.topology not in (CLOSED, "open"):
            raise ValueError(f"topology must be 'closed' or 'open', got {self.topology!r}")

    @property
    def uses_turning_shortcut(self):
        """Closed curves with scalar noise: integral(f phi) dr * L is the total
        turning, which is 2*pi for a simple closed curve; the length row is
        the constant -2*pi rather than a state-dependent integral."""
        return self.topology == CLOSED and self.noise.mode == SCALAR


@dataclass
class State:
    """Rescaled curvature field, curve length, and time."""

    f: np.ndarray
    length: float
    time: float = 0.0

    def copy(self):
        return State(np.array(self.f, dtype=float, copy=True), float(self.length), float(self.time))


@dataclass
class DriftSplit:
    """Ito drift of (f, L), split for semi-implicit stepping.

    stiff is the constant-coefficient -(1/L^4) drrrr f contribution;
    explicit_f carries every other f term including the Ito corrections;
    explicit_L is the full L drift.
    """

    stiff: np.ndarray
    explicit_f: np.ndarray
    explicit_L: float


@dataclass
class DiffusionRow:
    """Unit-amplitude noise coefficients of one mode: a field on f, a real on L."""

    b_f: np.ndarray
    b_L: float


@dataclass
class _Assembly:
    """Everything one assembly pass produces, in batched array form."""

    stiff: np.ndarray
    det_f: np.ndarray
    det_L: np.ndarray
    corr_f: np.ndarray
    corr_L: np.ndarray
    rows_beta: list = field(default_factory=list)
    rows_lam: list = field(default_factory=list)


def _check_state(spec, grid, state):
    if spec.topology != grid.topology:
        raise ValueError(
            f"flow topology {spec.topology!r} does not match grid topology {grid.topology!r}"
        )
    f = grid.check_field(state.f)
    if f.ndim != 1:
        raise ValueError("State.f must be a single field; stack batches via the integrator")
    length = float(state.length)
    if not (length > 0.0 and np.isfinite(length)):
        raise ValueError(f"state length must be positive and finite, got {state.length}")
    return f, length


def assemble(spec, grid, f, length, include_ito=True, stiff_sign=-1.0):
    """Assemble drift pieces and diffusion rows for (possibly stacked) states.

    f has shape (..., n); length is a scalar for a single state or an array
    of the batch shape.  stiff_sign is a diagnostic knob: -1.0 is the
    dissipative operator, +1.0 flips the fourth-order term so regression
    tests can confirm that the energy-dissipation check catches the
    backward-parabolic variant.

    Returns an _Assembly whose fields broadcast over the batch shape.
    """
    if spec.topology != grid.topology:
        raise ValueError(
            f"flow topology {spec.topology!r} does not match grid topology {grid.topology!r}"
        )
    f = grid.check_field(np.asarray(f, dtype=float))
    batched = f.ndim > 1
    if batched:
        length = np.asarray(length, dtype=float)
        if length.shape != f.shape[:-1]:
            raise ValueError(
                f"length batch shape {length.shape} does not match field batch {f.shape[:-1]}"
            )
        lc = length
        lcol = length[..., None]
    else:
        lc = float(length)
        lcol = lc
    if not np.all(np.asarray(lc) > 0.0):
        raise ValueError("length must be positive")

    if grid.dealias:
        prod = grid.product
    else:

        def prod(*fs):
            out = fs[0]
            for g in fs[1:]:
                out = out * g
            return out

    def col(x):
        return x[..., None] if batched else x

    r = grid.nodes
    noise = spec.noise
    amp = noise.amplitude
    willmore = spec.kind == WILLMORE

    f1 = grid.deriv(f, 1)
    f2 = grid.deriv(f, 2)
    f4 = grid.deriv(f, 4)
    l2 = lcol * lcol
    l4 = l2 * l2

    if willmore:
        v = -(f2 / l2 + 0.5 * prod(f, f, f))
    else:
        v = -(f2 / l2)
    det_l = -lc * grid.integrate(f * v)
    transport = grid.cumint(f * v) + r * col(det_l / lc)
    if willmore:
        det_f = (
            -2.5 * prod(f, f, f2) / l2
            - 3.0 * prod(f, f1, f1) / l2
            - 0.5 * prod(f, f, f, f, f)
            + transport * f1
        )
    else:
        det_f = -prod(f, f, f2) / l2 + transport * f1
    stiff = stiff_sign * f4 / l4

    out = _Assembly(
        stiff=stiff,
        det_f=det_f,
        det_L=det_l,
        corr_f=np.zeros_like(f),
        corr_L=np.zeros_like(np.asarray(det_l, dtype=float)),
    )

    shortcut = spec.uses_turning_shortcut
    for l in range(1, noise.n_modes + 1):
        phi = basis_eval(noise, grid, l, 0)
        phi2 = basis_eval(noise, grid, l, 2)
        mode_integral = grid.integrate(f * phi)
        if shortcut:
            lam = -TWO_PI * np.ones_like(np.asarray(det_l, dtype=float))
            if not batched:
                lam = -TWO_PI
        else:
            lam = -lc * mode_integral
        coef = grid.cumint(f * phi) + r * col(lam / lc)
        beta = phi2 / l2 + prod(f, f) * phi + coef * f1
        out.rows_beta.append(beta)
        out.rows_lam.append(lam)

        if include_ito and amp > 0.0:
            if shortcut:
                dlam = np.zeros_like(np.asarray(det_l, dtype=float))
                if not batched:
                    dlam = 0.0
            else:
                dlam = -lam * mode_integral - lc * grid.integrate(beta * phi)
            phi1 = basis_eval(noise, grid, l, 1)
            phi3 = basis_eval(noise, grid, l, 3)
            # d/dr of beta by the chain rule; the basis derivatives are
            # analytic so the r-linear transport coefficient differentiates
            # exactly instead of through the periodic transform.
            beta1 = (
                phi3 / l2
                + 2.0 * f * f1 * phi
                + prod(f, f) * phi1
                + (f * phi + col(lam / lc)) * f1
                + coef * f2
            )
            dbeta = (
                -2.0 * phi2 * col(lam) / (l2 * lcol)
                + 2.0 * f * phi * beta
                + (grid.cumint(beta * phi) + r * col(dlam / lc) - r * col(lam * lam / (lc * lc))) * f1
                + coef * beta1
            )
            out.corr_f = out.corr_f + dbeta
            out.corr_L = out.corr_L + dlam

    if include_ito and amp > 0.0:
        half_var = 0.5 * amp * amp
        out.corr_f = half_var * out.corr_f
        out.corr_L = half_var * out.corr_L
    return out


def assemble_system(spec, grid, state, include_ito=True, stiff_sign=-1.0):
    """DriftSplit and diffusion rows for one State.

    With include_ito=False the explicit drift omits the Stratonovich-to-Ito
    correction (the Stratonovich drift), which is what the Heun stepper
    integrates.
    """
    f, length = _check_state(spec, grid, state)
    a = assemble(spec, grid, f, length, include_ito=include_ito, stiff_sign=stiff_sign)
    split = DriftSplit(
        stiff=a.stiff,
        explicit_f=a.det_f + a.corr_f,
        explicit_L=float(a.det_L + a.corr_L),
    )
    rows = [DiffusionRow(b_f=b, b_L=float(lam)) for b, lam in zip(a.rows_beta, a.rows_lam)]
    return split, rows


def assemble_drift(spec, grid, state):
    """Full Ito drift of (f, L), split into stiff and explicit parts."""
    split, _ = assemble_system(spec, grid, state)
    return split


def assemble_diffusion(spec, grid, state):
    """Unit-amplitude diffusion rows, one per noise mode."""
    _, rows = assemble_system(spec, grid, state)
    return rows


def ito_correction(spec, grid, state):
    """The Stratonovich-to-Ito extra drift alone, as (field on f, real on L).

    assemble_drift's explicit parts equal the include_ito=False assembly plus
    exactly these values (same code path, same floating-point operations).
    """
    f, length = _check_state(spec, grid, state)
    a = assemble(spec, grid, f, length, include_ito=True)
    return a.corr_f, float(a.corr_L)
