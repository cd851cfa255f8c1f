"""Independent split-operator Schrödinger solver on a 2D grid per branch.

Verifies the analytic engine: second-order Strang splitting with a spectral
kinetic step (exact in time for V = 0), one complex array per which-way label
(labels never couple). Optical events are not modeled on the grid; the oracle
re-initializes from the analytic field at event boundaries and checks the free
legs in between, plus fringe structure and the continuity equation.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft

from .errors import (
    BoundaryContaminationError,
    FieldPreconditionError,
    SupportOverflowError,
)
from .wavefield import WaveField, WWLabel, evaluate_many

_FFT_WORKERS = 2
_GUARD_CELLS = 4
_INIT_BOUNDARY_REL = 1e-12
_STEP_BOUNDARY_REL = 1e-8


@dataclass(frozen=True)
class GridConfig:
    """Uniform periodic grid: half-widths, point counts (powers of two), step."""

    extent: tuple[float, float]
    points: tuple[int, int]
    dt: float
    center: tuple[float, float] = (0.0, 0.0)
    external_potential: Optional[Callable] = None  # V(x, y) -> array; None means 0

    def __post_init__(self):
        for n in self.points:
            if n < 8 or (n & (n - 1)) != 0:
                raise ValueError("grid point counts must be powers of two (>= 8)")
        if not (self.extent[0] > 0 and self.extent[1] > 0 and self.dt > 0):
            raise ValueError("extent and dt must be positive")

    @property
    def spacing(self) -> tuple[float, float]:
        return (
            2.0 * self.extent[0] / self.points[0],
            2.0 * self.extent[1] / self.points[1],
        )

    def axes(self):
        dx, dy = self.spacing
        x = self.center[0] - self.extent[0] + dx * np.arange(self.points[0])
        y = self.center[1] - self.extent[1] + dy * np.arange(self.points[1])
        return x, y

    def validate_for(self, field: WaveField):
        """Resolution and stability heuristics against the field's packets."""
        s_min = min(p.sigma0 for _, p in field.terms)
        dx, dy = self.spacing
        if not (dx < s_min / 8.0 and dy < s_min / 8.0):
            raise FieldPreconditionError(
                f"grid spacing ({dx:.4g}, {dy:.4g}) must be below sigma0/8 = {s_min / 8:.4g}"
            )
        c = field.constants
        dt_max = c.mass * min(dx, dy) ** 2 / (math.pi * c.hbar)
        if not self.dt < dt_max:
            raise FieldPreconditionError(
                f"dt = {self.dt:.4g} violates the stability heuristic dt < {dt_max:.4g}"
            )


class GridState:
    """Discretized field: one complex array per which-way label, plus time."""

    def __init__(self, psis: dict[int, np.ndarray], time: float, config: GridConfig,
                 constants=None):
        from .wavefield import PhysicalConstants

        self.psis = psis
        self.time = time
        self.config = config
        self.constants = constants if constants is not None else PhysicalConstants()
        x, y = config.axes()
        self._mesh = np.meshgrid(x, y, indexing="ij")
        dx, dy = config.spacing
        kx = 2.0 * np.pi * sfft.fftfreq(config.points[0], d=dx)
        ky = 2.0 * np.pi * sfft.fftfreq(config.points[1], d=dy)
        self._k2 = (kx**2)[:, None] + (ky**2)[None, :]
        self._kx = kx[:, None]
        self._ky = ky[None, :]
        self._vgrid = None
        if config.external_potential is not None:
            self._vgrid = config.external_potential(self._mesh[0], self._mesh[1])

    @property
    def mesh(self):
        return self._mesh

    @property
    def cell_area(self) -> float:
        dx, dy = self.config.spacing
        return dx * dy

    def marginal_density(self) -> np.ndarray:
        out = np.zeros(self.config.points)
        for psi in self.psis.values():
            out += np.abs(psi) ** 2
        return out

    def norm(self) -> float:
        return float(sum(np.sum(np.abs(p) ** 2) for p in self.psis.values())) * self.cell_area

    def copy(self) -> "GridState":
        st = GridState.__new__(GridState)
        st.psis = {w: p.copy() for w, p in self.psis.items()}
        st.time = self.time
        st.config = self.config
        st.constants = self.constants
        st._mesh = self._mesh
        st._k2 = self._k2
        st._kx = self._kx
        st._ky = self._ky
        st._vgrid = self._vgrid
        return st


def init_from_analytic(field: WaveField, cfg: GridConfig, t: float) -> GridState:
    """Sample the analytic field (one array per label present) onto the grid."""
    cfg.validate_for(field)
    state = GridState({}, t, cfg, field.constants)
    X, Y = state.mesh
    for lbl in sorted(int(l) for l in field.labels_present):
        state.psis[lbl] = np.ascontiguousarray(evaluate_many(field, WWLabel(lbl), X, Y, t))
    dens = state.marginal_density()
    peak = dens.max()
    g = _GUARD_CELLS
    frame = np.concatenate(
        [dens[:g].ravel(), dens[-g:].ravel(), dens[:, :g].ravel(), dens[:, -g:].ravel()]
    )
    if frame.max() > _INIT_BOUNDARY_REL * peak:
        raise SupportOverflowError(
            f"field density at the grid boundary is {frame.max() / peak:.2e} of peak "
            f"(limit {_INIT_BOUNDARY_REL:.0e}); enlarge the extent"
        )
    return state


def _propagate(state: GridState, dt: float, n_steps: int, check_boundary: bool = True):
    """Advance all label arrays in place by n_steps of size dt."""
    c = state.constants
    if state._vgrid is None:
        kin = np.exp(-1j * c.hbar * state._k2 * dt / (2.0 * c.mass))
        for _ in range(n_steps):
            for w in sorted(state.psis):
                psi_k = sfft.fft2(state.psis[w], workers=_FFT_WORKERS)
                psi_k *= kin
                state.psis[w] = sfft.ifft2(psi_k, workers=_FFT_WORKERS)
            state.time += dt
            if check_boundary:
                _check_boundary(state)
    else:
        kin_half = np.exp(-1j * c.hbar * state._k2 * (0.5 * dt) / (2.0 * c.mass))
        pot = np.exp(-1j * state._vgrid * dt / c.hbar)
        for _ in range(n_steps):
            for w in sorted(state.psis):
                psi_k = sfft.fft2(state.psis[w], workers=_FFT_WORKERS) * kin_half
                psi = sfft.ifft2(psi_k, workers=_FFT_WORKERS) * pot
                psi_k = sfft.fft2(psi, workers=_FFT_WORKERS) * kin_half
                state.psis[w] = sfft.ifft2(psi_k, workers=_FFT_WORKERS)
            state.time += dt
            if check_boundary:
                _check_boundary(state)


def _check_boundary(state: GridState):
    dens = state.marginal_density()
    g = _GUARD_CELLS
    frame_max = max(
        dens[:g].max(), dens[-g:].max(), dens[:, :g].max(), dens[:, -g:].max()
    )
    if frame_max > _STEP_BOUNDARY_REL * dens.max():
        raise BoundaryContaminationError(
            f"density near boundary reached {frame_max / dens.max():.2e} of peak at "
            f"t={state.time:.6g}"
        )


def step(state: GridState, n_steps: int) -> GridState:
    """Strang-split evolution by n_steps of the configured dt (pure: returns new state)."""
    out = state.copy()
    _propagate(out, state.config.dt, n_steps)
    return out


def continuity_residual(state: GridState, dt_probe: float, return_details: bool = False):
    """Max-norm residual of dP/dt + div(J) on interior non-node points.

    dP/dt by symmetric difference of two oracle steps (+/- dt_probe), the
    probability current J = (hbar/m) Im(psi* grad psi) summed over labels with
    spectral derivatives. Points below 1e-6 of peak density are excluded
    (near-node stencils) and counted.
    """
    if dt_probe <= 0.0:
        raise FieldPreconditionError("dt_probe must be positive")
    c = state.constants
    fwd = state.copy()
    _propagate(fwd, dt_probe, 1, check_boundary=False)
    bwd = state.copy()
    _propagate(bwd, -dt_probe, 1, check_boundary=False)
    dpdt = (fwd.marginal_density() - bwd.marginal_density()) / (2.0 * dt_probe)

    div_j = np.zeros(state.config.points)
    for psi in state.psis.values():
        psi_k = sfft.fft2(psi, workers=_FFT_WORKERS)
        gx = sfft.ifft2(1j * state._kx * psi_k, workers=_FFT_WORKERS)
        gy = sfft.ifft2(1j * state._ky * psi_k, workers=_FFT_WORKERS)
        jx = (c.hbar / c.mass) * (psi.conj() * gx).imag
        jy = (c.hbar / c.mass) * (psi.conj() * gy).imag
        div_j += sfft.ifft2(
            1j * state._kx * sfft.fft2(jx, workers=_FFT_WORKERS)
            + 1j * state._ky * sfft.fft2(jy, workers=_FFT_WORKERS),
            workers=_FFT_WORKERS,
        ).real

    dens = state.marginal_density()
    g = _GUARD_CELLS
    mask = dens > 1e-6 * dens.max()
    mask[:g] = mask[-g:] = False
    mask[:, :g] = mask[:, -g:] = False
    excluded = int(np.count_nonzero(dens > 0) - np.count_nonzero(mask))
    residual = float(np.abs(dpdt + div_j)[mask].max())
    if return_details:
        return residual, excluded
    return residual


def fringe_scan(state: GridState, segment, samples: int) -> np.ndarray:
    """Marginal density sampled along a line segment (bilinear interpolation)."""
    (x0, y0), (x1, y1) = segment
    ts = np.linspace(0.0, 1.0, samples)
    xs = x0 + (x1 - x0) * ts
    ys = y0 + (y1 - y0) * ts
    dens = state.marginal_density()
    ax_x, ax_y = state.config.axes()
    dx, dy = state.config.spacing
    fx = (xs - ax_x[0]) / dx
    fy = (ys - ax_y[0]) / dy
    i0 = np.clip(np.floor(fx).astype(int), 0, state.config.points[0] - 2)
    j0 = np.clip(np.floor(fy).astype(int), 0, state.config.points[1] - 2)
    u = fx - i0
    v = fy - j0
    return (
        dens[i0, j0] * (1 - u) * (1 - v)
        + dens[i0 + 1, j0] * u * (1 - v)
        + dens[i0, j0 + 1] * (1 - u) * v
        + dens[i0 + 1, j0 + 1] * u * v
    )


def velocity_field(state: GridState, w: int):
    """Spectral guidance velocity (vx, vy) of one label array (NaN off-support)."""
    c = state.constants
    psi = state.psis[w]
    psi_k = sfft.fft2(psi, workers=_FFT_WORKERS)
    gx = sfft.ifft2(1j * state._kx * psi_k, workers=_FFT_WORKERS)
    gy = sfft.ifft2(1j * state._ky * psi_k, workers=_FFT_WORKERS)
    den = np.abs(psi) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        vx = (c.hbar / c.mass) * (psi.conj() * gx).imag / den
        vy = (c.hbar / c.mass) * (psi.conj() * gy).imag / den
    return vx, vy


def dump_slices(state: GridState, path):
    """Binary dump: header (magic, shape, extent, center, time, labels) + arrays.

    Little-endian; each array row-major complex128 stored as (re, im) float64
    pairs, one block per label in ascending label order.
    """
    labels = sorted(state.psis)
    with open(path, "wb") as fh:
        fh.write(b"MZGRID01")
        fh.write(
            struct.pack(
                "<qqddddd",
                state.config.points[0],
                state.config.points[1],
                state.config.extent[0],
                state.config.extent[1],
                state.config.center[0],
                state.config.center[1],
                state.time,
            )
        )
        fh.write(struct.pack("<q", len(labels)))
        for w in labels:
            fh.write(struct.pack("<q", w))
            fh.write(np.ascontiguousarray(state.psis[w], dtype="<c16").tobytes())


def load_slices(path):
    """Read back a dump_slices file: (points, extent, center, time, {label: array})."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != b"MZGRID01":
            raise ValueError("not a grid dump file")
        nx, ny, ex, ey, cx, cy, t = struct.unpack("<qqddddd", fh.read(8 * 7))
        (nl,) = struct.unpack("<q", fh.read(8))
        psis = {}
        for _ in range(nl):
            (w,) = struct.unpack("<q", fh.read(8))
            data = np.frombuffer(fh.read(nx * ny * 16), dtype="<c16")
            psis[w] = data.reshape(nx, ny).copy()
    return (nx, ny), (ex, ey), (cx, cy), t, psis


@dataclass(frozen=True)
class LegReport:
    """Oracle-vs-analytic agreement over one free leg."""

    t_start: float
    t_end: float
    l2_rel_error: float
    velocity_rel_error: float
    norm_drift: float
    n_steps: int
    points: tuple[int, int]

    def as_dict(self):
        return {
            "t_start": self.t_start,
            "t_end": self.t_end,
            "l2_rel_error": self.l2_rel_error,
            "velocity_rel_error": self.velocity_rel_error,
            "norm_drift": self.norm_drift,
            "n_steps": self.n_steps,
            "points": list(self.points),
        }


def auto_grid_config(field: WaveField, t0: float, t1: float,
                     dx_target: Optional[float] = None, max_points: int = 2048,
                     potential: Optional[Callable] = None) -> GridConfig:
    """Grid covering every packet center over [t0, t1] with spreading margins."""
    c = field.constants
    pts = []
    sig_end = 0.0
    for _, p in field.terms:
        pts.append(p.drifted_center(t0, c))
        pts.append(p.drifted_center(t1, c))
        sig_end = max(sig_end, p.sigma_t(t1, c))
    pts = np.asarray(pts)
    margin = 7.8 * sig_end
    lo = pts.min(axis=0) - margin
    hi = pts.max(axis=0) + margin
    center = 0.5 * (lo + hi)
    s_min = min(p.sigma0 for _, p in field.terms)
    if dx_target is None:
        dx_target = s_min / 8.2
    points = []
    extent = []
    for d in range(2):
        span = hi[d] - lo[d]
        n = 1 << max(4, math.ceil(math.log2(span / dx_target)))
        if n > max_points:
            raise FieldPreconditionError(
                f"required grid ({span / dx_target:.0f} cells) exceeds {max_points}"
            )
        points.append(n)
        extent.append(0.5 * n * dx_target)
    dt_max = c.mass * dx_target**2 / (math.pi * c.hbar)
    n_steps = max(1, math.ceil((t1 - t0) / (0.9 * dt_max)))
    dt = (t1 - t0) / n_steps
    return GridConfig(
        extent=(extent[0], extent[1]),
        points=(points[0], points[1]),
        dt=dt,
        center=(center[0], center[1]),
        external_potential=potential,
    )


def verify_leg(field: WaveField, t0: float, t1: float,
               cfg: Optional[GridConfig] = None,
               capture_times: Optional[list] = None):
    """Propagate [t0, t1] on the grid and compare against the analytic field.

    Returns (LegReport, captures) where captures maps each requested capture
    time to the GridState snapshot at that time (for fringe scans).
    """
    if cfg is None:
        cfg = auto_grid_config(field, t0, t1)
    state = init_from_analytic(field, cfg, t0)
    n0 = state.norm()
    captures = {}
    n_total = max(1, round((t1 - t0) / cfg.dt))
    marks = sorted(capture_times or [])
    done = 0
    for tm in marks:
        k = round((tm - t0) / cfg.dt)
        if k > done:
            state = step(state, k - done)
            done = k
        captures[tm] = state.copy()
    if n_total > done:
        state = step(state, n_total - done)

    X, Y = state.mesh
    num = 0.0
    den = 0.0
    v_err = 0.0
    c = field.constants
    v_scale = max(
        math.hypot(*p.wavevector) * c.hbar / c.mass for _, p in field.terms
    )
    for w in sorted(state.psis):
        exact = evaluate_many(field, WWLabel(w), X, Y, state.time)
        diff = state.psis[w] - exact
        num += float(np.sum(np.abs(diff) ** 2))
        den += float(np.sum(np.abs(exact) ** 2))
        dens = np.abs(exact) ** 2
        mask = dens > 1e-6 * dens.max()
        from .wavefield import evaluate_many_with_derivatives

        psi_e, gx_e, gy_e, _ = evaluate_many_with_derivatives(
            field, WWLabel(w), X[mask], Y[mask], state.time
        )
        de = np.abs(psi_e) ** 2
        vx_e = (c.hbar / c.mass) * (psi_e.conj() * gx_e).imag / de
        vy_e = (c.hbar / c.mass) * (psi_e.conj() * gy_e).imag / de
        vx_g, vy_g = velocity_field(state, w)
        dv = np.hypot(vx_g[mask] - vx_e, vy_g[mask] - vy_e)
        vmag = np.hypot(vx_e, vy_e)
        v_err = max(v_err, float((dv / (vmag + 1e-6 * v_scale)).max()))
    l2 = math.sqrt(num / den)
    report = LegReport(
        t_start=t0,
        t_end=float(state.time),
        l2_rel_error=l2,
        velocity_rel_error=v_err,
        norm_drift=abs(state.norm() - n0),
        n_steps=n_total,
        points=cfg.points,
    )
    return report, captures
