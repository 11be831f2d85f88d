"""The jump (Riemann-Hilbert) problem on the seams of a plumbed curve.

Seam data lives in scaled Fourier modes: on the seam of oriented edge ``e``
(the circle |z_e| = r_e, r_e = sqrt|s_e|) a density is

    phi_e = ( sum_n  A[n] (z_e/r_e)^n ) dln z_e,

so ``A[n]`` is the size of mode ``n`` on the seam and all transfer operators
are well conditioned down to extreme degenerations.  Mode 0 is the seam mean
and must vanish.

On genus-0 components the Cauchy kernel is dp/(2 pi i (p - q)), and the
Cauchy transform of a truncated density is computed exactly by residues: on
the component side of its own seam it continues the exterior modes (n <= -1)
of the density, a rational differential; on every other seam of the component
it restricts to a holomorphic tail obtained from a Mobius power series.  The
ARN (almost real-normalized) solution with zero seam integrals is the sum of
an alternating Neumann series whose terms decay geometrically in sqrt|s|; a
dense solve of the same linear system provides an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .components import PlumbedCurve, RationalDifferential, SingularPart
from .mobius import Mobius
from . import ratfun as rf

DEFAULT_MODES = 64
MEAN_TOL = 1e-12
RATIO_ABORT = 0.9
PRUNE_REL = 1e-18
# seam radius below which the correction is numerically zero and is skipped
NEGLIGIBLE_RADIUS = 1e-140


class JumpDataError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


def _grid_sup(modes: np.ndarray) -> float:
    """Sup of |sum A_n e^{in theta}| on a fine grid (exact for truncations)."""
    N = (modes.size - 1) // 2
    M = 4 * modes.size
    emb = np.zeros(M, dtype=complex)
    emb[np.arange(-N, N + 1) % M] = modes
    vals = np.fft.ifft(emb) * M
    return float(np.max(np.abs(vals)))


@dataclass
class SeamFunction:
    """Mode arrays per oriented edge, indices -N..N at offsets 0..2N."""

    curve: PlumbedCurve = field(repr=False)
    n_modes: int
    data: dict[int, np.ndarray]

    @property
    def N(self) -> int:
        return self.n_modes

    def mode(self, e: int, n: int) -> complex:
        return self.data[e][n + self.n_modes]

    def copy(self) -> "SeamFunction":
        return SeamFunction(self.curve, self.n_modes,
                            {e: arr.copy() for e, arr in self.data.items()})

    def axpy(self, alpha: complex, other: "SeamFunction") -> None:
        for e in self.data:
            self.data[e] += alpha * other.data[e]

    def sup_norm(self) -> float:
        """The L-infinity seam norm 2 pi max_e sup |phi_e / dln z_e|."""
        return 2 * math.pi * max(_grid_sup(arr) for arr in self.data.values())

    def zero_mean_residual(self) -> float:
        return max(abs(arr[self.n_modes]) for arr in self.data.values())

    def compatibility_residual(self) -> float:
        """Max deviation from phi_e = -I_e^*(phi_{-e})."""
        worst = 0.0
        for e in self.data:
            pulled = pullback_modes(self.data[e ^ 1], self.curve.arg[e // 2],
                                    self.n_modes)
            worst = max(worst, float(np.max(np.abs(self.data[e] + pulled))))
        return worst

    @staticmethod
    def zeros(curve: PlumbedCurve, n_modes: int) -> "SeamFunction":
        data = {e: np.zeros(2 * n_modes + 1, dtype=complex)
                for e in range(curve.graph.n_oriented)}
        return SeamFunction(curve, n_modes, data)


def pullback_modes(modes: np.ndarray, arg_s: float, N: int) -> np.ndarray:
    """Scaled-mode action of I_e^*: (I*X)_n = -X_{-n} e^{-i n arg s}."""
    n = np.arange(-N, N + 1)
    phase = np.exp(-1j * n * arg_s)
    return -modes[::-1] * phase


def seam_restrict(f: RationalDifferential, chart: Mobius, radius: float,
                  n_modes: int) -> np.ndarray:
    """Scaled Fourier modes of a differential restricted to |z| = radius.

    Exact from the Laurent expansion in the chart: mode n carries the Laurent
    coefficient u_{n-1} scaled by radius^n.  The scaling is done in log
    magnitude so that tiny tail coefficients at tiny radii never overflow.
    """
    coeffs = f.laurent(chart, -n_modes - 1, n_modes - 1)
    n = np.arange(-n_modes, n_modes + 1).astype(float)
    mag = np.abs(coeffs)
    with np.errstate(divide="ignore"):
        logmag = np.log(mag)
    phase = np.where(mag > 0, coeffs / np.where(mag > 0, mag, 1.0), 0.0)
    return phase * np.exp(logmag + n * math.log(radius))


def jump_data_from_forms(curve: PlumbedCurve, forms: dict[int, RationalDifferential],
                         n_modes: int = DEFAULT_MODES,
                         check: bool = True) -> SeamFunction:
    """Jump data phi_e = (f_e - I_e^* f_{-e}) restricted to the seams."""
    data = {}
    g = curve.graph
    for e in range(g.n_oriented):
        r = curve.seam_radius(e // 2)
        own = seam_restrict(forms[e], curve.node_chart(e), r, n_modes)
        other = seam_restrict(forms[e ^ 1], curve.node_chart(e ^ 1), r, n_modes)
        data[e] = own - pullback_modes(other, curve.arg[e // 2], n_modes)
    phi = SeamFunction(curve, n_modes, data)
    if check:
        scale = max(float(np.max(np.abs(a))) for a in data.values()) + 1e-300
        if phi.zero_mean_residual() > MEAN_TOL * scale:
            raise JumpDataError(
                "jump data has nonzero seam mean (a pole with residue sits on a seam)")
    return phi


# ---------------------------------------------------------------------------
# transfer operators

def transfer_matrix(curve: PlumbedCurve, e_src: int, e_dst: int,
                    n_modes: int) -> np.ndarray:
    """Scaled modes on seam e_src -> scaled modes of its Cauchy transform on seam e_dst.

    Only exterior source modes (n' <= -1) radiate into the component, and the
    result is a holomorphic tail (target modes n >= 1).  Columns are built
    from the Mobius power series of mu^{n'}, mu = z_src as a function of z_dst.
    """
    N = n_modes
    size = 2 * N + 1
    out = np.zeros((size, size), dtype=complex)
    chart_src = curve.node_chart(e_src)
    chart_dst = curve.node_chart(e_dst)
    r_src = curve.seam_radius(e_src // 2)
    r_dst = curve.seam_radius(e_dst // 2)
    if r_src < NEGLIGIBLE_RADIUS or r_dst < NEGLIGIBLE_RADIUS:
        return out
    mu = chart_src.compose(chart_dst.inverse())
    length = N + 1
    # series of 1/mu = (Rz+S)/(Pz+Q) at z = 0; Q = mu(0) != 0 by disjointness
    inv_mu = rf.series_mul(np.array([mu.d, mu.c], dtype=complex),
                           rf.series_linear_power(mu.b, mu.a, -1, length), length)
    power = inv_mu.copy()                     # mu^{-1}
    n_tgt = np.arange(1, N + 1)
    for k in range(1, N + 1):                  # source mode n' = -k
        col = np.zeros(size, dtype=complex)
        g = power[1:N + 1] if power.size >= N + 1 else np.pad(power[1:], (0, N + 1 - power.size))
        col[N + 1:] = (n_tgt / (-k)) * g * r_dst ** n_tgt.astype(float) * r_src ** k
        out[:, N - k] = col
        if k < N:
            power = rf.series_mul(power, inv_mu, length)
    return out


@dataclass
class JumpOperator:
    """The genus-0 seam-coupling operator: psi -> jump of its Cauchy transform minus psi."""

    curve: PlumbedCurve
    n_modes: int
    transfers: dict[tuple[int, int], np.ndarray]

    @staticmethod
    def build(curve: PlumbedCurve, n_modes: int) -> "JumpOperator":
        g = curve.graph
        transfers = {}
        for e in range(g.n_oriented):
            v = g.target(e)
            for e_src in g.edges_at(v):
                if e_src != e:
                    transfers[(e_src, e)] = transfer_matrix(curve, e_src, e, n_modes)
        return JumpOperator(curve, n_modes, transfers)

    def cross_modes(self, psi: SeamFunction, e: int) -> np.ndarray:
        """Boundary modes on seam e of the transforms from the sibling seams."""
        g = self.curve.graph
        out = np.zeros(2 * self.n_modes + 1, dtype=complex)
        for e_src in g.edges_at(g.target(e)):
            if e_src != e:
                out += self.transfers[(e_src, e)] @ psi.data[e_src]
        return out

    def apply(self, psi: SeamFunction) -> SeamFunction:
        out = {}
        cross = {e: self.cross_modes(psi, e) for e in psi.data}
        for e in psi.data:
            out[e] = cross[e] - pullback_modes(cross[e ^ 1],
                                               self.curve.arg[e // 2], self.n_modes)
        return SeamFunction(self.curve, self.n_modes, out)

    def dense_matrix(self) -> np.ndarray:
        """I + K as one complex matrix on the stacked mode space."""
        g = self.curve.graph
        N = self.n_modes
        size = 2 * N + 1
        edges = list(range(g.n_oriented))
        block = {e: i * size for i, e in enumerate(edges)}
        A = np.eye(len(edges) * size, dtype=complex)
        n_idx = np.arange(-N, N + 1)
        for e in edges:
            phase = np.exp(-1j * n_idx * self.curve.arg[e // 2])
            # pullback as a matrix: rows n, columns -n
            P = np.zeros((size, size), dtype=complex)
            P[np.arange(size), size - 1 - np.arange(size)] = -phase
            for e_src in g.edges_at(g.target(e)):
                if e_src != e:
                    A[block[e]:block[e] + size, block[e_src]:block[e_src] + size] += \
                        self.transfers[(e_src, e)]
            for e_src in g.edges_at(g.target(e ^ 1)):
                if e_src != e ^ 1:
                    A[block[e]:block[e] + size, block[e_src]:block[e_src] + size] -= \
                        P @ self.transfers[(e_src, e ^ 1)]
        return A


# ---------------------------------------------------------------------------
# the ARN solution

@dataclass
class ARNSolution:
    """Solved seam densities plus the rational correction per component."""

    curve: PlumbedCurve
    n_modes: int
    phi: SeamFunction
    psi: SeamFunction
    term_norms: tuple[float, ...]
    method: str
    operator: JumpOperator = field(repr=False)

    _corrections: dict[int, RationalDifferential] = field(default_factory=dict, repr=False)

    @property
    def ratio_estimate(self) -> float | None:
        norms = [x for x in self.term_norms if x > 0]
        if len(norms) < 2:
            return None
        ratios = [b / a for a, b in zip(norms, norms[1:]) if a > 0]
        return float(np.median(ratios)) if ratios else None

    def correction(self, v: int) -> RationalDifferential:
        """The holomorphic correction on component v, as a rational differential.

        The exterior modes of each seam density continue to exact tails at the
        node points; negligible modes are pruned before conversion.
        """
        if v not in self._corrections:
            g = self.curve.graph
            parts = []
            for e in g.edges_at(v):
                arr = self.psi.data[e]
                N = self.n_modes
                r = self.curve.seam_radius(e // 2)
                scale = float(np.max(np.abs(arr))) + 1e-300
                coeffs = [0.0]                      # residue always zero
                for n in range(-1, -N - 1, -1):     # tail order j = n - 1
                    a_hat = arr[n + N]
                    if abs(a_hat) <= PRUNE_REL * scale:
                        coeffs.append(0.0)
                        continue
                    coeffs.append(a_hat * r ** (-n))
                while coeffs and coeffs[-1] == 0.0:
                    coeffs.pop()
                if len(coeffs) > 1:
                    parts.append(SingularPart(self.curve.node_chart(e), tuple(coeffs)))
            self._corrections[v] = RationalDifferential(tuple(parts))
        return self._corrections[v]

    def boundary_modes(self, e: int, side: str = "outer") -> np.ndarray:
        """Seam boundary values: the component side, or the far side pulled back."""
        if side == "outer":
            ext = self.psi.data[e].copy()
            ext[self.n_modes:] = 0.0             # exterior continuation only
            return ext + self.operator.cross_modes(self.psi, e)
        if side == "inner":
            far = self.boundary_modes(e ^ 1, "outer")
            return pullback_modes(far, self.curve.arg[e // 2], self.n_modes)
        raise ValueError("side must be 'outer' or 'inner'")

    def principal_value_modes(self, e: int) -> np.ndarray:
        """Mode-wise Cauchy principal value of the singular seam integral.

        Average of the two one-sided limits of the own-seam transform:
        -sgn(n) psi_n / 2 plus the smooth sibling contributions.
        """
        N = self.n_modes
        own = self.psi.data[e].copy()
        sgn = np.sign(np.arange(-N, N + 1))
        return -0.5 * sgn * own + self.operator.cross_modes(self.psi, e)

    def jump_residual(self) -> float:
        """Sup of |outer - inner - phi| over seams, relative to |phi|."""
        worst = 0.0
        for e in self.psi.data:
            res = self.boundary_modes(e, "outer") - self.boundary_modes(e, "inner") \
                - self.phi.data[e]
            worst = max(worst, 2 * math.pi * _grid_sup(res))
        return worst / (self.phi.sup_norm() + 1e-300)


def sokhotski_boundary(sol: ARNSolution, e: int, side: str) -> np.ndarray:
    return sol.boundary_modes(e, side)


def solve_arn(curve: PlumbedCurve, phi: SeamFunction, method: str = "series",
              max_terms: int = 300, tol: float = 1e-15,
              ratio_abort: float = RATIO_ABORT) -> ARNSolution:
    """Solve the jump problem with zero seam integrals (the ARN solution).

    ``method='series'`` sums the alternating Neumann series and records the
    term norms; ``method='direct'`` assembles and solves the dense system.
    """
    op = JumpOperator.build(curve, phi.n_modes)
    phi_norm = phi.sup_norm()
    if method == "direct":
        A = op.dense_matrix()
        size = 2 * phi.n_modes + 1
        edges = list(range(curve.graph.n_oriented))
        b = np.concatenate([phi.data[e] for e in edges])
        x = np.linalg.solve(A, b)
        data = {e: x[i * size:(i + 1) * size] for i, e in enumerate(edges)}
        psi = SeamFunction(curve, phi.n_modes, data)
        return ARNSolution(curve, phi.n_modes, phi, psi, (phi_norm,), "direct", op)

    psi = phi.copy()
    term = phi.copy()
    norms = [phi_norm]
    sign = -1.0
    for level in range(1, max_terms + 1):
        term = op.apply(term)
        tn = term.sup_norm()
        norms.append(tn)
        if tn <= tol * (phi_norm + 1e-300):
            break
        if level >= 3:
            recent = [norms[i + 1] / norms[i] for i in range(level - 2, level)
                      if norms[i] > 0]
            if recent and min(recent) >= ratio_abort:
                raise ConvergenceError(
                    f"Neumann series stalls (ratio {min(recent):.3f} >= {ratio_abort}); "
                    "plumbing parameters too large for the jump problem")
        psi.axpy(sign, term)
        sign = -sign
    return ARNSolution(curve, phi.n_modes, phi, psi, tuple(norms), "series", op)


# ---------------------------------------------------------------------------
# norms

def arn_l2_norm(sol: ARNSolution, v: int) -> float:
    """L2 norm of the correction on component v via the Stokes seam formula.

    With F = Im(int omega) single valued on the component (zero seam integrals,
    vacuous period condition at genus 0), the squared norm reduces to boundary
    integrals of F dF* over the seams.
    """
    g = sol.curve.graph
    total = 0.0
    N = sol.n_modes
    grid = 8 * N
    theta = 2 * np.pi * np.arange(grid) / grid
    n_idx = np.arange(-N, N + 1)
    for e in g.edges_at(v):
        modes = sol.boundary_modes(e, "outer")
        basis = np.exp(1j * np.outer(n_idx, theta))
        V = modes @ basis                                  # density values
        with np.errstate(divide="ignore", invalid="ignore"):
            cmodes = np.where(n_idx != 0, modes / np.where(n_idx == 0, 1, n_idx), 0.0)
        F = np.imag(cmodes @ basis)                        # Im of a primitive
        # clockwise seam orientation: minus the counterclockwise integral
        integrand = F * np.imag(V)
        total += -float(np.trapezoid(np.append(integrand, integrand[0]),
                                     dx=2 * np.pi / grid))
    return math.sqrt(max(total, 0.0))
