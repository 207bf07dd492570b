"""Inner and outer bounds of the achievable coordination region.

A joint distribution over (U, X, Y', Y, V) is inner-feasible when some
auxiliary alphabet W and kernels P(w|u,x), P(v|y,x,w) reproduce it as the
marginal of

    P(u) P(x) P(w|u,x) pi(y') channel(y|x,y') P(v|y,x,w)

subject to the information constraint I(X;Y|Y') - I(U;W|X) >= 0.  The
outer bound keeps the same constraint over a looser factorization in
which Y' may depend on X and W may additionally see (Y, Y').

Assembled joints are ordered (U, X, W, Y', Y, V) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .probability import (
    Alphabet,
    AssumptionViolated,
    Dist,
    JointDist,
    Kernel,
    chain_structure,
    cond_mutual_info,
    induced_transition,
    mutual_info,
    stationary_dist,
    tv_distance,
)

FEASIBILITY_TOL = 1e-9   # slack >= -FEASIBILITY_TOL counts as feasible
MARGINAL_GAP_TOL = 1e-6  # optimizer's matching requirement on the 5-tuple marginal
TARGET_TOL = 1e-6        # structural validation tolerance for targets

_STEP_GRID = (1.0, 0.5, 0.25, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001)
_GAP_PENALTY = 1e6


class InconsistentTarget(RuntimeError):
    """Target joint distribution violates the channel/stationarity structure."""

    def __init__(self, message: str, details: Optional[List[str]] = None):
        super().__init__(message)
        self.details = details or []


@dataclass(frozen=True, eq=False)
class InnerCandidate:
    """Factorized specification for the inner (achievability) bound."""

    p_u: Dist
    p_x: Dist
    p_w_given_ux: Kernel     # table [u, x, w]
    channel: Kernel          # table [x, y_prev, y]
    p_v_given_yxw: Kernel    # table [y, x, w, v]
    w_alphabet: Alphabet

    def __post_init__(self):
        nu, nx, nw = self.p_u.size, self.p_x.size, self.w_alphabet.size
        ny = self.channel.output_size
        nv = self.p_v_given_yxw.output_size
        if self.p_w_given_ux.input_sizes != (nu, nx) or self.p_w_given_ux.output_size != nw:
            raise ValueError("p_w_given_ux shape inconsistent with (U, X, W)")
        if self.channel.input_sizes != (nx, ny):
            raise ValueError("channel must condition on (x, y_prev)")
        if self.p_v_given_yxw.input_sizes != (ny, nx, nw):
            raise ValueError("p_v_given_yxw shape inconsistent with (Y, X, W)")
        structure = chain_structure(induced_transition(self.p_x, self.channel))
        if not (structure.is_unichain and structure.is_aperiodic):
            raise AssumptionViolated("induced output chain is not unichain-aperiodic")
        del nv

    @property
    def sizes(self) -> Tuple[int, int, int, int, int]:
        return (self.p_u.size, self.p_x.size, self.w_alphabet.size,
                self.channel.output_size, self.p_v_given_yxw.output_size)


@dataclass(frozen=True, eq=False)
class OuterCandidate:
    """Factorized specification for the outer (necessity) bound."""

    p_u: Dist
    p_x: Dist
    p_yprime_given_x: Kernel   # table [x, y_prev]
    channel: Kernel            # table [x, y_prev, y]
    p_w_given_uxyy: Kernel     # table [u, x, y, y_prev, w]
    p_v_given_yxw: Kernel      # table [y, x, w, v]
    w_alphabet: Alphabet

    def __post_init__(self):
        nu, nx, nw = self.p_u.size, self.p_x.size, self.w_alphabet.size
        ny = self.channel.output_size
        if self.channel.input_sizes != (nx, ny):
            raise ValueError("channel must condition on (x, y_prev)")
        if self.p_yprime_given_x.input_sizes != (nx,) or self.p_yprime_given_x.output_size != ny:
            raise ValueError("p_yprime_given_x shape inconsistent with (X, Y')")
        if self.p_w_given_uxyy.input_sizes != (nu, nx, ny, ny) or self.p_w_given_uxyy.output_size != nw:
            raise ValueError("p_w_given_uxyy shape inconsistent with (U, X, Y, Y', W)")
        if self.p_v_given_yxw.input_sizes != (ny, nx, nw):
            raise ValueError("p_v_given_yxw shape inconsistent with (Y, X, W)")


@dataclass(frozen=True)
class FeasibilityReport:
    """Information-constraint slack and target-marginal match of a candidate."""

    slack: float
    feasible: bool
    marginal_gap: float
    i_channel: float     # I(X; Y | Y')
    i_auxiliary: float   # I(U; W | X)


def assemble_inner(c: InnerCandidate) -> JointDist:
    """Joint over (U, X, W, Y', Y, V) from the inner factorization.

    The Y'-coordinate carries the equilibrium distribution of the output
    chain induced by p_x through the channel.
    """
    pi = stationary_dist(induced_transition(c.p_x, c.channel))
    pmf = np.einsum(
        "u,x,uxw,i,xiy,yxwv->uxwiyv",
        c.p_u.pmf, c.p_x.pmf, c.p_w_given_ux.table, pi.pmf,
        c.channel.table, c.p_v_given_yxw.table,
    )
    return JointDist(pmf)


def assemble_outer(c: OuterCandidate) -> JointDist:
    """Joint over (U, X, W, Y', Y, V) from the outer factorization."""
    pmf = np.einsum(
        "u,x,xi,xiy,uxyiw,yxwv->uxwiyv",
        c.p_u.pmf, c.p_x.pmf, c.p_yprime_given_x.table,
        c.channel.table, c.p_w_given_uxyy.table, c.p_v_given_yxw.table,
    )
    return JointDist(pmf)


def _feasibility(joint: JointDist, target: JointDist) -> FeasibilityReport:
    if target.arity != 5:
        raise ValueError("target must be a 5-coordinate joint (U, X, Y', Y, V)")
    i_channel = cond_mutual_info(joint.marginal([1, 4, 3]))   # (X, Y, Y')
    i_aux = cond_mutual_info(joint.marginal([0, 2, 1]))       # (U, W, X)
    slack = i_channel - i_aux
    gap = tv_distance(joint.marginal([0, 1, 3, 4, 5]), target)
    return FeasibilityReport(
        slack=slack, feasible=bool(slack >= -FEASIBILITY_TOL),
        marginal_gap=gap, i_channel=i_channel, i_auxiliary=i_aux,
    )


def inner_feasibility(c: InnerCandidate, target: JointDist) -> FeasibilityReport:
    """Evaluate the information constraint and marginal match of an inner candidate."""
    return _feasibility(assemble_inner(c), target)


def outer_feasibility(c: OuterCandidate, target: JointDist) -> FeasibilityReport:
    """Evaluate the information constraint and marginal match of an outer candidate."""
    return _feasibility(assemble_outer(c), target)


def embed_inner(c: InnerCandidate) -> OuterCandidate:
    """Outer candidate equivalent to an inner one: Y' drawn from the
    equilibrium independently of X, W blind to (Y, Y')."""
    pi = stationary_dist(induced_transition(c.p_x, c.channel))
    nx = c.p_x.size
    ny = c.channel.output_size
    p_yx = Kernel(np.tile(pi.pmf, (nx, 1)))
    pw = np.broadcast_to(
        c.p_w_given_ux.table[:, :, None, None, :],
        (c.p_u.size, nx, ny, ny, c.w_alphabet.size),
    ).copy()
    return OuterCandidate(
        p_u=c.p_u, p_x=c.p_x, p_yprime_given_x=p_yx, channel=c.channel,
        p_w_given_uxyy=Kernel(pw), p_v_given_yxw=c.p_v_given_yxw,
        w_alphabet=c.w_alphabet,
    )


# ---------------------------------------------------------------------------
# target decomposition and the separation special case
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetDecomposition:
    """Channel-side structure extracted from a valid target joint."""

    p_u: Dist
    p_x: Dist
    channel: Kernel
    pi: Dist


def _decompose_channel_marginal(p_xyy: np.ndarray, tol: float) -> Tuple[Dist, Dist, Kernel, List[str]]:
    """Split a (X, Y', Y) table into p_x, pi, channel; collect violations."""
    details: List[str] = []
    p_x = p_xyy.sum(axis=(1, 2))
    p_yp = p_xyy.sum(axis=(0, 2))
    p_xyp = p_xyy.sum(axis=2)
    indep_gap = np.abs(p_xyp - np.outer(p_x, p_yp))
    for cell in np.argwhere(indep_gap > tol):
        details.append(f"X and Y' not independent at (x={cell[0]}, y'={cell[1]}): "
                       f"gap {indep_gap[tuple(cell)]:.3g}")
    nx, ny = p_xyp.shape
    table = np.empty((nx, ny, ny))
    for x in range(nx):
        for i in range(ny):
            mass = p_xyp[x, i]
            if mass > 0:
                table[x, i] = p_xyy[x, i] / mass
            else:
                table[x, i] = 1.0 / ny  # unconstrained row, uniform fill
    channel = Kernel(table)
    px_dist = Dist(p_x / p_x.sum())
    t = induced_transition(px_dist, channel)
    structure = chain_structure(t)
    if not (structure.is_unichain and structure.is_aperiodic):
        details.append("induced output chain is not unichain-aperiodic")
        return px_dist, Dist(p_yp / p_yp.sum()), channel, details
    pi = stationary_dist(t)
    pi_gap = np.abs(p_yp - pi.pmf)
    for i in np.argwhere(pi_gap > tol).ravel():
        details.append(f"Y' marginal is not the equilibrium at state {i}: "
                       f"{p_yp[i]:.6g} vs {pi.pmf[i]:.6g}")
    return px_dist, pi, channel, details


def validate_target(target: JointDist, tol: float = TARGET_TOL) -> TargetDecomposition:
    """Check a target (U, X, Y', Y, V) for the structure every candidate induces.

    The (X, Y', Y) marginal must factor as p_x x pi x channel with pi the
    equilibrium of the induced chain.  Violations raise InconsistentTarget
    listing the offending cells; nothing is silently repaired.
    """
    if target.arity != 5:
        raise ValueError("target must have coordinates (U, X, Y', Y, V)")
    p_u = Dist(target.pmf.sum(axis=(1, 2, 3, 4)))
    p_xyy = target.marginal([1, 2, 3]).pmf
    p_x, pi, channel, details = _decompose_channel_marginal(p_xyy, tol)
    if details:
        raise InconsistentTarget(
            f"target violates the channel structure in {len(details)} place(s)", details)
    return TargetDecomposition(p_u=p_u, p_x=p_x, channel=channel, pi=pi)


def product_target(p_uv: JointDist, p_xyy: JointDist) -> JointDist:
    """Target with independent source and channel sides, (U, X, Y', Y, V)."""
    pmf = np.einsum("uv,xiy->uxiyv", p_uv.pmf, p_xyy.pmf)
    return JointDist(pmf)


def separation_slack(p_uv: JointDist, p_xyy: JointDist) -> float:
    """I(X;Y|Y') - I(U;V): the separation form of the information constraint.

    For product-form targets this sign decides inner feasibility; the
    witness routes the source description through W.
    """
    if p_uv.arity != 2 or p_xyy.arity != 3:
        raise ValueError("need (U, V) and (X, Y', Y) joints")
    _, _, _, details = _decompose_channel_marginal(p_xyy.pmf, TARGET_TOL)
    if details:
        raise InconsistentTarget("channel-side joint violates structure", details)
    i_channel = cond_mutual_info(p_xyy.permuted([0, 2, 1]))  # (X, Y, Y')
    return i_channel - mutual_info(p_uv)


def witness_w_equals_u(p_uv: JointDist, p_xyy: JointDist) -> InnerCandidate:
    """Inner candidate with W = U and the decoder kernel reproducing P(v|u)."""
    p_x, pi, channel, details = _decompose_channel_marginal(p_xyy.pmf, TARGET_TOL)
    if details:
        raise InconsistentTarget("channel-side joint violates structure", details)
    nu, nv = p_uv.pmf.shape
    nx, ny = p_x.size, channel.output_size
    p_u = Dist(p_uv.pmf.sum(axis=1))
    pw = np.zeros((nu, nx, nu))
    for u in range(nu):
        pw[u, :, u] = 1.0
    cond_v = np.where(p_u.pmf[:, None] > 0,
                      p_uv.pmf / np.maximum(p_u.pmf[:, None], 1e-300),
                      1.0 / nv)
    pv = np.broadcast_to(cond_v[None, None, :, :], (ny, nx, nu, nv)).copy()
    return InnerCandidate(
        p_u=p_u, p_x=p_x, p_w_given_ux=Kernel(pw), channel=channel,
        p_v_given_yxw=Kernel(pv), w_alphabet=Alphabet(nu),
    )


def witness_w_copies_v(p_uv: JointDist, p_xyy: JointDist) -> InnerCandidate:
    """Inner candidate with W drawn as P(v|u) and V a copy of W.

    This witness attains I(U;W|X) = I(U;V), the smallest auxiliary rate a
    product target admits, so its feasibility matches the sign of
    separation_slack exactly.
    """
    p_x, pi, channel, details = _decompose_channel_marginal(p_xyy.pmf, TARGET_TOL)
    if details:
        raise InconsistentTarget("channel-side joint violates structure", details)
    nu, nv = p_uv.pmf.shape
    nx, ny = p_x.size, channel.output_size
    p_u = Dist(p_uv.pmf.sum(axis=1))
    cond_v = np.where(p_u.pmf[:, None] > 0,
                      p_uv.pmf / np.maximum(p_u.pmf[:, None], 1e-300),
                      1.0 / nv)
    pw = np.broadcast_to(cond_v[:, None, :], (nu, nx, nv)).copy()
    pv = np.broadcast_to(np.eye(nv)[None, None, :, :], (ny, nx, nv, nv)).copy()
    return InnerCandidate(
        p_u=p_u, p_x=p_x, p_w_given_ux=Kernel(pw), channel=channel,
        p_v_given_yxw=Kernel(pv), w_alphabet=Alphabet(nv),
    )


# ---------------------------------------------------------------------------
# auxiliary-variable search
# ---------------------------------------------------------------------------


def _assemble_tables(decomp: TargetDecomposition, pw: np.ndarray, pv: np.ndarray) -> np.ndarray:
    return np.einsum(
        "u,x,uxw,i,xiy,yxwv->uxwiyv",
        decomp.p_u.pmf, decomp.p_x.pmf, pw, decomp.pi.pmf,
        decomp.channel.table, pv,
    )


def _slack_of(decomp: TargetDecomposition, i_channel: float, pw: np.ndarray) -> float:
    p_uwx = np.einsum("u,x,uxw->uwx", decomp.p_u.pmf, decomp.p_x.pmf, pw)
    return i_channel - cond_mutual_info(JointDist(p_uwx))


def _score(decomp, target_pmf, i_channel, pw, pv) -> Tuple[float, float, float]:
    joint = _assemble_tables(decomp, pw, pv)
    gap = float(np.abs(joint.sum(axis=2) - target_pmf).sum())
    slack = _slack_of(decomp, i_channel, pw)
    score = slack - _GAP_PENALTY * max(gap - MARGINAL_GAP_TOL, 0.0)
    return score, slack, gap


def _project_row(row: np.ndarray) -> np.ndarray:
    row = np.clip(row, 0.0, None)
    s = row.sum()
    return row / s if s > 0 else np.full_like(row, 1.0 / row.size)


def _refit_decoder_kernel(decomp: TargetDecomposition, target_pmf: np.ndarray,
                          pw: np.ndarray, nv: int) -> np.ndarray:
    """Least-squares refit of P(v|y,x,w) to the target's (U, X, Y, V) slice.

    For fixed P(w|u,x) the marginal constraint is linear in the decoder
    kernel; solving it per (x, y) and projecting back to the simplex keeps
    the coordinate search from stalling on jointly-constrained moves.
    """
    nu, nx, ny = decomp.p_u.size, decomp.p_x.size, decomp.channel.output_size
    nw = pw.shape[2]
    # C[u, x, y, v] = target P(v | u, x, y); rows weighted by P(u) mass
    t_uxyv = target_pmf.sum(axis=2)  # sum over y'
    mass = t_uxyv.sum(axis=3)
    cond = np.where(mass[..., None] > 0, t_uxyv / np.maximum(mass[..., None], 1e-300),
                    1.0 / nv)
    pv = np.empty((ny, nx, nw, nv))
    sqrt_w = np.sqrt(np.maximum(decomp.p_u.pmf, 1e-12))
    for x in range(nx):
        m = pw[:, x, :] * sqrt_w[:, None]          # (nu, nw), mass-weighted
        for y in range(ny):
            c = cond[:, x, y, :] * sqrt_w[:, None]  # (nu, nv)
            sol, *_ = np.linalg.lstsq(m, c, rcond=None)
            for w_idx in range(nw):
                pv[y, x, w_idx] = _project_row(sol[w_idx])
    return pv


def _initial_points(decomp: TargetDecomposition, target_pmf: np.ndarray,
                    w_size: int, nv: int, starts: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    nu, nx, ny = decomp.p_u.size, decomp.p_x.size, decomp.channel.output_size
    inits: List[Tuple[np.ndarray, np.ndarray]] = []
    # marginal decoder kernel shared by the deterministic starts
    t_yv = target_pmf.sum(axis=(0, 1, 2))
    cond_yv = np.where(t_yv.sum(axis=1, keepdims=True) > 0,
                       t_yv / np.maximum(t_yv.sum(axis=1, keepdims=True), 1e-300),
                       1.0 / nv)
    pv_marginal = np.broadcast_to(cond_yv[:, None, None, :], (ny, nx, w_size, nv)).copy()

    # constant auxiliary
    pw0 = np.zeros((nu, nx, w_size))
    pw0[:, :, 0] = 1.0
    inits.append((pw0, pv_marginal.copy()))

    # W spread over U (identity when w_size >= nu)
    pw1 = np.zeros((nu, nx, w_size))
    for u in range(nu):
        pw1[u, :, u % w_size] = 1.0
    inits.append((pw1, pv_marginal.copy()))

    # W drawn like V given U (separation-style), V copies W when sizes allow
    if w_size >= nv:
        t_uv = target_pmf.sum(axis=(1, 2, 3))
        cond_uv = np.where(t_uv.sum(axis=1, keepdims=True) > 0,
                           t_uv / np.maximum(t_uv.sum(axis=1, keepdims=True), 1e-300),
                           1.0 / nv)
        pw2 = np.zeros((nu, nx, w_size))
        pw2[:, :, :nv] = cond_uv[:, None, :]
        pv2 = np.zeros((ny, nx, w_size, nv))
        pv2[:, :, :nv, :] = np.eye(nv)[None, None, :, :]
        pv2[:, :, nv:, :] = 1.0 / nv
        inits.append((pw2, pv2))

    rng = np.random.default_rng(seed)
    while len(inits) < starts:
        pw = rng.dirichlet(np.ones(w_size), size=(nu, nx))
        pv = rng.dirichlet(np.ones(nv), size=(ny, nx, w_size))
        inits.append((pw, pv))
    return inits[:starts]


def optimize_auxiliary(target: JointDist, w_size: Optional[int] = None,
                       budget: int = 30, seed: int = 0, starts: int = 32
                       ) -> Tuple[InnerCandidate, FeasibilityReport]:
    """Search auxiliary kernels maximizing slack under marginal match.

    Multi-start coordinate ascent: seeded Dirichlet starts plus a few
    deterministic ones, cyclic projected line searches on kernel rows,
    and a linear refit of the decoder kernel after every auxiliary-kernel
    move.  All sub-cardinalities 1..w_size are searched and embedded, so
    the reported best slack is nondecreasing in both budget and w_size.
    The result is a lower bound on the true maximum; no cardinality bound
    on the auxiliary alphabet is known, so w_size (default |U| |X|) caps
    the search rather than certifying exhaustiveness.
    """
    if w_size is None:
        w_size = target.pmf.shape[0] * target.pmf.shape[1]
    if w_size < 1:
        raise ValueError("w_size must be >= 1")
    decomp = validate_target(target)
    i_channel = cond_mutual_info(target.marginal([1, 3, 2]))  # (X, Y, Y')
    nv = target.pmf.shape[4]

    best = None  # (score, slack, gap, start_rank, pw, pv) with pw padded to w_size
    rank = 0
    for k in range(1, w_size + 1):
        for pw, pv in _initial_points(decomp, target.pmf, k, nv, starts, seed):
            pw, pv = _coordinate_search(decomp, target.pmf, i_channel, pw, pv, budget)
            score, slack, gap = _score(decomp, target.pmf, i_channel, pw, pv)
            key = (score, -rank)
            if best is None or key > best[0]:
                pw_full = np.zeros((decomp.p_u.size, decomp.p_x.size, w_size))
                pw_full[:, :, :k] = pw
                pv_full = np.full((decomp.channel.output_size, decomp.p_x.size,
                                   w_size, nv), 1.0 / nv)
                pv_full[:, :, :k, :] = pv
                best = (key, slack, gap, pw_full, pv_full)
            rank += 1

    _, slack, gap, pw, pv = best
    candidate = InnerCandidate(
        p_u=decomp.p_u, p_x=decomp.p_x, p_w_given_ux=Kernel(pw),
        channel=decomp.channel, p_v_given_yxw=Kernel(pv),
        w_alphabet=Alphabet(w_size),
    )
    return candidate, inner_feasibility(candidate, target)


def _coordinate_search(decomp, target_pmf, i_channel, pw, pv, budget):
    pw = pw.copy()
    pv = pv.copy()
    pv_refit = _refit_decoder_kernel(decomp, target_pmf, pw, pv.shape[3])
    if _score(decomp, target_pmf, i_channel, pw, pv_refit)[0] > \
            _score(decomp, target_pmf, i_channel, pw, pv)[0]:
        pv = pv_refit
    score, _, _ = _score(decomp, target_pmf, i_channel, pw, pv)
    nu, nx, nw = pw.shape
    ny = pv.shape[0]
    nv = pv.shape[3]
    for _ in range(budget):
        improved = False
        # auxiliary kernel rows, decoder kernel refit after each accepted move
        for u in range(nu):
            for x in range(nx):
                row = pw[u, x]
                move = _best_row_move(
                    row, nw,
                    lambda r: _try_pw(decomp, target_pmf, i_channel, pw, pv, u, x, r),
                    score)
                if move is not None:
                    score, new_row, new_pv = move
                    pw[u, x] = new_row
                    pv = new_pv
                    improved = True
        # decoder kernel rows
        for y in range(ny):
            for x in range(nx):
                for w_idx in range(nw):
                    row = pv[y, x, w_idx]
                    move = _best_row_move(
                        row, nv,
                        lambda r: _try_pv(decomp, target_pmf, i_channel, pw, pv,
                                          y, x, w_idx, r),
                        score)
                    if move is not None:
                        score, new_row, _ = move
                        pv[y, x, w_idx] = new_row
                        improved = True
        if not improved:
            break
    return pw, pv


def _try_pw(decomp, target_pmf, i_channel, pw, pv, u, x, row):
    trial = pw.copy()
    trial[u, x] = row
    pv_refit = _refit_decoder_kernel(decomp, target_pmf, trial, pv.shape[3])
    s_refit = _score(decomp, target_pmf, i_channel, trial, pv_refit)[0]
    s_keep = _score(decomp, target_pmf, i_channel, trial, pv)[0]
    if s_refit > s_keep:
        return s_refit, pv_refit
    return s_keep, pv


def _try_pv(decomp, target_pmf, i_channel, pw, pv, y, x, w_idx, row):
    trial = pv.copy()
    trial[y, x, w_idx] = row
    return _score(decomp, target_pmf, i_channel, pw, trial)[0], pv


def _best_row_move(row, size, evaluate, current_score):
    """Try steps from `row` toward every simplex vertex; return the best
    strictly improving (score, row, extra) or None."""
    best = None
    for k in range(size):
        vertex = np.zeros(size)
        vertex[k] = 1.0
        for step in _STEP_GRID:
            cand = (1.0 - step) * row + step * vertex
            result = evaluate(cand)
            score, extra = result if isinstance(result, tuple) else (result, None)
            if score > current_score + 1e-12 and (best is None or score > best[0]):
                best = (score, cand, extra)
    return best
