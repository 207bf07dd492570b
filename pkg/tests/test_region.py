import numpy as np
import pytest

from conftest import make_flip_candidate, random_channel_instance, random_kernel
from _oracles import binary_grid_slack, nested_loop_inner, nested_loop_outer

from markovcoord.probability import (
    Alphabet,
    AssumptionViolated,
    Dist,
    JointDist,
    Kernel,
    cond_mutual_info,
    induced_transition,
    stationary_dist,
)
from markovcoord.region import (
    InconsistentTarget,
    InnerCandidate,
    OuterCandidate,
    assemble_inner,
    assemble_outer,
    embed_inner,
    inner_feasibility,
    optimize_auxiliary,
    outer_feasibility,
    product_target,
    separation_slack,
    validate_target,
    witness_w_copies_v,
    witness_w_equals_u,
)

UNIF2 = Dist(np.array([0.5, 0.5]))


def _const_w_candidate(channel, pv_given_yx):
    """w_size = 1 candidate; the decoder kernel sees (y, x) only."""
    ny, nx, nv = pv_given_yx.shape
    pw = Kernel(np.ones((2, 2, 1)))
    pv = Kernel(pv_given_yx[:, :, None, :])
    return InnerCandidate(UNIF2, UNIF2, pw, channel, pv, Alphabet(1))


def _noiseless_channel():
    table = np.zeros((2, 2, 2))
    for x in range(2):
        table[x, :, x] = 1.0
    return Kernel(table)


def _state_only_channel():
    # output ignores x entirely
    rows = np.array([[0.7, 0.3], [0.4, 0.6]])
    return Kernel(np.broadcast_to(rows[None], (2, 2, 2)).copy())


def test_assemble_inner_matches_nested_loop_oracle():
    rng = np.random.default_rng(0)
    for _ in range(5):
        px, chan = random_channel_instance(rng, 2, 2)
        cand = InnerCandidate(
            p_u=UNIF2, p_x=px,
            p_w_given_ux=random_kernel(rng, (2, 2), 2),
            channel=chan,
            p_v_given_yxw=random_kernel(rng, (2, 2, 2), 2),
            w_alphabet=Alphabet(2))
        pi = stationary_dist(induced_transition(px, chan)).pmf
        expect = nested_loop_inner(cand, pi)
        got = assemble_inner(cand).pmf
        assert np.abs(got - expect).max() <= 1e-12
        assert got.sum() == pytest.approx(1.0, abs=1e-9)


def test_assemble_outer_matches_nested_loop_oracle():
    rng = np.random.default_rng(1)
    for _ in range(5):
        px, chan = random_channel_instance(rng, 2, 2)
        cand = OuterCandidate(
            p_u=UNIF2, p_x=px,
            p_yprime_given_x=random_kernel(rng, (2,), 2),
            channel=chan,
            p_w_given_uxyy=random_kernel(rng, (2, 2, 2, 2), 2),
            p_v_given_yxw=random_kernel(rng, (2, 2, 2), 2),
            w_alphabet=Alphabet(2))
        expect = nested_loop_outer(cand)
        got = assemble_outer(cand).pmf
        assert np.abs(got - expect).max() <= 1e-12


def test_constant_w_is_always_feasible():
    rng = np.random.default_rng(2)
    _, chan = random_channel_instance(rng, 2, 2)
    pv = rng.dirichlet(np.ones(2), size=(2, 2))
    cand = _const_w_candidate(chan, pv)
    target = assemble_inner(cand).marginal([0, 1, 3, 4, 5])
    rep = inner_feasibility(cand, target)
    assert rep.i_auxiliary == pytest.approx(0.0, abs=1e-12)
    assert rep.slack == pytest.approx(rep.i_channel, abs=1e-12)
    assert rep.feasible and rep.marginal_gap <= 1e-12


def test_noiseless_channel_w_equals_u_slack_zero():
    # I(X;Y|Y') = 1 bit, I(U;U|X) = 1 bit
    chan = _noiseless_channel()
    pw = np.zeros((2, 2, 2))
    for u in range(2):
        pw[u, :, u] = 1.0
    pv = np.broadcast_to(np.eye(2)[None, None], (2, 2, 2, 2)).copy()
    cand = InnerCandidate(UNIF2, UNIF2, Kernel(pw), chan, Kernel(pv), Alphabet(2))
    target = assemble_inner(cand).marginal([0, 1, 3, 4, 5])
    rep = inner_feasibility(cand, target)
    assert rep.i_channel == pytest.approx(1.0, abs=1e-9)
    assert rep.i_auxiliary == pytest.approx(1.0, abs=1e-9)
    assert rep.slack == pytest.approx(0.0, abs=1e-9)
    assert rep.feasible


def test_state_only_channel_w_equals_u_infeasible():
    # I(X;Y|Y') = 0, I(U;U|X) = H(U) = 1: slack -1
    chan = _state_only_channel()
    pw = np.zeros((2, 2, 2))
    for u in range(2):
        pw[u, :, u] = 1.0
    pv = np.broadcast_to(np.eye(2)[None, None], (2, 2, 2, 2)).copy()
    cand = InnerCandidate(UNIF2, UNIF2, Kernel(pw), chan, Kernel(pv), Alphabet(2))
    target = assemble_inner(cand).marginal([0, 1, 3, 4, 5])
    rep = inner_feasibility(cand, target)
    assert rep.i_channel == pytest.approx(0.0, abs=1e-9)
    assert rep.slack == pytest.approx(-1.0, abs=1e-9)
    assert not rep.feasible


def test_candidate_requires_unichain_assumption():
    swap = np.zeros((2, 2, 2))
    swap[:, 0, 1] = 1.0
    swap[:, 1, 0] = 1.0  # period-2 output chain for every input
    with pytest.raises(AssumptionViolated):
        InnerCandidate(UNIF2, UNIF2, Kernel(np.ones((2, 2, 1))), Kernel(swap),
                       Kernel(np.full((2, 2, 1, 2), 0.5)), Alphabet(1))


def test_inner_embeds_into_outer_with_identical_slack():
    rng = np.random.default_rng(3)
    for _ in range(5):
        px, chan = random_channel_instance(rng, 2, 2)
        cand = InnerCandidate(
            UNIF2, px, random_kernel(rng, (2, 2), 2), chan,
            random_kernel(rng, (2, 2, 2), 2), Alphabet(2))
        target = assemble_inner(cand).marginal([0, 1, 3, 4, 5])
        inner_rep = inner_feasibility(cand, target)
        outer_rep = outer_feasibility(embed_inner(cand), target)
        assert outer_rep.slack == pytest.approx(inner_rep.slack, abs=1e-10)
        assert outer_rep.marginal_gap <= 1e-9


def test_assembled_joint_structure():
    # U independent of (X, Y', Y); assembled factors reproduce their inputs
    cand = make_flip_candidate(0.2, 0.3, 0.1, 0.35, 0.15)
    joint = assemble_inner(cand)
    m = joint.marginal([0, 1, 3, 4]).pmf
    prod = np.einsum("u,xiy->uxiy", joint.marginal([0]).pmf,
                     joint.marginal([1, 3, 4]).pmf)
    assert np.abs(m - prod).sum() <= 1e-9
    assert np.allclose(joint.marginal([0]).pmf, cand.p_u.pmf, atol=1e-12)
    assert np.allclose(joint.marginal([1]).pmf, cand.p_x.pmf, atol=1e-12)
    # conditional P(w | u, x) reconstructs the auxiliary kernel
    m_uxw = joint.marginal([0, 1, 2]).pmf
    cond = m_uxw / m_uxw.sum(axis=2, keepdims=True)
    assert np.abs(cond - cand.p_w_given_ux.table).max() <= 1e-12


def test_slack_invariant_under_w_relabeling():
    cand = make_flip_candidate(0.2, 0.3, 0.1, 0.35, 0.15)
    target = assemble_inner(cand).marginal([0, 1, 3, 4, 5])
    rep = inner_feasibility(cand, target)
    perm = [1, 0]
    permuted = InnerCandidate(
        cand.p_u, cand.p_x,
        Kernel(cand.p_w_given_ux.table[:, :, perm]), cand.channel,
        Kernel(cand.p_v_given_yxw.table[:, :, perm, :]), cand.w_alphabet)
    rep2 = inner_feasibility(permuted, target)
    assert rep2.slack == pytest.approx(rep.slack, abs=1e-12)
    assert rep2.marginal_gap == pytest.approx(rep.marginal_gap, abs=1e-12)


# ---------------------------------------------------------------------------
# target validation
# ---------------------------------------------------------------------------


def test_validate_target_accepts_candidate_marginals():
    cand = make_flip_candidate(0.22, 0.31, 0.08, 0.2, 0.12)
    target = assemble_inner(cand).marginal([0, 1, 3, 4, 5])
    decomp = validate_target(target)
    assert np.allclose(decomp.p_x.pmf, cand.p_x.pmf, atol=1e-9)
    assert np.allclose(decomp.channel.table, cand.channel.table, atol=1e-9)


def test_validate_target_reports_offending_cells():
    cand = make_flip_candidate(0.22, 0.31, 0.08, 0.2, 0.12)
    pmf = assemble_inner(cand).marginal([0, 1, 3, 4, 5]).pmf.copy()
    # shift mass between Y' slices to break stationarity of the marginal
    pmf[:, :, 0, :, :] *= 1.25
    pmf /= pmf.sum()
    with pytest.raises(InconsistentTarget) as exc:
        validate_target(JointDist(pmf))
    assert exc.value.details  # names the violated cells


# ---------------------------------------------------------------------------
# auxiliary optimizer
# ---------------------------------------------------------------------------


def _decoder_copies_y():
    pv = np.zeros((2, 2, 2, 2))
    for y in range(2):
        pv[y, :, :, y] = 1.0
    return Kernel(pv)


def test_optimizer_trivial_target_reaches_channel_info():
    # V = f(Y): constant W attains slack = I(X;Y|Y')
    cand = make_flip_candidate(0.2, 0.3, 0.1, 0.35, 0.15)
    cand = InnerCandidate(cand.p_u, cand.p_x, cand.p_w_given_ux, cand.channel,
                          _decoder_copies_y(), cand.w_alphabet)
    target = assemble_inner(cand).marginal([0, 1, 3, 4, 5])
    _, rep = optimize_auxiliary(target, w_size=2, budget=15, seed=0, starts=6)
    assert rep.marginal_gap <= 1e-6
    assert rep.slack == pytest.approx(rep.i_channel, abs=1e-9)


def test_optimizer_matches_grid_oracle_on_binary_instances():
    # targets whose optimum sits on the 0.05 grid
    cases = []
    base = make_flip_candidate(0.25, 0.29, 0.1, 0.9, 0.0)
    cases.append(InnerCandidate(base.p_u, base.p_x, base.p_w_given_ux,
                                base.channel, _decoder_copies_y(),
                                base.w_alphabet))           # V = Y
    ident = np.zeros((2, 2, 2))
    ident[0, :, 0] = ident[1, :, 1] = 1.0
    copy_w = np.broadcast_to(np.eye(2)[None, None], (2, 2, 2, 2)).copy()
    cases.append(InnerCandidate(base.p_u, base.p_x, Kernel(ident), base.channel,
                                Kernel(copy_w), base.w_alphabet))  # V = U
    bsc = np.zeros((2, 2, 2))
    bsc[0, :, :] = [0.9, 0.1]
    bsc[1, :, :] = [0.1, 0.9]
    cases.append(InnerCandidate(base.p_u, base.p_x, Kernel(bsc), base.channel,
                                Kernel(copy_w), base.w_alphabet))  # V = BSC(U)

    for cand in cases:
        target = assemble_inner(cand).marginal([0, 1, 3, 4, 5])
        i_chan = cond_mutual_info(target.marginal([1, 3, 2]))
        oracle = binary_grid_slack(target.pmf, i_chan, step=0.05)
        _, rep = optimize_auxiliary(target, w_size=2, budget=25, seed=0, starts=8)
        assert rep.marginal_gap <= 1e-6
        assert abs(rep.slack - oracle) <= 1e-3


def test_optimizer_monotone_in_w_size_and_budget():
    # reported best = max slack subject to the marginal-match constraint;
    # runs that cannot match the target count as -inf
    def constrained(rep):
        return rep.slack if rep.marginal_gap <= 1e-6 else -np.inf

    cand = make_flip_candidate(0.2, 0.3, 0.15, 0.4, 0.2)
    target = assemble_inner(cand).marginal([0, 1, 3, 4, 5])
    slacks = [constrained(optimize_auxiliary(target, w_size=k, budget=8,
                                             seed=3, starts=4)[1])
              for k in (1, 2, 3)]
    assert slacks[0] <= slacks[1] + 1e-12
    assert slacks[1] <= slacks[2] + 1e-12
    s_small = constrained(optimize_auxiliary(target, w_size=2, budget=2,
                                             seed=3, starts=4)[1])
    s_big = constrained(optimize_auxiliary(target, w_size=2, budget=10,
                                           seed=3, starts=4)[1])
    assert s_small <= s_big + 1e-12


def test_optimizer_rejects_inconsistent_target():
    rng = np.random.default_rng(9)
    pmf = rng.dirichlet(np.ones(32)).reshape(2, 2, 2, 2, 2)
    with pytest.raises(InconsistentTarget):
        optimize_auxiliary(JointDist(pmf), w_size=2)


def test_optimizer_default_w_size_is_source_times_input():
    cand = make_flip_candidate(0.2, 0.3, 0.1, 0.3, 0.1)
    target = assemble_inner(cand).marginal([0, 1, 3, 4, 5])
    best, rep = optimize_auxiliary(target, budget=3, starts=2)
    assert best.w_alphabet.size == 4  # |U| * |X|
    assert rep.marginal_gap <= 1e-6


# ---------------------------------------------------------------------------
# separation special case
# ---------------------------------------------------------------------------


def _channel_side(p0, p1):
    cand = make_flip_candidate(p0, p1, 0.1, 0.2, 0.1)
    return assemble_inner(cand).marginal([1, 3, 4])  # (X, Y', Y)


def test_separation_slack_independent_source():
    p_uv = JointDist(np.full((2, 2), 0.25))  # U independent of V
    p_xyy = _channel_side(0.2, 0.3)
    slack = separation_slack(p_uv, p_xyy)
    i_chan = cond_mutual_info(p_xyy.permuted([0, 2, 1]))
    assert slack == pytest.approx(i_chan, abs=1e-12)
    assert slack >= 0


def test_separation_slack_noiseless_channel_v_copies_u():
    p_uv = JointDist(np.diag([0.5, 0.5]))  # V = U uniform
    chan = _noiseless_channel()
    cand = InnerCandidate(UNIF2, UNIF2, Kernel(np.ones((2, 2, 1))), chan,
                          Kernel(np.full((2, 2, 1, 2), 0.5)), Alphabet(1))
    p_xyy = assemble_inner(cand).marginal([1, 3, 4])
    assert separation_slack(p_uv, p_xyy) == pytest.approx(0.0, abs=1e-9)


def test_separation_sign_matches_witness_feasibility():
    rng = np.random.default_rng(10)
    seen = {True: 0, False: 0}
    for _ in range(30):
        alpha = rng.uniform(0.0, 0.5)
        p_uv = JointDist(0.5 * np.array([[1 - alpha, alpha], [alpha, 1 - alpha]]))
        p_xyy = _channel_side(*sorted(rng.uniform(0.05, 0.45, size=2)))
        slack = separation_slack(p_uv, p_xyy)
        cand = witness_w_copies_v(p_uv, p_xyy)
        rep = inner_feasibility(cand, product_target(p_uv, p_xyy))
        assert rep.marginal_gap <= 1e-9
        assert rep.slack == pytest.approx(slack, abs=1e-9)
        assert rep.feasible == (slack >= -1e-9)
        seen[rep.feasible] += 1
    assert seen[True] and seen[False]  # both signs exercised


def test_witness_w_equals_u_on_v_copy_targets():
    rng = np.random.default_rng(11)
    for _ in range(10):
        p_u = rng.dirichlet(np.ones(2))
        p_uv = JointDist(np.diag(p_u))  # V = U
        p_xyy = _channel_side(*sorted(rng.uniform(0.05, 0.45, size=2)))
        cand = witness_w_equals_u(p_uv, p_xyy)
        rep = inner_feasibility(cand, product_target(p_uv, p_xyy))
        assert rep.marginal_gap <= 1e-9
        assert rep.slack == pytest.approx(separation_slack(p_uv, p_xyy), abs=1e-9)
