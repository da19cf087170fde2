"""Exact verification of the masked model-rollout value bounds on finite MDPs.

All quantities are computed in closed form: state-action occupancies by
matrix powers, discounted series by linear solves over the (n*m)-dimensional
state-action space.  A check "holds" when its slack (right side minus left
side) is at least ``-TOL``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .envs.finite import (
    FiniteMDP,
    TabularPolicy,
    exact_policy_value,
    perturb_transitions,
    random_mdp,
    random_policy,
    state_action_kernel,
)

TOL = 1e-9
DIST_TOL = 1e-9


# -- distances -----------------------------------------------------------------------

def _check_dist(p: np.ndarray, q: np.ndarray) -> None:
    if p.shape != q.shape:
        raise ValueError(f"support sizes differ: {p.shape} vs {q.shape}")
    for d in (p, q):
        if (d < 0).any() or np.abs(d.sum(axis=-1) - 1.0).max() > DIST_TOL:
            raise ValueError("not a probability distribution")


def tv_distance(p, q) -> float | np.ndarray:
    """Total variation 0.5 * sum |p - q| along the last axis."""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    _check_dist(p, q)
    return 0.5 * np.abs(p - q).sum(axis=-1)


def kl_divergence(p, q) -> float:
    """KL(p || q) with 0 log 0 = 0; returns +inf when q = 0 < p somewhere."""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    _check_dist(p, q)
    support = p > 0
    if (q[support] == 0).any():
        return math.inf
    return float((p[support] * np.log(p[support] / q[support])).sum())


# -- report ----------------------------------------------------------------------------

@dataclass
class BoundReport:
    """Quantities behind one verification instance.

    ``checks`` maps a check name to its minimum slack; ``info`` holds slacks
    that are reported but deliberately not asserted.
    """

    checks: dict[str, float] = field(default_factory=dict)
    info: dict[str, float] = field(default_factory=dict)
    epsilon: float | None = None
    delta: list[float] | None = None
    w: np.ndarray | None = None
    q_true: np.ndarray | None = None
    q_mask: np.ndarray | None = None
    q_m2ac: np.ndarray | None = None
    j_true: float | None = None
    j_model: float | None = None
    rhs: dict[str, float | np.ndarray] = field(default_factory=dict)
    dtv_max: float | None = None

    @property
    def min_slack(self) -> float:
        return min(self.checks.values()) if self.checks else math.inf

    @property
    def holds(self) -> bool:
        return self.min_slack >= -TOL

    def to_dict(self) -> dict:
        def plain(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            return v

        return {k: plain(v) for k, v in asdict(self).items()}


# -- Lemma 1: joint distributions -----------------------------------------------------------

@dataclass
class LemmaCheck:
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-12

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def _conditionals(joint: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    marg = joint.sum(axis=1)
    cond = np.full_like(joint, 1.0 / joint.shape[1])
    nz = marg > 0
    cond[nz] = joint[nz] / marg[nz, None]
    return marg, cond


def verify_lemma1(joint_p, joint_q) -> LemmaCheck:
    """TV of joints <= TV of x-marginals + E_{x~q}[TV of conditionals of y given x].

    Conditionals at x with zero marginal are set to uniform; the lemma holds
    for any choice and such terms carry weight q(x) or vanish from the sum.
    """
    p = np.asarray(joint_p, dtype=np.float64)
    q = np.asarray(joint_q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 2:
        raise ValueError("joints must be 2-D arrays of equal shape")
    _check_dist(p.ravel(), q.ravel())
    px, p_cond = _conditionals(p)
    qx, q_cond = _conditionals(q)
    lhs = 0.5 * np.abs(p - q).sum()
    rhs = 0.5 * np.abs(px - qx).sum() + float(qx @ (0.5 * np.abs(p_cond - q_cond).sum(axis=1)))
    return LemmaCheck(float(lhs), float(rhs))


# -- Lemma 2: Markov chains ------------------------------------------------------------------

def verify_lemma2_chain(P, P_model, d0, d0_model, T: int) -> list[LemmaCheck]:
    """One check per step t < T of the two-chain TV recursion."""
    P, Pm = np.asarray(P, float), np.asarray(P_model, float)
    d, dm = np.asarray(d0, float), np.asarray(d0_model, float)
    row_tv = 0.5 * np.abs(P - Pm).sum(axis=1)
    out = []
    for _ in range(T):
        d_next, dm_next = d @ P, dm @ Pm
        lhs = 0.5 * np.abs(d_next - dm_next).sum()
        rhs = 0.5 * np.abs(d - dm).sum() + float(dm @ row_tv)
        out.append(LemmaCheck(float(lhs), float(rhs)))
        d, dm = d_next, dm_next
    return out


def verify_lemma2(
    mdp: FiniteMDP, model: FiniteMDP, pol: TabularPolicy, model_pol: TabularPolicy, T: int
) -> BoundReport:
    """Lemma 2 on the state-action chains of (p, pi) and (p~, pi~)."""
    K = state_action_kernel(mdp.p, pol)
    Km = state_action_kernel(model.p, model_pol)
    d0 = (mdp.p0[:, None] * pol.probs).ravel()
    dm0 = (model.p0[:, None] * model_pol.probs).ravel()
    checks = verify_lemma2_chain(K, Km, d0, dm0, T)
    return BoundReport(checks={"lemma2": min((c.slack for c in checks), default=math.inf)})


# -- occupancies and model error -------------------------------------------------------------------

def transition_tv(mdp: FiniteMDP, model: FiniteMDP) -> np.ndarray:
    """(n, m) table of TV[p(.|s,a), p~(.|s,a)]."""
    return 0.5 * np.abs(mdp.p - model.p).sum(axis=-1)


def sa_occupancies(p: np.ndarray, p0: np.ndarray, pol: TabularPolicy, T: int) -> np.ndarray:
    """(T+1, n*m) array of Pr[(s_t, a_t)] for t = 0..T."""
    K = state_action_kernel(p, pol)
    d = (p0[:, None] * pol.probs).ravel()
    out = np.empty((T + 1, d.size))
    for t in range(T + 1):
        out[t] = d
        d = d @ K
    return out


def tail_horizon(gamma: float, r_max: float, tol: float = 1e-10) -> int:
    """Smallest T with gamma^T * r_max / (1 - gamma) < tol."""
    return max(1, int(math.ceil(math.log(tol * (1.0 - gamma) / r_max) / math.log(gamma))) + 1)


# -- Lemma 3: return gap ---------------------------------------------------------------------------

def verify_lemma3(
    mdp: FiniteMDP,
    model: FiniteMDP,
    pol: TabularPolicy,
    model_pol: TabularPolicy,
    T: int | None = None,
) -> BoundReport:
    """|J_T(pi; p) - J_T(pi~; p~)| against the return-gap bound, both with reward r.

    The model MDP's reward table is ignored here: the lemma compares
    dynamics and policies under one reward function.  Horizons longer than
    ``tail_horizon`` are capped; the discarded tail of the return gap,
    2 r_max gamma^(T+1) / (1 - gamma), is added to the left side, and the
    right side only shrinks when truncated, so the check stays sound.
    """
    g, r_max = mdp.gamma, mdp.r_max
    T_cap = tail_horizon(g, r_max)
    capped = T is None or T > T_cap
    Tn = T_cap if capped else int(T)
    r = mdp.r.ravel()
    occ = sa_occupancies(mdp.p, mdp.p0, pol, Tn)
    occ_m = sa_occupancies(model.p, model.p0, model_pol, Tn)
    disc = g ** np.arange(Tn + 1)
    j, j_m = float(disc @ (occ @ r)), float(disc @ (occ_m @ r))
    dtv_max = float(tv_distance(pol.probs, model_pol.probs).max())
    err = transition_tv(mdp, model).ravel()
    delta = np.empty(Tn + 1)
    delta[0] = float(tv_distance(mdp.p0, model.p0))
    delta[1:] = occ_m[:-1] @ err
    rhs = 2.0 * r_max * (dtv_max / (1.0 - g) ** 2 + (disc @ delta) / (1.0 - g))
    lhs = abs(j - j_m)
    if capped:
        lhs += 2.0 * r_max * g ** (Tn + 1) / (1.0 - g)
    return BoundReport(
        checks={"lemma3": rhs - lhs},
        j_true=j,
        j_model=j_m,
        delta=delta.tolist(),
        dtv_max=dtv_max,
        rhs={"lemma3": float(rhs)},
    )


# -- Theorem 1 -------------------------------------------------------------------------------------

def discounted_model_error(mdp: FiniteMDP, model: FiniteMDP, pol: TabularPolicy) -> tuple[float, float]:
    """Exact sums of gamma^t delta(t) over t >= 1 and over t >= 0.

    delta(t) = E over (s, a) ~ model occupancy at step t-1 of the transition
    TV; delta(0) is the TV between the two initial distributions.
    """
    g = mdp.gamma
    K = state_action_kernel(model.p, pol)
    d0 = (model.p0[:, None] * pol.probs).ravel()
    err = transition_tv(mdp, model).ravel()
    # sum_{t>=1} g^t d0 K^(t-1) err = g * d0 (I - gK)^-1 err
    from_one = g * float(d0 @ np.linalg.solve(np.eye(K.shape[0]) - g * K, err))
    delta0 = float(tv_distance(mdp.p0, model.p0))
    return from_one, from_one + delta0


def verify_theorem1(mdp: FiniteMDP, model: FiniteMDP, pol: TabularPolicy, n_delta: int = 50) -> BoundReport:
    """J(pi) >= J~(pi) - 2 r_max / (1 - gamma) * sum gamma^t delta(t).

    Both rollouts start from ``mdp.p0`` and use reward ``mdp.r``.  The sum
    is evaluated exactly, once from t = 1 and once from t = 0; the t = 0 form
    is asserted (it is the looser one) and the other is reported.
    """
    model = model.replace(p0=mdp.p0, r=mdp.r)
    v, _ = exact_policy_value(mdp, pol)
    vm, _ = exact_policy_value(model, pol)
    j, jm = float(mdp.p0 @ v), float(mdp.p0 @ vm)
    alpha = 2.0 * mdp.r_max / (1.0 - mdp.gamma)
    from_one, from_zero = discounted_model_error(mdp, model, pol)
    occ_m = sa_occupancies(model.p, model.p0, pol, n_delta)
    err = transition_tv(mdp, model).ravel()
    delta = [0.0] + (occ_m[:-1] @ err).tolist()
    rhs_zero = jm - alpha * from_zero
    rhs_one = jm - alpha * from_one
    return BoundReport(
        checks={"theorem1": j - rhs_zero},
        info={"theorem1_from_t1": j - rhs_one},
        j_true=j,
        j_model=jm,
        delta=delta,
        rhs={"theorem1": rhs_zero, "theorem1_from_t1": rhs_one},
    )


# -- masked rollouts (switching process) ----------------------------------------------------------------

def _mask_flat(mask, shape) -> np.ndarray:
    M = np.asarray(mask)
    if M.shape != shape:
        raise ValueError(f"mask shape {M.shape} does not match {shape}")
    if not np.isin(M, (0, 1)).all():
        raise ValueError("mask must be binary")
    return M.astype(np.float64).ravel()


def masked_q_exact(
    mdp: FiniteMDP,
    model: FiniteMDP,
    pol: TabularPolicy,
    mask,
    h_max: int | None = None,
) -> np.ndarray:
    """Q-values of the masked rollout that switches to the true MDP at the first M = 0 pair.

    Before the switch the rollout follows (p~, r~); from the switch on it
    follows (p, r), so the post-switch value is the true Q.  With ``h_max``
    the switch is also forced at step h_max.
    """
    if not mdp.gamma < 1.0:
        raise ValueError("masked values need gamma < 1")
    n, m = mdp.r.shape
    M = _mask_flat(mask, (n, m))
    _, q = exact_policy_value(mdp, pol)
    q = q.ravel()
    Km = state_action_kernel(model.p, pol)
    rm = model.r.ravel()
    g = mdp.gamma
    if h_max is None:
        A = np.eye(n * m) - g * M[:, None] * Km
        return np.linalg.solve(A, M * rm + (1.0 - M) * q).reshape(n, m)
    qt = q.copy()
    for _ in range(h_max):
        qt = M * (rm + g * Km @ qt) + (1.0 - M) * q
    return qt.reshape(n, m)


def survival_weights(model: FiniteMDP, pol: TabularPolicy, mask, T: int) -> np.ndarray:
    """(T+1, n, m) table of w(t; s, a) = Pr[t < H], H the first step with M = 0."""
    n, m = model.r.shape
    M = _mask_flat(mask, (n, m))
    Km = state_action_kernel(model.p, pol)
    w = np.empty((T + 1, n * m))
    w[0] = M
    for t in range(T):
        w[t + 1] = M * (Km @ w[t])
    return w.reshape(T + 1, n, m)


def discounted_survival(model: FiniteMDP, pol: TabularPolicy, mask, h_max: int | None = None) -> np.ndarray:
    """sum_t gamma^t w(t; s, a), over all t or over t < h_max."""
    n, m = model.r.shape
    M = _mask_flat(mask, (n, m))
    Km = state_action_kernel(model.p, pol)
    g = model.gamma
    if h_max is None:
        return np.linalg.solve(np.eye(n * m) - g * M[:, None] * Km, M).reshape(n, m)
    w = survival_weights(model, pol, mask, max(h_max - 1, 0))
    return np.tensordot(g ** np.arange(h_max), w[:h_max], axes=1)


def masked_epsilon(mdp: FiniteMDP, model: FiniteMDP, mask) -> float:
    M = np.asarray(mask).astype(bool)
    err = transition_tv(mdp, model)
    return float(err[M].max()) if M.any() else 0.0


def verify_theorem2(
    mdp: FiniteMDP,
    model: FiniteMDP,
    pol: TabularPolicy,
    mask,
    h_max: int | None = None,
    w_horizon: int = 20,
) -> BoundReport:
    """Masked Q-value bounds, checked per state-action pair.

    Asserted:
      * one-sided:  Q >= Q_mask - alpha * eps * sum_t gamma^t w(t)
      * two-sided:  |Q - Q_mask| <= alpha * eps * sum_t gamma^t w(t)
      * the same two-sided bound with the rollout cut at ``h_max`` (if given)
    Reported only: the two-sided form without the alpha factor.
    alpha = 2 r_max / (1 - gamma).
    """
    alpha = 2.0 * mdp.r_max / (1.0 - mdp.gamma)
    eps = masked_epsilon(mdp, model, mask)
    _, q = exact_policy_value(mdp, pol)
    q_mask = masked_q_exact(mdp, model, pol, mask)
    W = discounted_survival(model, pol, mask)
    gap = np.abs(q - q_mask)
    rhs_one_sided = q_mask - alpha * eps * W
    checks = {
        "theorem2": float((q - rhs_one_sided).min()),
        "theorem4": float((alpha * eps * W - gap).min()),
    }
    info = {"theorem4_without_alpha": float((eps * W - gap).min())}
    rhs = {"theorem2": rhs_one_sided, "theorem4": alpha * eps * W}
    if h_max is not None:
        q_h = masked_q_exact(mdp, model, pol, mask, h_max=h_max)
        W_h = discounted_survival(model, pol, mask, h_max=h_max)
        checks["theorem4_hmax"] = float((alpha * eps * W_h - np.abs(q - q_h)).min())
        rhs["theorem4_hmax"] = alpha * eps * W_h
    return BoundReport(
        checks=checks,
        info=info,
        epsilon=eps,
        w=survival_weights(model, pol, mask, w_horizon),
        q_true=q,
        q_mask=q_mask,
        rhs=rhs,
    )


# -- Corollary 1 -------------------------------------------------------------------------------------------

def m2ac_q_exact(mdp: FiniteMDP, model: FiniteMDP, pol: TabularPolicy, mask, penalty) -> np.ndarray:
    """Fixed point of the two-branch recursion.

    M = 0: r + gamma E_{p, pi} Q;  M = 1: r~ - penalty + gamma E_{p~, pi} Q.
    ``penalty`` is a scalar or an (n, m) table.
    """
    if not mdp.gamma < 1.0:
        raise ValueError("the recursion is a contraction only for gamma < 1")
    n, m = mdp.r.shape
    M = _mask_flat(mask, (n, m))
    pen = np.broadcast_to(np.asarray(penalty, dtype=np.float64), (n, m)).ravel()
    K = state_action_kernel(mdp.p, pol)
    Km = state_action_kernel(model.p, pol)
    kernel = M[:, None] * Km + (1.0 - M)[:, None] * K
    reward = M * (model.r.ravel() - pen) + (1.0 - M) * mdp.r.ravel()
    return np.linalg.solve(np.eye(n * m) - mdp.gamma * kernel, reward).reshape(n, m)


def m2ac_q_switching(mdp: FiniteMDP, model: FiniteMDP, pol: TabularPolicy, mask, penalty) -> np.ndarray:
    """Penalized masked-rollout value: model steps earn r~ - penalty until the
    first M = 0 pair, after which the true Q takes over."""
    n, m = mdp.r.shape
    pen = np.broadcast_to(np.asarray(penalty, dtype=np.float64), (n, m))
    return masked_q_exact(mdp, model.replace(r=model.r - pen, r_max=model.r_max + pen.max(initial=0.0)), pol, mask)


def verify_corollary1(
    mdp: FiniteMDP,
    model: FiniteMDP,
    pol: TabularPolicy,
    mask,
    u_table=None,
    u_alpha: float | None = None,
) -> BoundReport:
    """Q_M2AC <= Q per pair with the theorem's penalty alpha * eps.

    Both the Markov two-branch fixed point and the switching form are
    asserted.  With ``u_table`` the per-pair penalty ``u_alpha * u`` is also
    evaluated and reported in ``info`` (not asserted).
    """
    alpha = 2.0 * mdp.r_max / (1.0 - mdp.gamma)
    eps = masked_epsilon(mdp, model, mask)
    _, q = exact_policy_value(mdp, pol)
    q_m2ac = m2ac_q_exact(mdp, model, pol, mask, alpha * eps)
    q_sw = m2ac_q_switching(mdp, model, pol, mask, alpha * eps)
    report = BoundReport(
        checks={"corollary1": float((q - q_m2ac).min()), "corollary1_switching": float((q - q_sw).min())},
        epsilon=eps,
        q_true=q,
        q_m2ac=q_m2ac,
    )
    if u_table is not None:
        a = alpha if u_alpha is None else u_alpha
        q_u = m2ac_q_exact(mdp, model, pol, mask, a * np.asarray(u_table, dtype=np.float64))
        report.info["corollary1_per_sample_u"] = float((q - q_u).min())
    return report


# -- Monte-Carlo oracle for the switching rollout ---------------------------------------------------------

def simulate_masked_returns(
    mdp: FiniteMDP,
    model: FiniteMDP,
    pol: TabularPolicy,
    mask,
    s: int,
    a: int,
    n_episodes: int,
    rng: np.random.Generator,
    horizon: int | None = None,
) -> np.ndarray:
    """Discounted returns of sampled switching rollouts started at (s, a)."""
    n, m = mdp.r.shape
    M = np.asarray(mask).astype(bool)
    T = horizon or tail_horizon(mdp.gamma, max(mdp.r_max, model.r_max), 1e-12)
    cp, cpm = np.cumsum(mdp.p, axis=-1), np.cumsum(model.p, axis=-1)
    cpi = np.cumsum(pol.probs, axis=-1)
    states = np.full(n_episodes, s)
    actions = np.full(n_episodes, a)
    switched = np.zeros(n_episodes, dtype=bool)
    ret = np.zeros(n_episodes)
    disc = 1.0
    for _ in range(T):
        switched |= ~M[states, actions]
        ret += disc * np.where(switched, mdp.r[states, actions], model.r[states, actions])
        table = np.where(switched[:, None], cp[states, actions], cpm[states, actions])
        states = np.minimum((rng.random(n_episodes)[:, None] > table).sum(axis=1), n - 1)
        actions = np.minimum((rng.random(n_episodes)[:, None] > cpi[states]).sum(axis=1), m - 1)
        disc *= mdp.gamma
    return ret


# -- random instances and sweeps ------------------------------------------------------------------------------

@dataclass
class Instance:
    mdp: FiniteMDP
    model: FiniteMDP
    pol: TabularPolicy
    model_pol: TabularPolicy
    mask: np.ndarray
    seed: int

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "gamma": self.mdp.gamma,
            "r_max": self.mdp.r_max,
            "p": self.mdp.p.tolist(),
            "p_model": self.model.p.tolist(),
            "r": self.mdp.r.tolist(),
            "r_model": self.model.r.tolist(),
            "p0": self.mdp.p0.tolist(),
            "p0_model": self.model.p0.tolist(),
            "pi": self.pol.probs.tolist(),
            "pi_model": self.model_pol.probs.tolist(),
            "mask": self.mask.tolist(),
        }


def random_instance(
    seed: int,
    max_states: int = 8,
    max_actions: int = 4,
    gamma_range: tuple[float, float] = (0.5, 0.95),
    same_reward: bool = True,
    same_start: bool = True,
) -> Instance:
    """Random true MDP, a Dirichlet-perturbed model of it, two policies and a mask."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_states + 1))
    m = int(rng.integers(1, max_actions + 1))
    gamma = float(rng.uniform(*gamma_range))
    mdp = random_mdp(rng, n, m, gamma, r_max=1.0, concentration=float(rng.choice([0.3, 1.0, 3.0])))
    conc = float(np.exp(rng.uniform(np.log(0.5), np.log(200.0))))
    p_model = perturb_transitions(mdp.p, rng, conc)
    r_model = mdp.r if same_reward else np.clip(mdp.r + rng.normal(0, 0.2, mdp.r.shape), -0.999, 0.999)
    p0_model = mdp.p0 if same_start else rng.dirichlet(np.ones(n))
    model = FiniteMDP(p_model, r_model, p0_model, gamma, mdp.r_max)
    pol = random_policy(rng, n, m)
    mix = float(rng.uniform(0.0, 1.0))
    model_pol = TabularPolicy((1 - mix) * pol.probs + mix * random_policy(rng, n, m).probs)
    mask = (rng.random((n, m)) < rng.uniform(0.2, 1.0)).astype(int)
    return Instance(mdp, model, pol, model_pol, mask, seed)


def crafted_instance(seed: int, n_bad: int | None = None) -> tuple[Instance, np.ndarray]:
    """Model that is nearly exact except on a few pairs with large transition error.

    Returns the instance (mask all ones) and the flat indices of the bad pairs.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 9))
    m = int(rng.integers(2, 5))
    gamma = float(rng.uniform(0.5, 0.95))
    mdp = random_mdp(rng, n, m, gamma, r_max=1.0)
    p_model = perturb_transitions(mdp.p, rng, 2000.0)
    k = int(rng.integers(1, 4)) if n_bad is None else n_bad
    bad = rng.choice(n * m, size=k, replace=False)
    flat = p_model.reshape(n * m, n)
    for idx in bad:
        # move the row's mass onto one state the true row rarely visits
        target = int(np.argmin(mdp.p.reshape(n * m, n)[idx]))
        row = np.full(n, 0.02 / (n - 1))
        row[target] = 0.98
        flat[idx] = row / row.sum()
    model = FiniteMDP(flat.reshape(n, m, n), mdp.r, mdp.p0, gamma, mdp.r_max)
    pol = random_policy(rng, n, m)
    return Instance(mdp, model, pol, pol, np.ones((n, m), dtype=int), seed), bad


def masking_sweep(inst: Instance) -> dict:
    """Mask out pairs in decreasing order of transition error, recording eps, bound and gap."""
    mdp, model, pol = inst.mdp, inst.model, inst.pol
    n, m = mdp.r.shape
    err = transition_tv(mdp, model).ravel()
    order = np.argsort(-err, kind="stable")
    alpha = 2.0 * mdp.r_max / (1.0 - mdp.gamma)
    _, q = exact_policy_value(mdp, pol)
    eps, bounds, gaps = [], [], []
    for k in range(n * m + 1):
        M = np.ones(n * m, dtype=int)
        M[order[:k]] = 0
        M = M.reshape(n, m)
        e = masked_epsilon(mdp, model, M)
        eps.append(e)
        bounds.append(alpha * e * discounted_survival(model, pol, M))
        gaps.append(float(np.abs(q - masked_q_exact(mdp, model, pol, M)).max()))
    return {"order": order, "epsilon": np.array(eps), "bound": np.array(bounds), "gap": np.array(gaps)}


CHECKS = ("lemma1", "lemma2", "lemma3", "theorem1", "theorem2", "corollary1")


def _run_one(kind: str, seed: int) -> tuple[float, dict, BoundReport | None]:
    if kind == "lemma1":
        rng = np.random.default_rng(seed)
        shape = (int(rng.integers(2, 5)), int(rng.integers(2, 5)))
        jp = rng.dirichlet(np.full(shape[0] * shape[1], rng.choice([0.2, 1.0]))).reshape(shape)
        jq = rng.dirichlet(np.full(shape[0] * shape[1], rng.choice([0.2, 1.0]))).reshape(shape)
        chk = verify_lemma1(jp, jq)
        return chk.slack, {"joint_p": jp.tolist(), "joint_q": jq.tolist()}, None
    if kind in ("lemma2", "lemma3"):
        inst = random_instance(seed, same_start=False)
        T = int(np.random.default_rng(seed + 1).integers(1, 60))
        r2 = verify_lemma2(inst.mdp, inst.model, inst.pol, inst.model_pol, T)
        r3 = verify_lemma3(inst.mdp, inst.model, inst.pol, inst.model_pol, T)
        rep = BoundReport(checks={**r2.checks, **r3.checks}, j_true=r3.j_true, j_model=r3.j_model)
        return rep.min_slack, inst.to_dict(), rep
    inst = random_instance(seed)
    if kind == "theorem1":
        rep = verify_theorem1(inst.mdp, inst.model, inst.pol)
    elif kind == "theorem2":
        h = int(np.random.default_rng(seed + 2).integers(1, 11))
        rep = verify_theorem2(inst.mdp, inst.model, inst.pol, inst.mask, h_max=h)
    elif kind == "corollary1":
        rng = np.random.default_rng(seed + 3)
        u = transition_tv(inst.mdp, inst.model) * rng.lognormal(0.0, 1.0, inst.mdp.r.shape)
        rep = verify_corollary1(inst.mdp, inst.model, inst.pol, inst.mask, u_table=u)
    else:
        raise ValueError(f"unknown check {kind!r}")
    return rep.min_slack, inst.to_dict(), rep


def sweep(kind: str, n_instances: int, seed: int = 0) -> dict:
    """Run ``n_instances`` randomized checks of one kind and summarize them."""
    if kind not in CHECKS:
        raise ValueError(f"unknown check {kind!r}; choose from {CHECKS}")
    seeds = [seed * 1_000_003 + i for i in range(n_instances)]
    slacks = []
    info_viol: dict[str, int] = {}
    worst = (math.inf, None, None)
    for s in seeds:
        slack, dump, rep = _run_one(kind, s)
        slacks.append(slack)
        if rep is not None:
            for name, val in rep.info.items():
                info_viol[name] = info_viol.get(name, 0) + int(val < -TOL)
        if slack < worst[0]:
            worst = (slack, s, dump)
    slacks_arr = np.array(slacks)
    return {
        "check": kind,
        "instances": n_instances,
        "seeds": seeds,
        "slacks": slacks_arr.tolist(),
        "violations": int((slacks_arr < -TOL).sum()),
        "min_slack": float(slacks_arr.min()) if n_instances else math.inf,
        "min_slack_seed": worst[1],
        "min_slack_instance": worst[2],
        "reported_violations": info_viol,
    }
