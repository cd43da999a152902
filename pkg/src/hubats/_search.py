"""Compiled POMCPOW search over index-coded HUB-POMDP states.

Transitions are the identity, so every state the search ever touches is one
of the root particles; particles are therefore stored as indices into the
root particle array. Actions ``0..K-1`` pull arms, ``K..A-1`` are query
actions. Pull observations are item indices; query observations are coded
``2 * pair + loser_flag`` where flag 0 means the lower-indexed item of the
canonical pair won.

Each observation node also keeps the root particle weights multiplied by the
likelihood of every observation on its path. That is the exact posterior
restricted to the root particles, and it is what the best-arm rollout reads
as "the current belief" at a leaf.
"""

import math

import numpy as np
from numba import njit

RANDOM_ACTION = 0
RANDOM_ARM = 1
BEST_ARM = 2

# counters slots
C_NODES = 0
C_PARTICLES = 1
C_INVIGORATED = 2


@njit(cache=True)
def seed(s):
    np.random.seed(s)


@njit(cache=True)
def ucb_select(n_parent, n, q, c):
    """UCB1 over one node's action slots; untried actions go first."""
    for a in range(n.shape[0]):
        if n[a] == 0:
            return a
    logn = math.log(max(n_parent, 1))
    best = 0
    best_v = -np.inf
    for a in range(n.shape[0]):
        v = q[a] + c * math.sqrt(logn / n[a])
        if v > best_v:
            best_v = v
            best = a
    return best


@njit(cache=True)
def likelihood(p, a, o, codes, d_table, pref, pair_probs, K):
    if a < K:
        return d_table[codes[p, 1 + a], o]
    pair = o >> 1
    P = pref[a - K, codes[p, 0], pair]
    if (o & 1) == 0:
        return pair_probs[pair] * P
    return pair_probs[pair] * (1.0 - P)


@njit(cache=True)
def _draw(cdf):
    r = np.random.random()
    i = 0
    n = cdf.shape[0]
    while i < n - 1 and r >= cdf[i]:
        i += 1
    return i


@njit(cache=True)
def generate(p, a, codes, d_cdf, pref, pair_cdf, K):
    if a < K:
        return _draw(d_cdf[codes[p, 1 + a]])
    pair = _draw(pair_cdf)
    P = pref[a - K, codes[p, 0], pair]
    if np.random.random() < P:
        return 2 * pair
    return 2 * pair + 1


@njit(cache=True)
def node_arm_values(node, bel, pv, out):
    """Expected arm values under a node's path belief (uniform if it is empty)."""
    P, K = pv.shape
    total = 0.0
    for j in range(P):
        total += bel[node, j]
    for k in range(K):
        s = 0.0
        for j in range(P):
            w = bel[node, j] if total > 0.0 else 1.0
            s += w * pv[j, k]
        out[node, k] = s / (total if total > 0.0 else P)


@njit(cache=True)
def rollout(kind, p, node, ev, pv, qcost, K, A, gamma, remaining, expected):
    """Discounted return of a rollout from particle ``p`` for ``remaining`` steps.

    ``ev[node]`` holds the node's belief-expected arm values. With
    ``expected`` set, per-step rewards are those expectations rather than the
    particle's own arm values.
    """
    if remaining <= 0:
        return 0.0
    if kind == BEST_ARM:
        best_k = 0
        for k in range(1, K):
            if ev[node, k] > ev[node, best_k]:
                best_k = k
        v = ev[node, best_k] if expected else pv[p, best_k]
        return v * (1.0 - gamma ** remaining) / (1.0 - gamma)
    g = 0.0
    disc = 1.0
    for _ in range(remaining):
        if kind == RANDOM_ARM:
            a = np.random.randint(0, K)
        else:
            a = np.random.randint(0, A)
        if a < K:
            g += disc * (ev[node, a] if expected else pv[p, a])
        else:
            g += disc * qcost[a - K]
        disc *= gamma
    return g


def new_tree(n_sims, depth_limit, n_particles, n_actions, root_w, pv):
    oc = n_sims + 2
    pc = n_sims * max(depth_limit, 1) + 2
    bel = np.empty((oc, n_particles))
    bel[0] = root_w
    ev = np.empty((oc, pv.shape[1]))
    node_arm_values(0, bel, pv, ev)
    return (
        np.zeros(oc, np.int64),                 # 0 h_n
        np.zeros(oc * n_actions, np.int64),     # 1 an_n
        np.zeros(oc * n_actions),               # 2 an_q
        np.full(oc * n_actions, -1, np.int64),  # 3 an_first
        np.zeros(oc * n_actions, np.int64),     # 4 an_nch
        np.zeros(oc, np.int64),                 # 5 o_code
        np.zeros(oc, np.int64),                 # 6 o_m
        np.full(oc, -1, np.int64),              # 7 o_next
        np.full(oc, -1, np.int64),              # 8 o_phead
        np.zeros(oc),                           # 9 o_wtot
        bel,                                    # 10 bel
        np.zeros(pc, np.int64),                 # 11 p_idx
        np.zeros(pc),                           # 12 p_w
        np.full(pc, -1, np.int64),              # 13 p_next
        np.array([1, 0, 0], np.int64),          # 14 counters
        ev,                                     # 15 ev
    )


@njit(cache=True)
def _pick_particle(child, o_phead, o_wtot, p_idx, p_w, p_next):
    r = np.random.random() * o_wtot[child]
    cur = o_phead[child]
    last = -1
    while cur != -1:
        if p_w[cur] > 0.0:
            last = p_idx[cur]
            r -= p_w[cur]
            if r < 0.0:
                return p_idx[cur]
        cur = p_next[cur]
    return last


@njit(cache=True)
def simulate(tree, model, params, p, d0):
    """One POMCPOW descent from particle ``p`` at the root, starting at depth ``d0``.

    Returns the discounted return credited to the root.
    """
    (h_n, an_n, an_q, an_first, an_nch, o_code, o_m, o_next, o_phead, o_wtot,
     bel, p_idx, p_w, p_next, counters, ev) = tree
    codes, pv, d_table, d_cdf, pref, pair_probs, pair_cdf, qcost, root_cdf = model
    K, A, depth_limit, kind = params[0], params[1], params[2], params[3]
    gamma, ucb_c, widen_k, widen_alpha = params[4], params[5], params[6], params[7]
    expected = params[8] != 0.0
    K = int(K)
    A = int(A)
    depth_limit = int(depth_limit)
    kind = int(kind)
    P = codes.shape[0]

    path_h = np.empty(depth_limit + 1, np.int64)
    path_an = np.empty(depth_limit + 1, np.int64)
    path_r = np.empty(depth_limit + 1)
    n_path = 0
    leaf = 0.0
    h = 0
    d = d0
    while d < depth_limit:
        base = h * A
        a = ucb_select(h_n[h], an_n[base:base + A], an_q[base:base + A], ucb_c)
        an = base + a
        if an_nch[an] <= widen_k * an_n[an] ** widen_alpha:
            o = generate(p, a, codes, d_cdf, pref, pair_cdf, K)
            child = an_first[an]
            while child != -1 and o_code[child] != o:
                child = o_next[child]
            is_new = child == -1
            if is_new:
                child = counters[C_NODES]
                counters[C_NODES] += 1
                o_code[child] = o
                o_next[child] = an_first[an]
                an_first[an] = child
                an_nch[an] += 1
                for j in range(P):
                    bel[child, j] = bel[h, j] * likelihood(j, a, o, codes, d_table, pref, pair_probs, K)
                node_arm_values(child, bel, pv, ev)
            o_m[child] += 1
        else:
            is_new = False
            total_m = 0
            c = an_first[an]
            while c != -1:
                total_m += o_m[c]
                c = o_next[c]
            r = np.random.random() * total_m
            child = an_first[an]
            while True:
                r -= o_m[child]
                if r < 0.0 or o_next[child] == -1:
                    break
                child = o_next[child]
            o = o_code[child]

        z = likelihood(p, a, o, codes, d_table, pref, pair_probs, K)
        slot = counters[C_PARTICLES]
        counters[C_PARTICLES] += 1
        p_idx[slot] = p
        p_w[slot] = z
        p_next[slot] = o_phead[child]
        o_phead[child] = slot
        o_wtot[child] += z

        if a < K:
            reward = ev[h, a] if expected else pv[p, a]
        else:
            reward = qcost[a - K]
        path_h[n_path] = h
        path_an[n_path] = an
        path_r[n_path] = reward
        n_path += 1

        if is_new:
            leaf = rollout(kind, p, child, ev, pv, qcost, K, A, gamma, depth_limit - d - 1, expected)
            break
        if o_wtot[child] > 0.0:
            p = _pick_particle(child, o_phead, o_wtot, p_idx, p_w, p_next)
        else:
            # every stored particle contradicts the path: draw from the
            # likelihood-filtered root belief instead
            counters[C_INVIGORATED] += 1
            tot = 0.0
            for j in range(P):
                tot += bel[child, j]
            if tot > 0.0:
                r = np.random.random() * tot
                for j in range(P):
                    r -= bel[child, j]
                    if r < 0.0:
                        p = j
                        break
        h = child
        d += 1

    g = leaf
    for i in range(n_path - 1, -1, -1):
        g = path_r[i] + gamma * g
        h_n[path_h[i]] += 1
        an = path_an[i]
        an_n[an] += 1
        an_q[an] += (g - an_q[an]) / an_n[an]
    return g


@njit(cache=True)
def search(tree, model, params, n_sims):
    root_cdf = model[8]
    for _ in range(n_sims):
        p = np.searchsorted(root_cdf, np.random.random(), side="right")
        if p >= root_cdf.shape[0]:
            p = root_cdf.shape[0] - 1
        simulate(tree, model, params, p, 0)
