"""Compiled slot loop.

Queues are ring buffers held in typed lists: router queues store the birth
slot of each packet, forwarder link queues store one row per packet with the
fields below. Everything is indexed by small integers prepared in
``engine._Layout``.
"""

import numpy as np
from numba import njit

from .schedulers import FIFO, split_counts

# packet row fields in forwarder link queues
BORN = 0
TUN = 1
HOP = 2
SEQ = 3
SYN = 4
NF = 5

# policy codes
BPT = 0
BPT2 = 1
BPO = 2
BP = 3
BPSP = 4
SP = 5
LOR = 6

# counters
C_EXO = 0
C_SYN_IN = 1
C_DELIVERED = 2
C_SYN_OUT = 3
C_LOADED_OUT = 4
C_OUTCAP = 5
C_FMAX = 6
C_ABSORB = 7
C_LOADED = 8
N_COUNTERS = 9

# staging row fields
ST_KIND = 0  # 0 -> link queue, 1 -> router
ST_TARGET = 1
ST_SESSION = 2
ST_BORN = 3
ST_TUN = 4
ST_HOP = 5
ST_SYN = 6
ST_W = 7


@njit(cache=True)
def rq_push(bufs, head, size, q, born):
    buf = bufs[q]
    cap = buf.shape[0]
    n = size[q]
    if n == cap:
        new = np.empty(2 * cap, np.int64)
        h = head[q]
        for k in range(n):
            new[k] = buf[(h + k) % cap]
        bufs[q] = new
        head[q] = 0
        buf = new
        cap = 2 * cap
    buf[(head[q] + n) % cap] = born
    size[q] = n + 1


@njit(cache=True)
def rq_pop(bufs, head, size, q):
    buf = bufs[q]
    h = head[q]
    born = buf[h]
    head[q] = (h + 1) % buf.shape[0]
    size[q] -= 1
    return born


@njit(cache=True)
def lq_push(bufs, head, size, q, born, tun, hop, seq, syn):
    buf = bufs[q]
    cap = buf.shape[0]
    n = size[q]
    if n == cap:
        new = np.empty((2 * cap, NF), np.int64)
        h = head[q]
        for k in range(n):
            j = (h + k) % cap
            for f in range(NF):
                new[k, f] = buf[j, f]
        bufs[q] = new
        head[q] = 0
        buf = new
        cap = 2 * cap
    pos = (head[q] + n) % cap
    buf[pos, BORN] = born
    buf[pos, TUN] = tun
    buf[pos, HOP] = hop
    buf[pos, SEQ] = seq
    buf[pos, SYN] = syn
    size[q] = n + 1


@njit(cache=True)
def decide(
    kind, Q, F, u, T, biased_gate, elig, bias, sp_next, lor_f,
    tun_src, tun_dst, tun_rin, tun_rmin, mu, weight,
):
    """Fill ``mu[e, s]`` (packets to inject) and the contention ``weight[e]``."""
    E = mu.shape[0]
    S = mu.shape[1]
    mu[:, :] = 0
    weight[:] = 0
    if kind == SP:
        R = Q.shape[0]
        for r in range(R):
            for s in range(S):
                e = sp_next[r, s]
                if e < 0:
                    continue
                used = 0
                for c in range(S):
                    used += mu[e, c]
                take = min(Q[r, s], tun_rin[e] - used)
                if take > 0:
                    mu[e, s] = take
        return
    if kind == LOR:
        for e in range(E):
            if F[e] >= T:
                continue
            tot = 0.0
            for s in range(S):
                tot += lor_f[e, s]
            if tot <= 0.0:
                continue
            # session draw N(t) with P(N = c) proportional to f_c
            x = u[e, 0] * tot
            acc = 0.0
            chosen = -1
            for s in range(S):
                if lor_f[e, s] <= 0.0:
                    continue
                acc += lor_f[e, s]
                chosen = s
                if x < acc:
                    break
            if u[e, 1] < tot / tun_rmin[e]:
                mu[e, chosen] = tun_rmin[e]
        return
    for e in range(E):
        i = tun_src[e]
        j = tun_dst[e]
        cs = -1
        best = 0
        for s in range(S):
            if not elig[e, s]:
                continue
            score = Q[i, s] - Q[j, s]
            if kind == BPSP:
                score += bias[i, s] - bias[j, s]
            if cs < 0 or score > best:
                cs = s
                best = score
        if cs < 0:
            continue
        raw = Q[i, cs] - Q[j, cs]
        if kind == BPT:
            ok = raw > 0 and F[e] <= T
            w = raw
        elif kind == BPT2:
            ok = raw > F[e] and F[e] <= T
            w = raw - F[e]
        elif kind == BPSP:
            ok = best > 0 if biased_gate else raw > 0
            w = best
        else:
            ok = raw > 0
            w = raw
        if ok:
            mu[e, cs] = tun_rin[e]
            weight[e] = w


@njit(cache=True)
def run_chunk(
    t0, n_slots, A, U,
    # layout
    tun_src, tun_dst, tun_rin, tun_rmin, tun_M, tun_hops, tun_in, in_cap, lcap, dest,
    # policy
    pol_kind, T, biased_gate, elig, bias, sp_next, lor_f,
    # discipline and options
    disc_kind, rank, dummy, t0_tun, fmax, check_loaded, check_abs, warmup, strict,
    # state
    rq_bufs, rq_head, rq_size, lq_bufs, lq_head, lq_size, lq_seq, F, below,
    ctr, delay_sum, delay_cnt, deliv, inj_acc, phi_acc,
    # outputs
    backlog, record, F_tr, phi_tr, mu_tr, Q_tr, stage,
):
    E = tun_src.shape[0]
    S = dest.shape[0]
    R = rq_head.shape[0] // S
    L = lcap.shape[0]
    Q = np.zeros((R, S), np.int64)
    mu = np.zeros((E, S), np.int64)
    weight = np.zeros(E, np.int64)
    phi = np.zeros(E, np.int64)
    injected = np.zeros(E, np.int64)
    F0 = np.zeros(E, np.int64)
    in_rem = np.zeros(in_cap.shape[0], np.int64)
    nq = np.zeros(S, np.int64)
    quota = np.zeros(S, np.int64)
    order = np.zeros(E, np.int64)
    u_empty = np.zeros((E, 2))
    for k in range(n_slots):
        t = t0 + k
        # (1) observe slot-start state
        total = 0
        for r in range(R):
            for s in range(S):
                Q[r, s] = rq_size[r * S + s]
                total += Q[r, s]
        backlog[k, 0] = total
        for e in range(E):
            F0[e] = F[e]
            total += F[e]
            phi[e] = 0
            injected[e] = 0
        backlog[k, 1] = total
        if record:
            for e in range(E):
                F_tr[k, e] = F[e]
            for r in range(R):
                for s in range(S):
                    Q_tr[k, r, s] = Q[r, s]
        u = U[k] if U.shape[0] > 0 else u_empty
        decide(pol_kind, Q, F0, u, T, biased_gate, elig, bias, sp_next, lor_f,
               tun_src, tun_dst, tun_rin, tun_rmin, mu, weight)
        for e in range(E):
            tot = 0
            for s in range(S):
                tot += mu[e, s]
            if tot > tun_rin[e]:
                raise ValueError("routing decision exceeds the tunnel input capacity")
        n_st = 0
        # (3) forwarder links serve their slot-start backlog
        for lq in range(L):
            total = 0
            for s in range(S):
                nq[s] = lq_size[lq * S + s]
                total += nq[s]
            if total == 0:
                continue
            budget = min(lcap[lq], total)
            if disc_kind == FIFO:
                for s in range(S):
                    quota[s] = nq[s]
            else:
                quota[:] = split_counts(disc_kind, nq, budget, rank)
            for _ in range(budget):
                bs = -1
                bseq = 0
                for s in range(S):
                    q = lq * S + s
                    if quota[s] > 0 and lq_size[q] > 0:
                        sq = lq_bufs[q][lq_head[q], SEQ]
                        if bs < 0 or sq < bseq:
                            bs = s
                            bseq = sq
                q = lq * S + bs
                buf = lq_bufs[q]
                h = lq_head[q]
                born = buf[h, BORN]
                tun = buf[h, TUN]
                hop = buf[h, HOP]
                syn = buf[h, SYN]
                lq_head[q] = (h + 1) % buf.shape[0]
                lq_size[q] -= 1
                quota[bs] -= 1
                if hop == tun_M[tun]:
                    phi[tun] += 1
                    F[tun] -= 1
                    stage[n_st, ST_KIND] = 1
                    stage[n_st, ST_TARGET] = tun_dst[tun]
                else:
                    stage[n_st, ST_KIND] = 0
                    stage[n_st, ST_TARGET] = tun_hops[tun, hop + 1]
                stage[n_st, ST_SESSION] = bs
                stage[n_st, ST_BORN] = born
                stage[n_st, ST_TUN] = tun
                stage[n_st, ST_HOP] = hop + 1
                stage[n_st, ST_SYN] = syn
                n_st += 1
        # (2) routers inject, tunnels with larger weight first
        m = 0
        for e in range(E):
            tot = 0
            for s in range(S):
                tot += mu[e, s]
            if tot > 0:
                a = m
                while a > 0 and (weight[order[a - 1]] < weight[e]):
                    order[a] = order[a - 1]
                    a -= 1
                order[a] = e
                m += 1
        for i in range(in_cap.shape[0]):
            in_rem[i] = in_cap[i]
        for a in range(m):
            e = order[a]
            i = tun_src[e]
            for s in range(S):
                want = min(mu[e, s], in_rem[tun_in[e]])
                if want <= 0:
                    continue
                q = i * S + s
                real = min(want, rq_size[q])
                syn_n = want - real if dummy else 0
                in_rem[tun_in[e]] -= real + syn_n
                for p in range(real + syn_n):
                    if p < real:
                        born = rq_pop(rq_bufs, rq_head, rq_size, q)
                        syn = 0
                    else:
                        born = t
                        syn = 1
                        ctr[C_SYN_IN] += 1
                    if tun_M[e] == 0:
                        phi[e] += 1
                        stage[n_st, ST_KIND] = 1
                        stage[n_st, ST_TARGET] = tun_dst[e]
                    else:
                        F[e] += 1
                        stage[n_st, ST_KIND] = 0
                        stage[n_st, ST_TARGET] = tun_hops[e, 1]
                    stage[n_st, ST_SESSION] = s
                    stage[n_st, ST_BORN] = born
                    stage[n_st, ST_TUN] = e
                    stage[n_st, ST_HOP] = 1
                    stage[n_st, ST_SYN] = syn
                    n_st += 1
                injected[e] += real + syn_n
                if t >= warmup:
                    inj_acc[e, s] += real + syn_n
        # (4) merge inboxes: forwarded and injected packets, then tunnel exits
        for p in range(n_st):
            s = stage[p, ST_SESSION]
            tgt = stage[p, ST_TARGET]
            syn = stage[p, ST_SYN]
            if stage[p, ST_KIND] == 0:
                lq_push(lq_bufs, lq_head, lq_size, tgt * S + s, stage[p, ST_BORN],
                        stage[p, ST_TUN], stage[p, ST_HOP], lq_seq[tgt], syn)
                lq_seq[tgt] += 1
            elif syn == 1:
                ctr[C_SYN_OUT] += 1
            elif tgt == dest[s]:
                ctr[C_DELIVERED] += 1
                if t >= warmup:
                    deliv[s] += 1
                    delay_sum[s] += t - stage[p, ST_BORN]
                    delay_cnt[s] += 1
            else:
                rq_push(rq_bufs, rq_head, rq_size, tgt * S + s, stage[p, ST_BORN])
        # (5) exogenous arrivals at the end of the slot
        for r in range(R):
            for s in range(S):
                na = A[k, r, s]
                for _ in range(na):
                    rq_push(rq_bufs, rq_head, rq_size, r * S + s, t)
                ctr[C_EXO] += na
        # online invariants on the slot-start backlog and this slot's output
        for e in range(E):
            if t >= warmup:
                phi_acc[e] += phi[e]
            if F0[e] > t0_tun[e]:
                ctr[C_LOADED] += 1
            if check_loaded:
                if F0[e] > t0_tun[e] and phi[e] != tun_rmin[e]:
                    ctr[C_LOADED_OUT] += 1
                    if strict:
                        raise RuntimeError("loaded tunnel output differs from its bottleneck capacity")
                if phi[e] > tun_rmin[e]:
                    ctr[C_OUTCAP] += 1
                    if strict:
                        raise RuntimeError("tunnel output exceeds its bottleneck capacity")
            if fmax >= 0 and F0[e] > fmax:
                ctr[C_FMAX] += 1
                if strict:
                    raise RuntimeError("tunnel backlog exceeds F_max")
            if check_abs:
                if below[e] == 1 and F0[e] >= T:
                    ctr[C_ABSORB] += 1
                    if strict:
                        raise RuntimeError("tunnel became loaded again under the oracle policy")
                if F0[e] < T:
                    below[e] = 1
        if record:
            for e in range(E):
                phi_tr[k, e] = phi[e]
                mu_tr[k, e] = injected[e]
