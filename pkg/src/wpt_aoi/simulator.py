"""Seeded block-level Monte Carlo of the two-way link.

One replication walks the exact dynamics block by block: Bernoulli(p) packet
arrivals into the master's FCFS queue, exponential per-block nat deliveries
toward the head packet (whole-block quantization, no residue reuse), energy
transfer to the slave in idle blocks, an energy-gated best-effort uplink with
the same quantization, and the uplink age-of-information sawtooth.

Randomness comes from four counter-based Philox streams per replication
(arrival, downlink gain, harvest gain, uplink gain), each reproducible from
(seed, replication, stream-id) alone, so replications are independent and any
run is bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import SystemParams, derive

__all__ = [
    "SimConfig",
    "SimTrace",
    "SimStats",
    "MomentEstimate",
    "make_stream",
    "rng_exponential",
    "run",
    "run_replication",
    "estimate_moments",
    "stats_lines",
]

# stream ids within one replication
_STREAM_ARRIVAL = 0
_STREAM_DOWNLINK = 1
_STREAM_HARVEST = 2
_STREAM_UPLINK = 3


def make_stream(seed: int, rep: int, stream_id: int) -> np.random.Generator:
    """Independent, reproducible Philox stream keyed by (seed, rep, stream_id)."""
    ss = np.random.SeedSequence(entropy=(int(seed), int(rep), int(stream_id)))
    return np.random.Generator(np.random.Philox(ss))


def rng_exponential(gen: np.random.Generator, rate: float, size=None):
    """Inverse-transform exponential sample(s), -ln(u)/rate with u in (0, 1]."""
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    u = gen.random(size)
    return -np.log1p(-u) / rate


@dataclass(frozen=True)
class SimConfig:
    """One simulation request: parameters, horizon, seeding and policy toggle."""

    params: SystemParams
    n_blocks: int
    seed: int = 0
    warmup_blocks: int = 0
    uplink_in_busy_blocks: bool = False
    replications: int = 1

    def __post_init__(self):
        if self.warmup_blocks < 0 or self.n_blocks <= self.warmup_blocks:
            raise ValueError(
                f"need n_blocks > warmup_blocks >= 0, got {self.n_blocks}, {self.warmup_blocks}"
            )
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")


@dataclass
class SimTrace:
    """Event logs of one replication, plus optional per-block state arrays.

    Event values are post-warmup only.  Per-block arrays (queue_len, energy,
    busy, aoi) cover the whole horizon and are empty unless the replication
    ran with keep_blocks=True.
    """

    service_times: np.ndarray        # downlink S, blocks per delivered packet
    busy_periods: np.ndarray         # downlink B_D, blocks
    slot_times: np.ndarray           # s = idle blocks consumed per uplink transmit block
    harvest_waits: np.ndarray        # tau_H, idle blocks to reach one block's energy
    uplink_service_times: np.ndarray  # S_UL per delivered uplink packet
    uplink_transmit_counts: np.ndarray  # transmit blocks per uplink packet (same law as S)
    system_times: np.ndarray         # T_k per delivered uplink packet
    departure_epochs: np.ndarray     # n'_k
    generation_epochs: np.ndarray    # n_k
    queue_len: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    energy: np.ndarray = field(default_factory=lambda: np.empty(0, np.float64))
    busy: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint8))
    aoi: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))

    def write_events(self, path):
        """Line-delimited event export: one `kind,value,epoch` record per line."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("kind,value,epoch\n")
            for kind, values, epochs in (
                ("service", self.service_times, None),
                ("busy_period", self.busy_periods, None),
                ("slot", self.slot_times, None),
                ("harvest_wait", self.harvest_waits, None),
                ("uplink_service", self.uplink_service_times, self.departure_epochs),
                ("system_time", self.system_times, self.departure_epochs),
            ):
                for i, v in enumerate(values):
                    ep = "" if epochs is None else str(int(epochs[i]))
                    fh.write(f"{kind},{int(v)},{ep}\n")

    def write_blocks(self, path):
        """Line-delimited per-block export (requires keep_blocks=True)."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("block,queue_len,energy,busy,aoi\n")
            for n in range(len(self.queue_len)):
                fh.write(
                    f"{n + 1},{self.queue_len[n]},{float(self.energy[n])!r},"
                    f"{self.busy[n]},{self.aoi[n]}\n"
                )


@dataclass(frozen=True)
class MomentEstimate:
    """Sample mean and second raw moment with batch-means standard errors."""

    mean: float
    second: float
    se_mean: float
    se_second: float
    count: int
    sufficient: bool


@dataclass
class SimStats:
    """Aggregated estimates of one run (possibly several replications)."""

    avg_aoi: float
    avg_aoi_stderr: float
    q_hat: float
    q_hat_stderr: float
    K: int
    n_effective: int
    moments: dict[str, MomentEstimate]
    t_correlation: float
    final_queue_len: int
    replications: int


def estimate_moments(x: np.ndarray, n_batches: int = 20) -> MomentEstimate:
    """Batch-means estimate of mean and second raw moment of an event sample.

    Fewer than 100 events flags the estimate insufficient (NaN stderrs)
    instead of failing.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n == 0:
        return MomentEstimate(math.nan, math.nan, math.nan, math.nan, 0, False)
    mean = float(x.mean())
    second = float((x * x).mean())
    if n < 100:
        return MomentEstimate(mean, second, math.nan, math.nan, n, False)
    nb = min(n_batches, n // 5)
    cut = (n // nb) * nb
    batches = x[:cut].reshape(nb, -1)
    bm = batches.mean(axis=1)
    bm2 = (batches * batches).mean(axis=1)
    se_mean = float(bm.std(ddof=1) / math.sqrt(nb))
    se_second = float(bm2.std(ddof=1) / math.sqrt(nb))
    return MomentEstimate(mean, second, se_mean, se_second, n, True)


@njit(cache=True)
def _simulate_kernel(n_blocks, warmup, p, ell, nats_per_gain, harvest_per_gain,
                     e_tx, u_arr, g_dl, g_h, g_ul, allow_busy_uplink, keep_blocks):
    # downlink queue state
    q_len = 0
    dl_rem = 0.0
    dl_blocks = 0
    busy_run = 0
    # slave state
    energy = 0.0
    harvested_total = 0.0
    tx_blocks = 0
    ul_rem = ell
    ul_gen = 1
    ul_tx = 0         # transmit blocks spent on current uplink packet
    ul_idle = 0       # idle blocks spent on current uplink packet (S_UL counter)
    ul_busy_tx = 0    # busy-block transmits under the permissive toggle
    idle_since_tx = 0
    waiting = True    # accumulating energy toward the next transmit block
    wait_count = 0
    # AoI state
    age = 0
    aoi_sum = 0.0
    k_post = 0

    # event logs (trimmed on return)
    s_log = np.empty(n_blocks, np.int64)
    bd_log = np.empty(n_blocks, np.int64)
    slot_log = np.empty(n_blocks, np.int64)
    tau_log = np.empty(n_blocks, np.int64)
    sul_log = np.empty(n_blocks, np.int64)
    ul_s_log = np.empty(n_blocks, np.int64)
    t_log = np.empty(n_blocks, np.int64)
    dep_log = np.empty(n_blocks, np.int64)
    gen_log = np.empty(n_blocks, np.int64)
    ns = nb = nslot = ntau = nk = 0

    # 20-segment batches of post-warmup AoI and departures, for stderrs
    n_post = n_blocks - warmup
    seg_len = max(n_post // 20, 1)
    aoi_seg = np.zeros(20, np.float64)
    k_seg = np.zeros(20, np.int64)

    if keep_blocks:
        tr_q = np.empty(n_blocks, np.int64)
        tr_e = np.empty(n_blocks, np.float64)
        tr_b = np.empty(n_blocks, np.uint8)
        tr_a = np.empty(n_blocks, np.int64)
    else:
        tr_q = np.empty(0, np.int64)
        tr_e = np.empty(0, np.float64)
        tr_b = np.empty(0, np.uint8)
        tr_a = np.empty(0, np.int64)

    for n in range(1, n_blocks + 1):
        # a packet generated in block n starts service in block n+1 at the
        # earliest (late-arrival timing), so the block is busy iff the queue
        # already holds packets generated in earlier blocks
        busy = q_len > 0

        # AoI sample for this block: delivery within the block takes effect
        # from the next block, so the sawtooth peaks at the departure block
        age += 1
        if n > warmup:
            aoi_sum += age
            seg = (n - warmup - 1) // seg_len
            if seg > 19:
                seg = 19
            aoi_seg[seg] += age

        if busy:
            # (2) downlink service
            if dl_rem == 0.0:
                dl_rem = ell
            dl_blocks += 1
            busy_run += 1
            dl_rem -= g_dl[n - 1] * nats_per_gain
            if dl_rem <= 0.0:
                dl_rem = 0.0
                q_len -= 1
                if n > warmup:
                    s_log[ns] = dl_blocks
                    ns += 1
                dl_blocks = 0
        else:
            # (3) wireless power transfer in idle blocks
            e_in = g_h[n - 1] * harvest_per_gain
            energy += e_in
            harvested_total += e_in
            idle_since_tx += 1
            ul_idle += 1
            if waiting:
                wait_count += 1
                if energy >= e_tx:
                    if n > warmup:
                        tau_log[ntau] = wait_count
                        ntau += 1
                    waiting = False

        # (4) energy-gated uplink transmission
        eligible = (not busy) or allow_busy_uplink
        if eligible and (not waiting) and energy >= e_tx:
            energy -= e_tx
            tx_blocks += 1
            ul_tx += 1
            if busy:
                ul_busy_tx += 1
            if n > warmup:
                slot_log[nslot] = idle_since_tx
                nslot += 1
            idle_since_tx = 0
            ul_rem -= g_ul[n - 1] * nats_per_gain
            if ul_rem <= 0.0:
                # uplink departure
                if n > warmup:
                    t_log[nk] = n - ul_gen + 1
                    sul_log[nk] = ul_idle + ul_busy_tx
                    ul_s_log[nk] = ul_tx
                    dep_log[nk] = n
                    gen_log[nk] = ul_gen
                    nk += 1
                    k_post += 1
                    seg = (n - warmup - 1) // seg_len
                    if seg > 19:
                        seg = 19
                    k_seg[seg] += 1
                age = n - ul_gen + 1
                ul_gen = n + 1
                ul_rem = ell
                ul_tx = 0
                ul_idle = 0
                ul_busy_tx = 0
            # decide the wait state for the next transmit block
            if energy >= e_tx:
                if n > warmup:
                    tau_log[ntau] = 0
                    ntau += 1
            else:
                waiting = True
                wait_count = 0

        # downlink arrival generated during block n, in service from n+1
        if u_arr[n - 1] < p:
            q_len += 1
        # a busy period only ends when no packet is waiting after this
        # block's arrival draw; an arrival in the final service block keeps
        # the run going
        if busy and q_len == 0:
            if n > warmup:
                bd_log[nb] = busy_run
                nb += 1
            busy_run = 0

        if keep_blocks:
            tr_q[n - 1] = q_len
            tr_e[n - 1] = energy
            tr_b[n - 1] = 1 if busy else 0
            tr_a[n - 1] = age

    return (aoi_sum, k_post, q_len, energy, harvested_total, tx_blocks,
            s_log[:ns], bd_log[:nb], slot_log[:nslot], tau_log[:ntau],
            sul_log[:nk], ul_s_log[:nk], t_log[:nk], dep_log[:nk], gen_log[:nk],
            aoi_seg, k_seg, tr_q, tr_e, tr_b, tr_a)


def run_replication(config: SimConfig, rep: int = 0, keep_blocks: bool = False):
    """Run one replication; returns (SimTrace, summary dict).

    The summary holds the scalar outputs (aoi sum, departures, energy totals,
    per-segment batches) needed by run() to aggregate replications.
    """
    params = config.params
    n = int(config.n_blocks)
    u_arr = make_stream(config.seed, rep, _STREAM_ARRIVAL).random(n)
    g_dl = rng_exponential(make_stream(config.seed, rep, _STREAM_DOWNLINK), params.lam, n)
    g_h = rng_exponential(make_stream(config.seed, rep, _STREAM_HARVEST), params.lam, n)
    g_ul = rng_exponential(make_stream(config.seed, rep, _STREAM_UPLINK), params.lam, n)

    nats_per_gain = params.P_t * params.T_B / params.N0
    harvest_per_gain = params.eta * params.P_t * params.T_B
    e_tx = params.P_t * params.T_B

    (aoi_sum, k_post, q_len, energy, harvested, tx_blocks,
     s_log, bd_log, slot_log, tau_log, sul_log, ul_s_log, t_log, dep_log, gen_log,
     aoi_seg, k_seg, tr_q, tr_e, tr_b, tr_a) = _simulate_kernel(
        n, int(config.warmup_blocks), params.p, params.ell,
        nats_per_gain, harvest_per_gain, e_tx,
        u_arr, g_dl, g_h, g_ul,
        config.uplink_in_busy_blocks, keep_blocks,
    )

    trace = SimTrace(
        service_times=s_log, busy_periods=bd_log, slot_times=slot_log,
        harvest_waits=tau_log, uplink_service_times=sul_log,
        uplink_transmit_counts=ul_s_log,
        system_times=t_log, departure_epochs=dep_log, generation_epochs=gen_log,
        queue_len=tr_q, energy=tr_e, busy=tr_b, aoi=tr_a,
    )
    summary = {
        "aoi_sum": aoi_sum,
        "k_post": int(k_post),
        "final_queue_len": int(q_len),
        "energy": float(energy),
        "harvested": float(harvested),
        "tx_blocks": int(tx_blocks),
        "aoi_seg": aoi_seg,
        "k_seg": k_seg,
    }
    return trace, summary


_EVENT_FIELDS = {
    "S": "service_times",
    "s": "slot_times",
    "tau_H": "harvest_waits",
    "S_UL": "uplink_service_times",
    "B_D": "busy_periods",
    "T": "system_times",
}


def _lagged_pairs(traces):
    """Consecutive system-time pairs, never crossing a replication boundary."""
    a, b = [], []
    for tr in traces:
        t = tr.system_times
        if t.size >= 2:
            a.append(t[:-1])
            b.append(t[1:])
    if not a:
        return None
    return np.concatenate(a), np.concatenate(b)


def run(config: SimConfig, keep_traces: bool = False):
    """Run all replications and aggregate; returns (SimStats, list[SimTrace]).

    The trace list is empty unless keep_traces is set.
    """
    n_post = config.n_blocks - config.warmup_blocks
    traces = []
    summaries = []
    for rep in range(config.replications):
        trace, summary = run_replication(config, rep)
        traces.append(trace)
        summaries.append(summary)

    aois = np.array([s["aoi_sum"] / n_post for s in summaries])
    qs = np.array([s["k_post"] / n_post for s in summaries])
    if config.replications > 1:
        se_aoi = float(aois.std(ddof=1) / math.sqrt(len(aois)))
        se_q = float(qs.std(ddof=1) / math.sqrt(len(qs)))
    else:
        # fall back on the 20-segment batches of the single replication
        seg_len = max(n_post // 20, 1)
        a = summaries[0]["aoi_seg"][:20] / seg_len
        k = summaries[0]["k_seg"][:20] / seg_len
        se_aoi = float(a.std(ddof=1) / math.sqrt(a.size))
        se_q = float(k.std(ddof=1) / math.sqrt(k.size))

    moments = {}
    for name, attr in _EVENT_FIELDS.items():
        pooled = np.concatenate([getattr(tr, attr) for tr in traces])
        moments[name] = estimate_moments(pooled)

    pairs = _lagged_pairs(traces)
    if pairs is None or pairs[0].size < 2 or pairs[0].std() == 0:
        t_corr = math.nan
    else:
        t_corr = float(np.corrcoef(pairs[0], pairs[1])[0, 1])

    stats = SimStats(
        avg_aoi=float(aois.mean()),
        avg_aoi_stderr=se_aoi,
        q_hat=float(qs.mean()),
        q_hat_stderr=se_q,
        K=int(sum(s["k_post"] for s in summaries)),
        n_effective=n_post * config.replications,
        moments=moments,
        t_correlation=t_corr,
        final_queue_len=int(summaries[-1]["final_queue_len"]),
        replications=config.replications,
    )
    return stats, (traces if keep_traces else [])


def stats_lines(stats: SimStats) -> list[str]:
    """Flat key=value rendering of SimStats, stable across runs for a fixed seed."""
    out = [
        f"avg_aoi={stats.avg_aoi!r}",
        f"avg_aoi_stderr={stats.avg_aoi_stderr!r}",
        f"q_hat={stats.q_hat!r}",
        f"q_hat_stderr={stats.q_hat_stderr!r}",
        f"K={stats.K}",
        f"n_effective={stats.n_effective}",
        f"t_correlation={stats.t_correlation!r}",
        f"final_queue_len={stats.final_queue_len}",
        f"replications={stats.replications}",
    ]
    for name, est in stats.moments.items():
        out.append(
            f"moment.{name}={est.mean!r},{est.second!r},{est.se_mean!r},"
            f"{est.se_second!r},{est.count},{int(est.sufficient)}"
        )
    return out
