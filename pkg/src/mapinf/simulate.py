"""Discrete-event simulation of the full system: the validation oracle.

The simulator shares nothing with the analytic engine beyond the model
objects and the law samplers: arrivals follow the state's marked MAP by
competing exponential clocks, services hold customers individually,
environment jumps flush the service room, repairs suspend arrivals.
Every replication checks the conservation identity
    arrivals = served + in service + destroyed   (per type, exactly)
before reporting, so a bookkeeping bug cannot masquerade as noise.

Randomness: one Philox stream per replication, spawned from a single
seed sequence, so results are bit-reproducible for a fixed seed and
independent across replications.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from heapq import heappop, heappush

import numpy as np

from .errors import InsufficientDataError, NumericalFailure
from .mapproc import stationary_vector

# Tie priorities at equal event times: a flush beats everything (a
# service finishing exactly then is destroyed), repairs end before
# arrival clocks resume.
P_ENV, P_REPAIR, P_SERVICE, P_MAP = 0, 1, 2, 3

TRACE_CAP = 2000


def _law_sampler(law, rng):
    fam = law.family
    if fam == "exponential":
        scale = 1.0 / law.params[0]
        return lambda: rng.exponential(scale)
    if fam == "erlang":
        k, mu = law.params
        scale = 1.0 / mu
        return lambda: rng.gamma(k, scale)
    if fam == "deterministic":
        v = law.params[0]
        return lambda: v
    if fam == "uniform":
        a, b = law.params
        return lambda: rng.uniform(a, b)
    w, mu = law._hyper_parts()
    cum = np.cumsum(w)
    cum[-1] = 1.0
    scales = 1.0 / mu

    def draw():
        idx = int(np.searchsorted(cum, rng.random(), side="right"))
        return rng.exponential(scales[idx])

    return draw


def _vector_sampler(rv_law, rng):
    parts = [_law_sampler(m, rng) for m in rv_law.marginals]
    return lambda: np.array([p() for p in parts])


def _phase_tables(model):
    """Per state and phase: exit rate, cumulative outcome probabilities,
    and the (next phase, mark) each outcome decodes to (mark None = no
    arrival)."""
    tables = []
    for st in model.states:
        m = st.order
        d0 = st.arrivals.d0
        marks = st.arrivals.marks
        per_phase = []
        for p in range(m):
            rate = -d0[p, p]
            probs = []
            decode = []
            for q in range(m):
                if q != p and d0[p, q] > 0.0:
                    probs.append(d0[p, q] / rate)
                    decode.append((q, None))
            for r in range(st.n_types):
                for q in range(m):
                    v = marks[r][p, q]
                    if v > 0.0:
                        probs.append(v / rate)
                        decode.append((q, r))
            cum = np.cumsum(probs)
            cum[-1] = 1.0
            per_phase.append((rate, cum, decode))
        tables.append(per_phase)
    return tables


def _pick(cum, u):
    return int(np.searchsorted(cum, u, side="right"))


def _simulate_path(model, rng, horizon, snap_times=(), sample_spacing=None,
                   sample_warmup=0.0, histogram=None, trace=None,
                   cycle_window=None, max_cycles=None):
    """One trajectory on [0, horizon].  Mutates histogram/trace if given.

    Returns snapshots of (in-service counts, in-service resource totals,
    cumulative destroyed, cumulative served, cumulative arrivals) at
    snap_times, plus final counters and the conservation verdict.
    cycle_window=(skip, count) additionally accumulates the flushed
    counts over that range of cycle indices; max_cycles stops the path
    right after that many catastrophes, making an infinite horizon safe.
    """
    kt = model.n_types
    kdim = model.resource_dim
    d = model.n_states
    tables = _phase_tables(model)
    phase_start = [np.cumsum(stationary_vector(st.arrivals)) for st in model.states]
    for c in phase_start:
        c[-1] = 1.0
    branch_cum = [np.cumsum([s.weight for s in model.kernel[i]]) for i in range(d)]
    for c in branch_cum:
        c[-1] = 1.0
    sojourn_draw = [[_law_sampler(sub.law, rng) for sub in model.kernel[i]] for i in range(d)]
    repair_draw = [_law_sampler(law, rng) for law in model.repairs]
    service_draw = [[_law_sampler(law, rng) for law in st.service] for st in model.states]
    zeta_draw = [[_vector_sampler(rv, rng) for rv in st.arrival_resources] for st in model.states]
    sigma_draw = [[_vector_sampler(rv, rng) for rv in st.served_resources] for st in model.states]
    init_cum = np.cumsum(model.initial)
    init_cum[-1] = 1.0

    heap = []
    seq = 0
    t = 0.0
    cycle = 0
    working = True
    state = _pick(init_cum, rng.random())
    phase = _pick(phase_start[state], rng.random())
    n_in = np.zeros(kt, dtype=np.int64)
    arrivals = np.zeros(kt, dtype=np.int64)
    served = np.zeros(kt, dtype=np.int64)
    destroyed = np.zeros(kt, dtype=np.int64)
    alpha = np.zeros((kt, kdim))
    beta = np.zeros((kt, kdim))
    active = {}
    next_cid = 0

    def push(time, prio, payload):
        nonlocal seq
        heappush(heap, (time, prio, seq, payload))
        seq += 1

    def schedule_cycle():
        j = _pick(branch_cum[state], rng.random())
        length = sojourn_draw[state][j]()
        push(t + length, P_ENV, ("cat", j, cycle))

    def schedule_map():
        rate, _, _ = tables[state][phase]
        push(t + rng.exponential(1.0 / rate), P_MAP, ("map", cycle))

    schedule_cycle()
    schedule_map()

    snap_times = np.asarray(snap_times, dtype=float)
    snaps = {
        "counts": np.zeros((snap_times.size, kt), dtype=np.int64),
        "alpha": np.zeros((snap_times.size, kt, kdim)),
        "destroyed": np.zeros((snap_times.size, kt), dtype=np.int64),
        "served": np.zeros((snap_times.size, kt), dtype=np.int64),
        "arrivals": np.zeros((snap_times.size, kt), dtype=np.int64),
    }
    snap_idx = 0
    next_sample = sample_warmup if sample_spacing is not None else np.inf
    n_sampled = 0
    n_cycles = 0
    cycle_losses = np.zeros(kt, dtype=np.int64)
    win_lo, win_hi = (-1, -1) if cycle_window is None else (
        cycle_window[0], cycle_window[0] + cycle_window[1])

    def take_snaps(upto):
        nonlocal snap_idx, next_sample, n_sampled
        while snap_idx < snap_times.size and snap_times[snap_idx] < upto:
            snaps["counts"][snap_idx] = n_in
            snaps["alpha"][snap_idx] = alpha
            snaps["destroyed"][snap_idx] = destroyed
            snaps["served"][snap_idx] = served
            snaps["arrivals"][snap_idx] = arrivals
            snap_idx += 1
        if histogram is not None:
            # strict at the horizon: samples sit at warmup + k * spacing
            # for k = 0 .. n-1 when horizon = warmup + n * spacing
            while next_sample < upto and next_sample < horizon:
                histogram[tuple(int(x) for x in n_in)] = histogram.get(tuple(int(x) for x in n_in), 0) + 1
                n_sampled += 1
                next_sample += sample_spacing

    while heap:
        ev_time, prio, _, payload = heap[0]
        if ev_time > horizon:
            break
        take_snaps(ev_time + 1e-300)
        heappop(heap)
        t = ev_time
        kind = payload[0]
        if trace is not None and len(trace) < TRACE_CAP:
            trace.append((round(t, 12), kind, state, int(payload[1]) if kind != "map" else phase))
        if kind == "map":
            if payload[1] != cycle or not working:
                continue
            _, cum, decode = tables[state][phase]
            new_phase, mark = decode[_pick(cum, rng.random())]
            phase = new_phase
            if mark is not None:
                r = mark
                arrivals[r] += 1
                n_in[r] += 1
                zeta = zeta_draw[state][r]()
                alpha[r] += zeta
                cid = next_cid
                next_cid += 1
                active[cid] = (r, zeta)
                push(t + service_draw[state][r](), P_SERVICE, ("done", cid, cycle))
            schedule_map()
        elif kind == "done":
            _, cid, cyc = payload
            if cyc != cycle:
                continue
            r, zeta = active.pop(cid)
            n_in[r] -= 1
            served[r] += 1
            alpha[r] -= zeta
            beta[r] += sigma_draw[state][r]()
        elif kind == "cat":
            _, j, cyc = payload
            if win_lo <= n_cycles < win_hi:
                cycle_losses += n_in
            destroyed += n_in
            n_in[:] = 0
            alpha[:, :] = 0.0
            active.clear()
            working = False
            cycle += 1
            n_cycles += 1
            if max_cycles is not None and n_cycles >= max_cycles:
                break
            push(t + repair_draw[j](), P_REPAIR, ("up", j, cycle))
        else:  # "up": repair done, next working period starts
            _, j, cyc = payload
            state = j
            working = True
            phase = _pick(phase_start[state], rng.random())
            schedule_cycle()
            schedule_map()
    t = horizon
    take_snaps(np.inf)

    ok = bool(np.all(arrivals == served + n_in + destroyed))
    return {
        "snaps": snaps,
        "arrivals": arrivals,
        "served": served,
        "destroyed": destroyed,
        "in_service": n_in.copy(),
        "beta": beta,
        "conservation_ok": ok,
        "n_cycles": n_cycles,
        "n_sampled": n_sampled,
        "cycle_losses": cycle_losses,
    }


@dataclass(frozen=True)
class EstimateSet:
    """A point estimate with its standard error and sample size."""

    value: float
    se: float
    n: int

    def within(self, target, se_mult=3.0):
        return abs(self.value - target) <= se_mult * self.se


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    se = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else np.inf
    return EstimateSet(value=float(x.mean()), se=se, n=n)


def _variance_se(x):
    """Sample variance with its asymptotic standard error (4th moment)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    s2 = float(x.var(ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    se = float(np.sqrt(max(m4 - s2 * s2, 0.0) / n))
    return EstimateSet(value=s2, se=se, n=n)


@dataclass
class TransientSimulation:
    """Replication-level snapshots of the system at fixed times."""

    t_points: np.ndarray
    counts: np.ndarray
    alpha: np.ndarray
    destroyed: np.ndarray
    served: np.ndarray
    arrivals: np.ndarray
    seed: int
    trace_digest: str

    @property
    def replications(self):
        return self.counts.shape[0]

    def mean_in_service(self, r, t_idx):
        return _mean_se(self.counts[:, t_idx, r])

    def variance_in_service(self, r, t_idx):
        return _variance_se(self.counts[:, t_idx, r])

    def resource_in_service(self, r, c, t_idx):
        return _mean_se(self.alpha[:, t_idx, r, c])

    def loss_rate(self, r, t_idx_from, t_idx_to):
        window = self.t_points[t_idx_to] - self.t_points[t_idx_from]
        per_rep = (self.destroyed[:, t_idx_to, r] - self.destroyed[:, t_idx_from, r]) / window
        return _mean_se(per_rep)

    def to_dict(self):
        out = {
            "kind": "transient",
            "replications": int(self.replications),
            "seed": int(self.seed),
            "t_points": [float(t) for t in self.t_points],
            "trace_digest": self.trace_digest,
            "metrics": {},
        }
        kt = self.counts.shape[2]
        for r in range(kt):
            block = {}
            for p, t in enumerate(self.t_points):
                m = self.mean_in_service(r, p)
                v = self.variance_in_service(r, p)
                block[f"t={t:g}"] = {
                    "mean": m.value, "mean_se": m.se,
                    "variance": v.value, "variance_se": v.se,
                }
            out["metrics"][f"type{r + 1}"] = block
        return out


def simulate_transient(model, horizon, t_points, replications, seed, collect_trace=False):
    """Independent replications on [0, horizon], snapshotted at t_points."""
    if replications < 2:
        raise InsufficientDataError("need at least 2 replications for standard errors")
    t_points = np.sort(np.asarray(t_points, dtype=float))
    if t_points.size and t_points[-1] > horizon:
        raise InsufficientDataError(
            f"snapshot time {t_points[-1]} lies beyond the horizon {horizon}"
        )
    kt = model.n_types
    kdim = model.resource_dim
    p = t_points.size
    counts = np.zeros((replications, p, kt), dtype=np.int64)
    alpha = np.zeros((replications, p, kt, kdim))
    destroyed = np.zeros((replications, p, kt), dtype=np.int64)
    served = np.zeros((replications, p, kt), dtype=np.int64)
    arrivals = np.zeros((replications, p, kt), dtype=np.int64)
    children = np.random.SeedSequence(seed).spawn(replications)
    trace = [] if collect_trace else None
    for i in range(replications):
        rng = np.random.Generator(np.random.Philox(children[i]))
        res = _simulate_path(model, rng, horizon, snap_times=t_points,
                             trace=trace if i == 0 else None)
        if not res["conservation_ok"]:
            raise NumericalFailure(f"conservation identity violated in replication {i}")
        counts[i] = res["snaps"]["counts"]
        alpha[i] = res["snaps"]["alpha"]
        destroyed[i] = res["snaps"]["destroyed"]
        served[i] = res["snaps"]["served"]
        arrivals[i] = res["snaps"]["arrivals"]
    digest = _trace_digest(trace) if collect_trace else ""
    return TransientSimulation(t_points=t_points, counts=counts, alpha=alpha,
                               destroyed=destroyed, served=served, arrivals=arrivals,
                               seed=seed, trace_digest=digest)


def simulate_cycle_losses(model, replications, seed, skip=10, cycles=10):
    """Flushed-per-catastrophe counts averaged over a window of cycles.

    Skipping the first cycles lets the embedded state chain forget the
    initial distribution, so the window mean estimates the stationary
    losses-per-cycle vector; replications stay independent, which keeps
    the standard errors honest.  Each path stops right after its last
    counted catastrophe, so no horizon needs to be guessed.

    Returns:
        List of per-type EstimateSet values.
    """
    if replications < 2:
        raise InsufficientDataError("need at least 2 replications for standard errors")
    kt = model.n_types
    per_rep = np.zeros((replications, kt))
    children = np.random.SeedSequence(seed).spawn(replications)
    for i in range(replications):
        rng = np.random.Generator(np.random.Philox(children[i]))
        res = _simulate_path(model, rng, np.inf, cycle_window=(skip, cycles),
                             max_cycles=skip + cycles)
        if not res["conservation_ok"]:
            raise NumericalFailure(f"conservation identity violated in replication {i}")
        per_rep[i] = res["cycle_losses"] / cycles
    return [_mean_se(per_rep[:, r]) for r in range(kt)]


def _trace_digest(trace):
    h = hashlib.blake2b(digest_size=16)
    for entry in trace or ():
        h.update(repr(entry).encode())
    return h.hexdigest()


@dataclass
class CountHistogram:
    """Point-sampled joint in-service count distribution of one long run."""

    counts: dict
    n_samples: int
    spacing: float
    warmup: float
    seed: int
    n_cycles: int

    def tv_distance(self, table):
        """Total variation against an analytic joint table (array)."""
        table = np.asarray(table)
        emp = np.zeros_like(table, dtype=float)
        outside = 0.0
        for key, c in self.counts.items():
            if all(k < s for k, s in zip(key, table.shape)):
                emp[key] = c / self.n_samples
            else:
                outside += c / self.n_samples
        return 0.5 * (float(np.abs(emp - table).sum()) + outside + (1.0 - float(table.sum())))

    def to_dict(self):
        return {
            "kind": "stationary_counts",
            "seed": int(self.seed),
            "n_samples": int(self.n_samples),
            "spacing": float(self.spacing),
            "warmup": float(self.warmup),
            "n_cycles": int(self.n_cycles),
            "histogram": {",".join(map(str, k)): int(v)
                          for k, v in sorted(self.counts.items())},
        }


def simulate_stationary_counts(model, n_samples, spacing, warmup, seed):
    """One long run, sampling the joint in-service counts at fixed spacing."""
    histogram = {}
    horizon = warmup + n_samples * spacing
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    res = _simulate_path(model, rng, horizon, sample_spacing=spacing,
                         sample_warmup=warmup, histogram=histogram)
    if not res["conservation_ok"]:
        raise NumericalFailure("conservation identity violated in the stationary run")
    if res["n_cycles"] < 30:
        raise InsufficientDataError(
            f"only {res['n_cycles']} environment cycles in the run; stationary "
            "estimates need at least 30"
        )
    return CountHistogram(counts=histogram, n_samples=res["n_sampled"], spacing=spacing,
                          warmup=warmup, seed=seed, n_cycles=res["n_cycles"])


@dataclass
class EnvironmentOccupancy:
    """Batched occupancy fractions of the environment process alone.

    fractions[b, i] is the share of batch b's total time attributed to
    state i's cycles (working in i plus the following repair), the
    quantity the stationary weights q predict.
    """

    fractions: np.ndarray
    transitions: int
    seed: int

    def estimate(self, i):
        return _mean_se(self.fractions[:, i])


def simulate_environment_only(model, transitions, seed, n_batches=20):
    """Simulate just the environment jump chain and clock, in batches."""
    if transitions < 10 * n_batches:
        raise InsufficientDataError("too few transitions for the requested batches")
    d = model.n_states
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    branch_cum = [np.cumsum([s.weight for s in model.kernel[i]]) for i in range(d)]
    for c in branch_cum:
        c[-1] = 1.0
    sojourn_draw = [[_law_sampler(sub.law, rng) for sub in model.kernel[i]] for i in range(d)]
    repair_draw = [_law_sampler(law, rng) for law in model.repairs]
    init_cum = np.cumsum(model.initial)
    init_cum[-1] = 1.0
    state = _pick(init_cum, rng.random())
    per_batch = transitions // n_batches
    fractions = np.zeros((n_batches, d))
    for b in range(n_batches):
        occ = np.zeros(d)
        for _ in range(per_batch):
            j = _pick(branch_cum[state], rng.random())
            occ[state] += sojourn_draw[state][j]() + repair_draw[j]()
            state = j
        fractions[b] = occ / occ.sum()
    return EnvironmentOccupancy(fractions=fractions, transitions=per_batch * n_batches,
                                seed=seed)
