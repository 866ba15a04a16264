"""Discrete-event network simulator: arrivals, statistical mining, broadcast.

One run drives ``num_nodes`` full nodes over a full mesh with a fixed
propagation delay. Mining is statistical: each node's solve time for its
current candidate is exponential with mean ``difficulty / node_hashrate``;
no hashes are ever computed. Blocks are assembled greedily from the node's
pending pool up to the gas limit, carry up to two uncles, and are delivered
to every peer after the propagation delay.

Determinism: a run is a pure function of (config, run_index). Events are
processed in (time, sequence) order from a single heap, every random draw
comes from one generator seeded with (seed, run_index), and transaction
arrivals are precomputed into arrays (a transaction only becomes visible to
the chain when a node mines, so batch delivery is observationally equivalent
to one event per arrival).

Timestamps are integer seconds with the strict-monotonicity fix
``max(parent + 1, floor(now))``; the difficulty rule's interval term needs
integer intervals and production clients behave the same way.
"""

from __future__ import annotations

import heapq
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Iterator, Sequence, TextIO

import numpy as np

from .chain import (
    Address,
    Block,
    BlockHeader,
    BlockTree,
    Transaction,
    _TxSlice,
    header_digest,
    make_genesis,
)
from .consensus import (
    MIN_DIFFICULTY,
    DifficultyParams,
    compute_difficulty,
    eligible_uncles,
    fork_choice_head,
    validate_header,
)
from .metrics import RunStats, compute_run_stats

TRACE_HEADER = "time,kind,node,block_id,number,difficulty,timestamp,n_tx,n_uncles"


class InvalidConfig(ValueError):
    pass


@dataclass
class SimConfig:
    """Experiment input. Defaults follow the measured small-network setup:
    3 miners with equal shares, 0.25 s propagation, 100 tx/s arrivals,
    15M gas blocks, 45k gas / 0.759808 kB transactions.

    ``total_hashrate`` sets the scale of solve times (difficulty per second);
    the default of one base-difficulty per second keeps the difficulty
    floor from pinning short intervals, so every threshold in a sweep has a
    reachable operating point. ``initial_difficulty`` defaults to the
    closed-loop equilibrium for the configured threshold, computed by
    ``estimate_equilibrium_interval``; the adjustment rule moves difficulty
    by at most ~0.05% per block, far too slow to climb from the floor to a
    long-interval equilibrium within a bounded run.
    """

    lambda_: int = 3
    num_nodes: int = 3
    hash_shares: tuple[float, ...] | None = None
    total_hashrate: float = float(MIN_DIFFICULTY)
    propagation_delay: float = 0.25
    tx_rate: float = 100.0
    block_gas_limit: int = 15_000_000
    mean_tx_gas: int = 45_000
    tx_size_kb: float = 0.759808
    sim_duration: float = 1000.0
    num_runs: int = 100
    seed: int = 1
    warmup_blocks: int = 100
    initial_difficulty: int | None = None
    # Optional per-link delays {(src, dst): seconds} for sensitivity runs.
    link_delays: dict[tuple[int, int], float] | None = None
    # Optional gas distribution: callable(rng, n) -> int array.
    tx_gas_sampler: Callable | None = None
    # Literal heaviest-subtree fork choice; accepted but not implemented.
    ghost_subtree: bool = False

    def __post_init__(self) -> None:
        if self.hash_shares is not None:
            self.hash_shares = tuple(float(s) for s in self.hash_shares)

    def shares(self) -> tuple[float, ...]:
        if self.hash_shares is None:
            return tuple(1.0 / self.num_nodes for _ in range(self.num_nodes))
        return self.hash_shares

    def validate(self) -> None:
        if self.num_nodes < 1:
            raise InvalidConfig("num_nodes must be >= 1")
        if self.lambda_ < 1 or int(self.lambda_) != self.lambda_:
            raise InvalidConfig("lambda must be a positive integer (seconds)")
        shares = self.shares()
        if len(shares) != self.num_nodes:
            raise InvalidConfig(
                f"hash_shares has {len(shares)} entries for {self.num_nodes} nodes"
            )
        if any(s <= 0 for s in shares):
            raise InvalidConfig("every hash share must be positive")
        if abs(math.fsum(shares) - 1.0) > 1e-9:
            raise InvalidConfig("hash shares must sum to 1")
        if self.total_hashrate <= 0:
            raise InvalidConfig("total_hashrate must be positive")
        if self.propagation_delay < 0:
            raise InvalidConfig("propagation_delay must be non-negative")
        if self.tx_rate < 0:
            raise InvalidConfig("tx_rate must be non-negative")
        if self.block_gas_limit <= 0 or self.mean_tx_gas <= 0:
            raise InvalidConfig("gas limit and mean transaction gas must be positive")
        if self.mean_tx_gas > self.block_gas_limit:
            raise InvalidConfig("mean_tx_gas cannot exceed the block gas limit")
        if self.tx_size_kb <= 0:
            raise InvalidConfig("tx_size_kb must be positive")
        if self.sim_duration <= 0:
            raise InvalidConfig("sim_duration must be positive")
        if self.num_runs < 1:
            raise InvalidConfig("num_runs must be >= 1")
        if self.warmup_blocks < 0:
            raise InvalidConfig("warmup_blocks must be non-negative")
        if self.initial_difficulty is not None and self.initial_difficulty < MIN_DIFFICULTY:
            raise InvalidConfig(f"initial_difficulty must be >= {MIN_DIFFICULTY}")
        if self.ghost_subtree:
            raise NotImplementedError(
                "literal heaviest-subtree fork choice is a stub; use the default "
                "total-difficulty rule"
            )

    def difficulty_params(self) -> DifficultyParams:
        return DifficultyParams(lambda_=int(self.lambda_))

    def delay(self, src: int, dst: int) -> float:
        if self.link_delays is not None:
            return self.link_delays.get((src, dst), self.propagation_delay)
        return self.propagation_delay


def _zeta_drift(m: float, lam: int, delay: float, shares: Sequence[float]) -> float:
    """Expected per-block difficulty step (in units of one step) at mean
    interval ``m``: positive means difficulty rises, negative it falls."""
    if len(shares) > 1:
        stale = sum(s * (1.0 - math.exp(-delay * (1.0 - s) / m)) for s in shares)
    else:
        stale = 0.0
    expected_floor = 0.0
    for k in itertools.count(1):
        threshold = k * lam
        p = 1.0 if threshold <= 1 else math.exp(-(threshold - 0.5) / m)
        expected_floor += p
        if p < 1e-12 or k > 500:
            break
    return (1.0 + stale) - expected_floor


def estimate_equilibrium_interval(
    lam: int, delay: float, shares: Sequence[float]
) -> float:
    """Mean block interval at which the difficulty update has zero drift.

    Models the interval as exponential, rounded to integer seconds with a
    one-second minimum, and credits the uncle term with the expected stale
    fraction. Intervals cannot regulate below one second (the timestamp rule
    forces intervals >= 1), so the estimate is clamped there.
    """
    lo, hi = 1.0, 4.0 * lam + 2.0
    if _zeta_drift(lo, lam, delay, shares) <= 0.0:
        return lo
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _zeta_drift(mid, lam, delay, shares) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def default_initial_difficulty(config: SimConfig) -> int:
    m = estimate_equilibrium_interval(
        int(config.lambda_), config.propagation_delay, config.shares()
    )
    return max(MIN_DIFFICULTY, round(config.total_hashrate * m))


def sample_mining_time(rng: np.random.Generator, difficulty: int, node_hashrate: float) -> float:
    """Exponential solve time with mean ``difficulty / node_hashrate``.

    Memorylessness makes re-sampling on a head change statistically
    equivalent to continuing the old draw.
    """
    if node_hashrate <= 0:
        raise ValueError("node hashrate must be positive")
    return float(rng.exponential(difficulty / node_hashrate))


def _sample_arrival_times(rate: float, duration: float, rng: np.random.Generator) -> np.ndarray:
    if rate <= 0:
        return np.empty(0, dtype=np.float64)
    chunks = []
    t = 0.0
    est = max(64, int(rate * duration * 0.25) + 64)
    while True:
        gaps = rng.exponential(1.0 / rate, size=est)
        chunk = t + np.cumsum(gaps)
        if chunk[-1] >= duration:
            chunks.append(chunk[chunk < duration])
            break
        chunks.append(chunk)
        t = float(chunk[-1])
    return np.concatenate(chunks)


class TxTable:
    """Arrival-ordered transaction store working on integer ids.

    The event loop never touches Transaction objects; ``tx(i)`` materialises
    one lazily for analysis and contract replay. Injected transactions (the
    metering pipeline) keep their payloads and are re-numbered into arrival
    order.
    """

    def __init__(
        self,
        times: np.ndarray,
        origins: np.ndarray,
        gas: np.ndarray,
        size_kb: float,
        injected: dict[int, Transaction],
    ):
        self.times = times
        self.origins = origins
        self.gas = gas
        self.size_kb = size_kb
        self.injected = injected
        self.count = len(times)
        self._node_addr: dict[int, Address] = {}

    def _addr(self, node: int) -> Address:
        addr = self._node_addr.get(node)
        if addr is None:
            addr = Address.from_node(node)
            self._node_addr[node] = addr
        return addr

    def tx(self, i: int) -> Transaction:
        inj = self.injected.get(i)
        if inj is not None:
            return inj
        return Transaction(
            tx_id=i,
            sender=self._addr(int(self.origins[i])),
            gas=int(self.gas[i]),
            size_kb=self.size_kb,
            payload=None,
        )


def build_tx_table(
    config: SimConfig,
    rng: np.random.Generator,
    injected: Sequence[tuple[float, int, Transaction]] = (),
) -> TxTable:
    """Draw the Poisson arrival stream and merge any injected transactions.

    Injected entries are (time, origin_node, transaction); transactions are
    re-numbered by final arrival order so tx ids equal arrival indices.
    """
    stat_times = _sample_arrival_times(config.tx_rate, config.sim_duration, rng)
    n_stat = len(stat_times)
    stat_origins = (
        rng.integers(0, config.num_nodes, size=n_stat)
        if n_stat
        else np.empty(0, dtype=np.int64)
    )
    if config.tx_gas_sampler is not None and n_stat:
        stat_gas = np.asarray(config.tx_gas_sampler(rng, n_stat), dtype=np.int64)
        if len(stat_gas) != n_stat or (stat_gas <= 0).any():
            raise InvalidConfig("tx_gas_sampler must return positive gas per transaction")
    else:
        stat_gas = np.full(n_stat, config.mean_tx_gas, dtype=np.int64)

    if injected:
        inj = sorted(injected, key=lambda item: item[0])
        inj_times = np.array([item[0] for item in inj], dtype=np.float64)
        inj_origins = np.array([item[1] for item in inj], dtype=np.int64)
        inj_gas = np.array([item[2].gas for item in inj], dtype=np.int64)
        times = np.concatenate([stat_times, inj_times])
        origins = np.concatenate([stat_origins, inj_origins])
        gas = np.concatenate([stat_gas, inj_gas])
        order = np.argsort(times, kind="stable")
        times, origins, gas = times[order], origins[order], gas[order]
        position = {int(old): new for new, old in enumerate(order)}
        injected_map = {
            position[n_stat + k]: replace(item[2], tx_id=position[n_stat + k])
            for k, item in enumerate(inj)
        }
    else:
        times, origins, gas = stat_times, stat_origins, stat_gas
        injected_map = {}
    return TxTable(times=times, origins=origins, gas=gas, size_kb=config.tx_size_kb,
                   injected=injected_map)


def generate_tx_arrivals(
    config: SimConfig, rng: np.random.Generator
) -> Iterator[tuple[float, Transaction]]:
    """Poisson arrival stream over [0, sim_duration) as (time, transaction).

    Identical seeds yield identical streams; a zero rate yields nothing.
    """
    table = build_tx_table(config, rng)
    for i in range(table.count):
        yield float(table.times[i]), table.tx(i)


def fill_block(pool: Iterable[Transaction], gas_limit: int) -> list[Transaction]:
    """Greedy selection in arrival order, stopping at the first transaction
    that would push the gas sum past ``gas_limit``."""
    chosen: list[Transaction] = []
    total = 0
    for tx in sorted(pool, key=lambda t: t.tx_id):
        if total + tx.gas > gas_limit:
            break
        chosen.append(tx)
        total += tx.gas
    return chosen


class EventKind(Enum):
    TX_ARRIVAL = "tx_arrival"  # arrivals are table-driven; kept for traces/tools
    BLOCK_MINED = "mined"
    BLOCK_RECEIVED = "received"


@dataclass(slots=True)
class Event:
    time: float
    sequence: int
    kind: EventKind
    node: int
    block: Block | None = None
    epoch: int = 0

    def __lt__(self, other: "Event") -> bool:
        return (self.time, self.sequence) < (other.time, other.sequence)


class NodeState:
    """One full node: local tree, fork-choice head, pending pool.

    The pool works on transaction ids: a min-heap of available ids plus the
    set of ids on the node's current canonical chain. Heap entries are
    removed lazily; ids the node itself consumed into a block are tracked in
    ``popped`` so a reorg can push them back.
    """

    __slots__ = (
        "index",
        "table",
        "tree",
        "head_block",
        "head_key",
        "receive_seq",
        "_seq",
        "orphans",
        "epoch",
        "mining_deadline",
        "heap",
        "canonical",
        "popped",
        "own_ids",
        "own_times",
        "foreign_ids",
        "foreign_times",
        "own_ptr",
        "foreign_ptr",
    )

    def __init__(self, index: int, genesis: Block, table: TxTable):
        self.index = index
        self.table = table
        self.tree = BlockTree(genesis)
        self.head_block = genesis
        self.head_key = (-self.tree.total_difficulty[genesis.block_id], 0, genesis.block_id)
        self.receive_seq: dict[str, int] = {genesis.block_id: 0}
        self._seq = itertools.count(1)
        self.orphans: dict[str, list[Block]] = {}
        self.epoch = 0
        self.mining_deadline = math.inf
        self.heap: list[int] = []
        self.canonical: set[int] = set()
        self.popped: set[int] = set()
        own_mask = table.origins == index
        self.own_ids = np.flatnonzero(own_mask).tolist()
        self.own_times = table.times[own_mask].tolist()
        self.foreign_ids = np.flatnonzero(~own_mask).tolist()
        self.foreign_times = table.times[~own_mask].tolist()
        self.own_ptr = 0
        self.foreign_ptr = 0

    @property
    def current_head(self) -> str:
        return self.head_block.block_id

    @property
    def known_blocks(self) -> set[str]:
        return set(self.tree.blocks)

    def note_received(self, block_id: str) -> int:
        seq = next(self._seq)
        self.receive_seq[block_id] = seq
        return seq

    def catch_up(self, now: float, delay: float) -> None:
        """Deliver arrivals due by ``now``: own immediately, foreign delayed."""
        i, ids, times = self.own_ptr, self.own_ids, self.own_times
        heap = self.heap
        while i < len(ids) and times[i] <= now:
            heapq.heappush(heap, ids[i])
            i += 1
        self.own_ptr = i
        cutoff = now - delay
        j, ids, times = self.foreign_ptr, self.foreign_ids, self.foreign_times
        while j < len(ids) and times[j] <= cutoff:
            heapq.heappush(heap, ids[j])
            j += 1
        self.foreign_ptr = j

    def fill(self, gas: np.ndarray, gas_limit: int) -> tuple[list[int], int]:
        """Pop available ids in arrival order until the gas limit binds."""
        heap = self.heap
        canonical = self.canonical
        taken: list[int] = []
        total = 0
        while heap:
            i = heap[0]
            if i in canonical:
                heapq.heappop(heap)
                continue
            g = int(gas[i])
            if total + g > gas_limit:
                break
            heapq.heappop(heap)
            self.popped.add(i)
            taken.append(i)
            total += g
        return taken, total

    def pending_ids(self) -> set[int]:
        """Delivered, not on the canonical chain (analysis helper)."""
        delivered = set(self.own_ids[: self.own_ptr])
        delivered.update(self.foreign_ids[: self.foreign_ptr])
        return delivered - self.canonical

    @property
    def pending_pool(self) -> set[Transaction]:
        """Materialised view of the pending pool (inspection only; the event
        loop works on the id sets)."""
        return {self.table.tx(i) for i in self.pending_ids()}


@dataclass
class RunResult:
    trees: list[BlockTree]
    heads: list[str]
    stats: RunStats
    table: TxTable

    @property
    def tree(self) -> BlockTree:
        return self.trees[0]

    @property
    def head(self) -> str:
        return self.heads[0]

    def canonical_blocks(self) -> list[Block]:
        return self.trees[0].canonical_chain(self.heads[0])


class Simulation:
    """One deterministic run of the network."""

    def __init__(
        self,
        config: SimConfig,
        run_index: int,
        injected: Sequence[tuple[float, int, Transaction]] = (),
        trace: TextIO | None = None,
    ):
        config.validate()
        self.config = config
        self.run_index = run_index
        self.params = config.difficulty_params()
        self.rng = np.random.default_rng([config.seed & (2**64 - 1), run_index & (2**64 - 1)])
        self.table = build_tx_table(config, self.rng, injected)
        difficulty0 = (
            config.initial_difficulty
            if config.initial_difficulty is not None
            else default_initial_difficulty(config)
        )
        self.genesis = make_genesis(difficulty0)
        self.nodes = [NodeState(i, self.genesis, self.table) for i in range(config.num_nodes)]
        self.events: list[Event] = []
        self._sequence = itertools.count()
        self.trace = trace
        if trace is not None:
            trace.write(TRACE_HEADER + "\n")

    def _push(self, time: float, kind: EventKind, node: int, block: Block | None = None,
              epoch: int = 0) -> None:
        heapq.heappush(self.events, Event(time, next(self._sequence), kind, node, block, epoch))

    def _trace(self, time: float, kind: str, node: int, block: Block) -> None:
        if self.trace is None:
            return
        h = block.header
        self.trace.write(
            f"{time:.6f},{kind},{node},{h.block_id},{h.number},{h.difficulty},"
            f"{h.timestamp},{len(block.tx_ids)},{len(h.uncle_ids)}\n"
        )

    def _schedule_mining(self, node: NodeState, now: float) -> None:
        if now >= self.config.sim_duration:
            return
        node.epoch += 1
        head = node.head_block.header
        candidate_ts = max(head.timestamp + 1, int(now))
        trace = compute_difficulty(self.params, head, head.number + 1, candidate_ts)
        share = self.config.shares()[node.index]
        dt = sample_mining_time(
            self.rng, trace.result, self.config.total_hashrate * share
        )
        node.mining_deadline = now + dt
        self._push(now + dt, EventKind.BLOCK_MINED, node.index, epoch=node.epoch)

    def _build_block(
        self,
        number: int,
        parent_id: str,
        miner: int,
        difficulty: int,
        timestamp: int,
        uncle_ids: Sequence[str],
        tx_ids: Sequence[int],
        gas_used: int,
    ) -> Block:
        ids = tuple(tx_ids)
        block_id = header_digest(number, parent_id, miner, difficulty, timestamp, uncle_ids, ids)
        header = BlockHeader(
            block_id=block_id,
            number=number,
            parent_id=parent_id,
            miner=miner,
            difficulty=difficulty,
            timestamp=timestamp,
            uncle_ids=tuple(uncle_ids),
            gas_used=gas_used,
        )
        return Block(header=header, transactions=_TxSlice(self.table, ids), tx_ids=ids)

    def on_block_mined(self, node_index: int, now: float) -> Block:
        """Assemble and adopt a block on the node's current head, then
        broadcast it and restart mining on the new head."""
        node = self.nodes[node_index]
        parent = node.head_block
        number = parent.number + 1
        timestamp = max(parent.header.timestamp + 1, int(now))
        trace = compute_difficulty(self.params, parent.header, number, timestamp)
        uncles = eligible_uncles(node.tree, parent.block_id)
        node.catch_up(now, self.config.propagation_delay)
        tx_ids, gas_used = node.fill(self.table.gas, self.config.block_gas_limit)
        block = self._build_block(
            number, parent.block_id, node.index, trace.result, timestamp, uncles,
            tx_ids, gas_used,
        )
        node.tree.insert_block(block)
        seq = node.note_received(block.block_id)
        node.head_block = block
        node.head_key = (-node.tree.total_difficulty[block.block_id], seq, block.block_id)
        node.canonical.update(tx_ids)
        self._trace(now, "mined", node.index, block)
        for other in self.nodes:
            if other.index != node.index:
                self._push(
                    now + self.config.delay(node.index, other.index),
                    EventKind.BLOCK_RECEIVED,
                    other.index,
                    block=block,
                )
        self._schedule_mining(node, now)
        return block

    def on_block_received(self, node_index: int, block: Block, now: float,
                          reschedule: bool = True) -> None:
        """Insert a delivered block (buffering on unknown parents), then
        re-run fork choice and reorganise if the head changed."""
        node = self.nodes[node_index]
        queue = [block]
        while queue:
            b = queue.pop(0)
            if b.block_id in node.tree:
                continue
            if b.header.parent_id not in node.tree:
                node.orphans.setdefault(b.header.parent_id, []).append(b)
                continue
            if not validate_header(self.params, node.tree, b.header):
                # Simulator nodes are honest; a failure here is a bug.
                raise AssertionError(f"invalid header broadcast: {b.block_id}")
            node.tree.insert_block(b)
            seq = node.note_received(b.block_id)
            self._trace(now, "received", node.index, b)
            key = (-node.tree.total_difficulty[b.block_id], seq, b.block_id)
            if key < node.head_key:
                self._reorg(node, b, key, now, reschedule)
            queue.extend(node.orphans.pop(b.block_id, ()))

    def _reorg(self, node: NodeState, new_head: Block, new_key, now: float,
               reschedule: bool = True) -> None:
        """Move the node's canonical state from the old head to ``new_head``:
        abandoned blocks return their transactions to the pool, adopted
        blocks claim theirs, and mining restarts on the new head."""
        tree = node.tree
        old = node.head_block
        new = new_head
        removed: list[Block] = []
        added: list[Block] = []
        while old.number > new.number:
            removed.append(old)
            old = tree.blocks[old.header.parent_id]
        while new.number > old.number:
            added.append(new)
            new = tree.blocks[new.header.parent_id]
        while old.block_id != new.block_id:
            removed.append(old)
            old = tree.blocks[old.header.parent_id]
            added.append(new)
            new = tree.blocks[new.header.parent_id]
        for blk in removed:
            for i in blk.tx_ids:
                node.canonical.discard(i)
                if i in node.popped:
                    node.popped.discard(i)
                    heapq.heappush(node.heap, i)
        for blk in added:
            for i in blk.tx_ids:
                node.canonical.add(i)
        node.head_block = new_head
        node.head_key = new_key
        if reschedule:
            self._schedule_mining(node, now)

    def _settle(self) -> None:
        """Resolve end-of-run ties identically at every node.

        During the run each node breaks total-difficulty ties by first
        receipt (what a live client does). A tie still standing after the
        final deliveries would leave nodes split forever, so the measurement
        head is chosen with the tree-only rule (smaller block id), which is
        identical everywhere once the trees agree.
        """
        for node in self.nodes:
            node.catch_up(math.inf, self.config.propagation_delay)
            best = fork_choice_head(node.tree)
            if best != node.head_block.block_id:
                block = node.tree.blocks[best]
                key = (-node.tree.total_difficulty[best], node.receive_seq[best], best)
                self._reorg(node, block, key, self.config.sim_duration, reschedule=False)

    def run(self) -> RunResult:
        duration = self.config.sim_duration
        for node in self.nodes:
            self._schedule_mining(node, 0.0)
        events = self.events
        while events:
            ev = heapq.heappop(events)
            if ev.kind is EventKind.BLOCK_MINED:
                node = self.nodes[ev.node]
                if ev.epoch != node.epoch or ev.time > duration:
                    continue
                self.on_block_mined(ev.node, ev.time)
            else:
                self.on_block_received(ev.node, ev.block, ev.time,
                                       reschedule=ev.time <= duration)
        self._settle()

        node0 = self.nodes[0]
        tree0, head0 = node0.tree, node0.head_block.block_id
        chain = tree0.canonical_chain(head0)
        chain_tx = sum(len(b.tx_ids) for b in chain)
        confirmed_total = len(node0.canonical)
        if chain_tx != confirmed_total:
            raise AssertionError("a transaction appears twice on the canonical chain")
        generated = self.table.count
        pool_ids = node0.pending_ids()
        stale_ids: set[int] = set()
        canonical_ids = {b.block_id for b in chain}
        for bid, blk in tree0.blocks.items():
            if bid not in canonical_ids:
                stale_ids.update(blk.tx_ids)
        uncle_only = len(stale_ids - node0.canonical - pool_ids)
        pending = generated - confirmed_total - uncle_only

        stats = compute_run_stats(
            tree0,
            head0,
            duration,
            warmup=min(self.config.warmup_blocks, max(0, len(chain) - 2)),
            pending_tx=pending,
            generated_tx=generated,
            confirmed_tx_total=confirmed_total,
            uncle_only_tx=uncle_only,
        )
        return RunResult(
            trees=[n.tree for n in self.nodes],
            heads=[n.head_block.block_id for n in self.nodes],
            stats=stats,
            table=self.table,
        )


def run_simulation(
    config: SimConfig,
    run_index: int,
    injected: Sequence[tuple[float, int, Transaction]] = (),
    trace: TextIO | None = None,
) -> RunResult:
    """Run one deterministic simulation; identical (config, run_index) give
    bit-identical results."""
    return Simulation(config, run_index, injected, trace).run()


def _stats_worker(args: tuple[SimConfig, int]) -> RunStats:
    config, run_index = args
    return run_simulation(config, run_index).stats


def run_many(config: SimConfig, workers: int = 1) -> list[RunStats]:
    """Execute ``config.num_runs`` independent runs, in run-index order.

    Runs are embarrassingly parallel (each owns its generator seeded by
    (seed, run_index)); results are merged in index order so the worker
    count never changes the output.
    """
    config.validate()
    jobs = [(config, i) for i in range(config.num_runs)]
    if workers <= 1:
        return [_stats_worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, len(jobs) // (workers * 4))
        return list(pool.map(_stats_worker, jobs, chunksize=chunk))
