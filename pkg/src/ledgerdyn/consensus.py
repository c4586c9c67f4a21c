"""Simulated peer-to-peer network with work-based (Psi) fork choice.

Every node keeps its own chain. Each round: messages due this round are
delivered and validated, some nodes mine a block, and every node pushes its
current chain to its peers (subject to per-edge latency and severed edges).
Receivers adopt the Psi-maximal of their chain and the candidate. Psi is total
work with the head digest as a tiebreak, so distinct chains are never tied.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import networkx as nx
import numpy as np

from .ledger import Block, Chain, LedgerError, check_block, replay_chain, reward_to
from .rewards import BITCOIN, RewardSchedule
from .workload import WorkloadPolicy, draw_flows, ledger_block, substream


class ConsensusError(Exception):
    pass


class InvalidChain(ConsensusError):
    pass


class GenesisMismatch(ConsensusError):
    pass


class BadTopology(ConsensusError, ValueError):
    pass


@dataclass(frozen=True, order=True)
class PsiScore:
    total_work: float
    tiebreak: bytes


def psi(chain: Chain, *, check: bool = False) -> PsiScore:
    """Total work of the chain, tie-broken by head digest."""
    if check:
        try:
            replay_chain(chain)
        except LedgerError as exc:
            raise InvalidChain(str(exc)) from exc
    total = 0.0
    for b in chain.blocks:
        total += b.work
    return PsiScore(total, chain.head.digest)


def resolve(c1: Chain, c2: Chain) -> Chain:
    """The Psi-maximal of two chains sharing a genesis block."""
    if c1.genesis.digest != c2.genesis.digest:
        raise GenesisMismatch("chains do not share a genesis block")
    return c1 if psi(c1) >= psi(c2) else c2


def common_prefix(c1: Chain, c2: Chain) -> int:
    """Number of leading blocks the two chains share."""
    n = 0
    for a, b in zip(c1.blocks, c2.blocks):
        if a.digest != b.digest:
            break
        n += 1
    return n


# ---------------------------------------------------------------- topology


def make_graph(kind: str, n: int, p: float = 0.2, seed: int = 0, max_tries: int = 1000) -> nx.Graph:
    """complete | ring | random (Erdos-Renyi, resampled until connected)."""
    if n < 1:
        raise BadTopology("need at least one node")
    if kind == "complete":
        return nx.complete_graph(n)
    if kind == "ring":
        return nx.cycle_graph(n) if n > 2 else nx.path_graph(n)
    if kind == "random":
        rng = substream(seed, "topology")
        for _ in range(max_tries):
            g = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**31)))
            if nx.is_connected(g):
                return g
        raise BadTopology(f"no connected G({n}, {p}) found in {max_tries} draws")
    raise BadTopology(f"unknown topology {kind!r}")


@dataclass(frozen=True)
class Partition:
    """Edges between different groups are severed for rounds ``start <= r < end``."""

    start: int
    end: int
    groups: tuple[frozenset, ...]

    def severs(self, r: int, a: int, b: int) -> bool:
        if not self.start <= r < self.end:
            return False
        return not any(a in g and b in g for g in self.groups)


def split_nodes(n: int, parts: int, seed: int) -> tuple[frozenset, ...]:
    """Random near-equal split of nodes 0..n-1 into ``parts`` groups."""
    order = substream(seed, "partition").permutation(n)
    return tuple(frozenset(int(v) for v in order[i::parts]) for i in range(parts))


@dataclass(frozen=True)
class MiningPolicy:
    probability: float = 0.1
    work_min: float = 0.5
    work_max: float = 1.5
    until: int | None = None  # no mining from this round on
    workload: WorkloadPolicy = field(default_factory=lambda: WorkloadPolicy(sends_per_block=2))


@dataclass
class Node:
    id: int
    chain: Chain
    peers: set[int]
    controlled_accounts: tuple[str, ...]
    validated: set[bytes] = field(default_factory=set)


@dataclass
class NetworkTopology:
    nodes: list[Node]
    graph: nx.Graph
    partitions: list[Partition] = field(default_factory=list)
    latency: dict = field(default_factory=dict)  # frozenset({a, b}) -> rounds; default 1
    schedule: RewardSchedule = BITCOIN
    mining: MiningPolicy = field(default_factory=MiningPolicy)
    seed: int = 0
    finality_depth: int | None = None
    round: int = 0
    dropped: int = 0
    finality_rejections: int = 0
    inbox: dict = field(default_factory=lambda: defaultdict(list))
    history: list = field(default_factory=list)  # (round, agreement) at the end of each round
    last_mined: int = -1
    last_topology_change: int = -1
    _rng: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, graph: nx.Graph, *, schedule: RewardSchedule = BITCOIN, seed: int = 0,
              latency: int = 1, **kw) -> "NetworkTopology":
        if latency < 1:
            raise BadTopology("latency must be >= 1 round")
        genesis = Chain.from_genesis({f"n{v}": 0 for v in sorted(graph.nodes)}, schedule=schedule)
        nodes = [
            Node(v, genesis, set(graph.neighbors(v)), (f"n{v}",), {genesis.genesis.digest})
            for v in sorted(graph.nodes)
        ]
        lat = {frozenset(e): latency for e in graph.edges}
        return cls(nodes, graph, latency=lat, schedule=schedule, seed=seed, **kw)

    def rng(self, name: str) -> np.random.Generator:
        if name not in self._rng:
            self._rng[name] = substream(self.seed, name)
        return self._rng[name]

    def severed(self, r: int, a: int, b: int) -> bool:
        return any(p.severs(r, a, b) for p in self.partitions)

    def partitioned(self, r: int) -> bool:
        return any(p.start <= r < p.end for p in self.partitions)

    def diameter(self) -> int:
        return nx.diameter(self.graph)

    def best_chain(self) -> Chain:
        best = self.nodes[0].chain
        for node in self.nodes[1:]:
            best = resolve(best, node.chain)
        return best

    # ------------------------------------------------------------ node behaviour

    def receive(self, node: Node, chain: Chain) -> bool:
        """Validate ``chain`` at ``node`` and adopt it if it wins; returns True on adoption."""
        if chain.head.digest == node.chain.head.digest:
            return False
        if chain.genesis.digest != node.chain.genesis.digest:
            self.dropped += 1
            return False
        if not self._validate(node, chain):
            self.dropped += 1
            return False
        if resolve(node.chain, chain) is node.chain:
            return False
        if self.finality_depth is not None:
            fork = common_prefix(node.chain, chain)
            # blocks at heights < height - depth + 1 are final
            if fork <= node.chain.height - self.finality_depth:
                self.finality_rejections += 1
                return False
        node.chain = chain
        return True

    def _validate(self, node: Node, chain: Chain) -> bool:
        blocks = chain.blocks
        start = len(blocks)
        while start > 0 and blocks[start - 1].digest not in node.validated:
            start -= 1
        if start == 0:
            return False  # genesis is always known; reaching it means a forged genesis
        for k in range(start, len(blocks)):
            if blocks[k].height != k:
                return False
            try:
                check_block(blocks[k - 1], blocks[k], schedule=self.schedule)
            except LedgerError:
                return False
            node.validated.add(blocks[k].digest)
        return True

    def mine(self, node: Node) -> Block:
        """Extend ``node``'s chain with random valid sends and the scheduled reward."""
        chain = node.chain
        state = chain.head.state
        u = draw_flows(self.rng("workload"), state.balance_vector(), self.mining.workload)
        tblock = ledger_block(state, u)
        lo, hi = self.mining.work_min, self.mining.work_max
        work = float(self.rng("mining").uniform(lo, hi)) if hi > lo else float(lo)
        new = chain.mine_to(node.controlled_accounts[0], tblock.txs, work)
        node.validated.add(new.head.digest)
        node.chain = new
        return new.head

    def broadcast(self, src: Node, chain: Chain, r: int) -> None:
        for dst in sorted(src.peers):
            if self.severed(r, src.id, dst):
                continue
            due = r + self.latency.get(frozenset((src.id, dst)), 1)
            self.inbox[due].append((dst, chain))

    def inject(self, node_id: int, chain: Chain) -> None:
        """Have ``node_id`` push ``chain`` to its peers this round without adopting it (fault injection)."""
        self.broadcast(self.nodes[node_id], chain, self.round)

    def agreement(self) -> float:
        counts = Counter(n.chain.head.digest for n in self.nodes)
        return max(counts.values()) / len(self.nodes)


def step_round(net: NetworkTopology, miners: Iterable[int] | None = None) -> NetworkTopology:
    """Advance the simulation by one round (deliver, mine, push). Mutates and returns ``net``."""
    r = net.round
    if net.partitioned(r) != net.partitioned(r - 1):
        net.last_topology_change = r
    for dst, chain in net.inbox.pop(r, []):
        net.receive(net.nodes[dst], chain)

    if miners is None:
        miners = []
        m = net.mining
        if m.until is None or r < m.until:
            draws = net.rng("mining").random(len(net.nodes))
            miners = [i for i in range(len(net.nodes)) if draws[i] < m.probability]
    for i in miners:
        net.mine(net.nodes[i])
        net.last_mined = r

    for node in net.nodes:
        net.broadcast(node, node.chain, r)
    net.history.append((r, net.agreement()))
    net.round += 1
    return net


def run_rounds(net: NetworkTopology, rounds: int) -> NetworkTopology:
    for _ in range(rounds):
        step_round(net)
    return net


@dataclass(frozen=True)
class ConvergenceReport:
    heads: dict  # head digest (hex) -> node count
    agreement: float
    converged: bool
    rounds_to_consensus: int | None


def convergence_report(net: NetworkTopology) -> ConvergenceReport:
    """Head histogram, agreeing fraction, and rounds from the last disruption to full agreement.

    A disruption is a mined block or a change in the partition state. The count
    is measured at the end of each round.
    """
    heads = Counter(n.chain.head.digest.hex() for n in net.nodes)
    agreement = max(heads.values()) / len(net.nodes)
    disruption = max(net.last_mined, net.last_topology_change)
    rounds = None
    for r, a in net.history:
        if r >= disruption and a == 1.0:
            rounds = r - max(disruption, 0)
            break
    return ConvergenceReport(dict(heads), agreement, agreement == 1.0, rounds if agreement == 1.0 else None)


def partition_experiment(
    n: int = 50,
    p: float = 0.2,
    seed: int = 0,
    partition_rounds: int = 20,
    extra_rounds: int | None = None,
    mining_probability: float = 0.1,
    observer: Callable[[NetworkTopology], None] | None = None,
) -> tuple[NetworkTopology, PsiScore, int]:
    """Two-way split mining for ``partition_rounds`` rounds, then heal with mining stopped.

    Returns the network after healing, the offline Psi-maximum over all node
    chains at the moment mining stopped, and the graph diameter. ``observer``
    is called after every round.
    """
    if partition_rounds < 1:
        raise ValueError("partition_rounds must be >= 1")
    graph = make_graph("random", n, p, seed)
    mining = MiningPolicy(probability=mining_probability, until=partition_rounds)
    net = NetworkTopology.build(graph, seed=seed, mining=mining)
    net.partitions.append(Partition(0, partition_rounds, split_nodes(n, 2, seed)))
    d = net.diameter()
    for r in range(partition_rounds + ((d + 2) if extra_rounds is None else extra_rounds)):
        step_round(net)
        if r == partition_rounds - 1:
            target = max(psi(node.chain) for node in net.nodes)
        if observer is not None:
            observer(net)
    return net, target, d


def verify_all_valid(nodes: Sequence[Node]) -> bool:
    """Independent full replay of every node's chain."""
    for node in nodes:
        try:
            replay_chain(node.chain)
        except LedgerError:
            return False
    return True
