"""Run a parsed scenario: build the workload, step the ledger or network, evaluate checks."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from . import library
from .consensus import (
    MiningPolicy,
    NetworkTopology,
    Partition,
    make_graph,
    split_nodes,
    step_round,
    verify_all_valid,
)
from .ledger import Chain, LedgerError, build_block
from .rewards import DistributionVector, RewardEvent
from .scenario import CheckConfig, Scenario
from .trace import TraceRecord
from .valueprops import CheckReport, Invariant, Monotone, State, ValueFunctionSpec, check, check_trace
from .workload import WorkloadPolicy, draw_flows, ledger_block, substream

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    records: list[TraceRecord]
    reports: list[CheckReport] = field(default_factory=list)
    violation: str | None = None
    check_names: tuple[str, ...] = ()

    @property
    def exit_status(self) -> int:
        if self.violation is not None or any(not r.passed for r in self.reports):
            return 1
        return 0

    def report_dict(self) -> dict:
        return {
            "exit_status": self.exit_status,
            "violation": self.violation,
            "checks": [r.to_dict() for r in self.reports],
        }


def _value_for(cfg: CheckConfig, scenario: Scenario, *, trace: bool) -> ValueFunctionSpec:
    params = dict(cfg.params)
    kind = params.pop("kind", None)
    V = library.make_value(cfg.name, schedule=scenario.schedule, **params)
    if cfg.name == "supply":
        # sends conserve supply; along a rewarded trajectory it only grows
        default = "monotone" if trace else "invariant"
        V = V.with_kind(Monotone(params.get("epsilon", 0.0)) if (kind or default) == "monotone" else Invariant())
    elif kind == "monotone":
        V = V.with_kind(Monotone(params.get("epsilon", 0.0)))
    elif kind == "invariant":
        V = V.with_kind(Invariant())
    return V


def _contract_report(cfg: CheckConfig, scenario: Scenario) -> CheckReport:
    kw = {}
    if cfg.name == "deviation" or (cfg.contract or "").startswith("deviation"):
        kw["target"] = cfg.params.get("target", 0.0)
    contract = library.CONTRACTS[cfg.contract](**kw)
    V = _value_for(cfg, scenario, trace=False)
    seed = int(substream(scenario.seed, f"checks/{cfg.label}").integers(2**31))
    if cfg.name == "deviation":
        sampler = library.deviation_states(cfg.accounts, float(cfg.max_balance or 100), depth=cfg.depth, seed=seed)
    elif cfg.domain == "exhaustive":
        sampler = library.balance_grid(cfg.accounts, cfg.max_balance, cfg.depth, seed)
    else:
        sampler = library.random_balances(cfg.accounts, cfg.max_balance, cfg.depth, seed)
    return check(V, contract, sampler, cfg.budget)


def _relabel(report: CheckReport, label: str) -> CheckReport:
    return replace(report, name=label)


def _record(k: int, chain: Chain, values: dict, agreement=None) -> TraceRecord:
    head = chain.head
    return TraceRecord(k, head.state.total(), head.state.n_accounts, len(head.txs.txs), values, agreement)


def _run_ledger(scenario: Scenario, trace_checks, result: RunResult, states: list[State]):
    rng_w = substream(scenario.seed, "workload")
    rng_m = substream(scenario.seed, "mining")
    agents = [f"a{i}" for i in range(scenario.agents)]
    chain = Chain.from_genesis({a: 0 for a in agents}, schedule=scenario.schedule)
    states.append(chain.head.state.to_state())
    for k in range(1, scenario.horizon + 1):
        state = chain.head.state
        u = draw_flows(rng_w, state.balance_vector(), scenario.policy)
        miner = int(rng_m.integers(len(agents)))
        reward = RewardEvent(scenario.schedule.mu(k), DistributionVector.sole(miner))
        tblock = ledger_block(state, u, reward)
        try:
            block = build_block(chain.head, tblock.txs, tblock.reward, work=1.0, schedule=scenario.schedule)
        except LedgerError as exc:
            result.violation = f"step {k}: {exc}"
            return
        chain = chain.extend(block)
        view = block.state.to_state()
        states.append(view)
        result.records.append(_record(k, chain, {c.label: V(view) for c, V in trace_checks}))


def _build_network(scenario: Scenario) -> NetworkTopology:
    topo = scenario.topology
    graph = make_graph(topo.kind, topo.nodes, topo.p, scenario.seed)
    m = scenario.mining
    mining = MiningPolicy(m.probability, m.work_min, m.work_max, m.until,
                          WorkloadPolicy(scenario.policy.kind, scenario.policy.sends_per_block,
                                         0.0, scenario.policy.dormant_fraction, scenario.policy.hub))
    net = NetworkTopology.build(graph, schedule=scenario.schedule, seed=scenario.seed, latency=topo.latency,
                                mining=mining, finality_depth=topo.finality_depth)
    for i, (start, end, parts) in enumerate(topo.partitions):
        net.partitions.append(Partition(start, end, split_nodes(topo.nodes, parts, scenario.seed + i)))
    return net


def _run_network(scenario: Scenario, trace_checks, result: RunResult, states: list[State]):
    net = _build_network(scenario)
    states.append(net.best_chain().head.state.to_state())
    for k in range(1, scenario.horizon + 1):
        try:
            step_round(net)
        except LedgerError as exc:
            result.violation = f"round {k}: {exc}"
            return
        best = net.best_chain()
        view = best.head.state.to_state()
        states.append(view)
        result.records.append(_record(k, best, {c.label: V(view) for c, V in trace_checks}, net.agreement()))
    if not verify_all_valid(net.nodes):
        result.violation = "a node holds a chain that does not replay"


def run(scenario: Scenario) -> RunResult:
    """Execute the horizon; one trace record per block (ledger) or round (network)."""
    # every check contributes a V column; only contract-free checks are judged on the trajectory
    trace_checks = [(c, _value_for(c, scenario, trace=c.contract is None)) for c in scenario.checks]
    result = RunResult([], check_names=tuple(c.label for c in scenario.checks))
    states: list[State] = []
    if scenario.mode == "ledger":
        _run_ledger(scenario, trace_checks, result, states)
    else:
        _run_network(scenario, trace_checks, result, states)
    for cfg in scenario.checks:
        if cfg.contract is None:
            V = next(V for c, V in trace_checks if c.label == cfg.label)
            result.reports.append(_relabel(check_trace(V, states), cfg.label))
        else:
            result.reports.append(_relabel(_contract_report(cfg, scenario), cfg.label))
    for r in result.reports:
        log.info("check %s: %s (%s, %d trials)", r.name, r.verdict, r.coverage, r.trials)
    return result
