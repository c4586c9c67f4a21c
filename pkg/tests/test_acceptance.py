"""Headline acceptance criteria, each at its stated scale and tolerance.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""
import itertools
import os
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from ledgerdyn import library
from ledgerdyn.consensus import convergence_report, partition_experiment, psi, resolve
from ledgerdyn.ledger import Chain, InvalidBlock, LedgerState, Transaction, TransactionBlock, apply_block, replay_chain
from ledgerdyn.lte import (
    ExpansionStep,
    InputVector,
    apply_A,
    apply_B,
    is_strictly_valid,
    materialize_dense,
    output_y,
    satisfies_net_flow,
    step,
)
from ledgerdyn.rewards import BITCOIN, COIN, DistributionVector, RewardEvent, total_supply_limit
from ledgerdyn.valueprops import State, check_invariant, check_trajectories, replay_witness, run_controller
from ledgerdyn.workload import WorkloadPolicy, draw_flows, ledger_block, substream

from oracles import bitcoin_cumulative, bitcoin_supply

pytestmark = pytest.mark.acceptance

ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def criterion(record_property):
    def note(name, detail=None):
        record_property("criterion" if detail is None else "detail", name if detail is None else detail)
    return note


def test_supply_limit(criterion):
    criterion("Supply limit")
    timings = []
    for _ in range(21):
        t0 = time.perf_counter()
        value = total_supply_limit()
        timings.append(time.perf_counter() - t0)
    median = sorted(timings)[len(timings) // 2]
    criterion("detail", f"{value} base units, median {median * 1e6:.1f} us")
    assert value == 2_099_999_997_690_000 == bitcoin_supply()
    assert Fraction(value, COIN) == Fraction("20999999.9769")
    assert median < 1e-3


def test_conservation(criterion):
    criterion("Conservation")
    rng = substream(2024, "acceptance/conservation")
    blocks = 0
    t0 = time.perf_counter()
    while blocks < 10_000:
        n = int(rng.integers(2, 201))
        x = rng.integers(0, 10**12, size=n).astype(np.int64)
        policy = WorkloadPolicy(kind=["uniform", "hub", "dormant"][blocks % 3], dormant_fraction=0.5,
                                hub=int(rng.integers(n)))
        y0 = output_y(x)
        for _ in range(100):
            u = draw_flows(rng, x, policy, n_sends=int(rng.integers(0, 501)))
            assert int(apply_B(ExpansionStep(n, n), u).sum()) == 0
            x = step(x, u)  # strict validation inside
            assert output_y(x) == y0
            blocks += 1
    elapsed = time.perf_counter() - t0
    criterion("detail", f"{blocks} blocks in {elapsed:.1f} s")
    assert elapsed < 30


@pytest.mark.parametrize("policy", [
    WorkloadPolicy("uniform", sends_per_block=20, new_account_rate=0.02),
    WorkloadPolicy("hub", sends_per_block=20, hub=1),
    WorkloadPolicy("dormant", sends_per_block=20, dormant_fraction=0.7, new_account_rate=0.01),
], ids=["uniform", "hub", "dormant"])
def test_supply_tracking(criterion, policy):
    criterion("Supply tracking")
    K = 2000
    rng = substream(7, f"acceptance/supply/{policy.kind}")
    t0 = time.perf_counter()
    chain = Chain.from_genesis({f"a{i}": 0 for i in range(10)}, schedule=BITCOIN)
    for k in range(1, K + 1):
        s = chain.head.state
        u = draw_flows(rng, s.balance_vector(), policy)
        miner = DistributionVector.sole(int(rng.integers(s.n_accounts)))
        block = ledger_block(s, u, RewardEvent(BITCOIN.mu(k), miner))
        chain = chain.mine(block.txs, block.reward)
    final = replay_chain(chain)
    elapsed = time.perf_counter() - t0
    criterion("detail", f"y(2000) = {final.total()} in {elapsed:.1f} s per workload")
    assert final.total() == bitcoin_cumulative(K) == sum(BITCOIN.mu(k) for k in range(1, K + 1))
    assert elapsed < 10


def test_dense_sparse_oracle(criterion):
    criterion("Dense/sparse oracle")
    rng = substream(5, "acceptance/dense")
    pairs = 0
    for n_k1 in range(0, 21):
        for n_k in range(0, n_k1 + 1):
            st_ = ExpansionStep(n_k, n_k1)
            ops = materialize_dense(st_)
            for _ in range(100):
                x = rng.integers(0, 10**15, size=n_k)
                assert np.array_equal(apply_A(st_, x), ops.A @ x)
                m = int(rng.integers(0, 40)) if ops.edges else 0
                if m:
                    idx = rng.integers(0, len(ops.edges), size=m)
                    src = np.array([ops.edges[i][0] for i in idx])
                    dst = np.array([ops.edges[i][1] for i in idx])
                    u = InputVector(src, dst, rng.integers(0, 10**12, size=m))
                else:
                    u = InputVector()
                assert np.array_equal(apply_B(st_, u), ops.B @ ops.input_vector(u))
            pairs += 1
    criterion("detail", f"{pairs} (n_k, n_k1) pairs x 100 inputs")


def test_validity_hierarchy(criterion):
    criterion("Validity hierarchy")
    rng = substream(11, "acceptance/hierarchy")
    corpus = 0
    while corpus < 1000:
        n = int(rng.integers(2, 30))
        x = rng.integers(0, 1000, size=n)
        u = draw_flows(rng, x, WorkloadPolicy(sends_per_block=int(rng.integers(1, 50)), new_account_rate=0.1))
        assert is_strictly_valid(x, u)
        assert satisfies_net_flow(x, u)
        corpus += 1
    # b spends 5 it only receives later in the block
    x = [0, 5]
    u = InputVector.from_actions([(0, 1, 3), (1, 0, 5)])
    relaxed, strict = satisfies_net_flow(x, u), is_strictly_valid(x, u)
    ledger = LedgerState.from_balances({"a": 0, "b": 5})
    block = TransactionBlock(1, (Transaction.transfer("a", "b", 3), Transaction.transfer("b", "a", 5)))
    with pytest.raises(InvalidBlock):
        apply_block(ledger, block)
    criterion("detail", f"{corpus} strict blocks all net-flow valid; spend-before-receipt relaxed={relaxed} strict={strict}")
    assert relaxed and not strict


def test_consensus_convergence(criterion):
    criterion("Consensus convergence")
    t0 = time.perf_counter()
    verified: set[bytes] = set()
    worst = []

    def all_valid(net):
        for node in net.nodes:
            head = node.chain.head.digest
            if head not in verified:
                replay_chain(node.chain)  # raises on an invalid chain
                verified.add(head)

    for seed in range(20):
        net, target, d = partition_experiment(n=50, p=0.2, seed=seed, partition_rounds=20, observer=all_valid)
        rep = convergence_report(net)
        assert rep.agreement == 1.0, f"seed {seed}"
        assert psi(net.nodes[0].chain) == target, f"seed {seed}"
        assert rep.rounds_to_consensus is not None and rep.rounds_to_consensus <= d, f"seed {seed}"
        worst.append((rep.rounds_to_consensus, d))
    elapsed = time.perf_counter() - t0
    criterion("detail", f"20 seeds, rounds/diameter {worst}, {elapsed:.1f} s")
    assert elapsed < 60


def test_psi_strict_order(criterion):
    criterion("Psi strict order")
    rng = substream(3, "acceptance/psi")
    works = [0.5, 1.0, 1.5]
    genesis = Chain.from_genesis()
    pool = [genesis]
    engineered = []
    while len(pool) < 400:
        base = pool[int(rng.integers(len(pool)))]
        w = works[int(rng.integers(3))]
        a = base.mine_to(f"m{int(rng.integers(1000))}", work=w)
        b = base.mine_to(f"q{int(rng.integers(1000))}", work=w)  # same parent, same work, different miner
        pool += [a, b]
        engineered.append((a, b))
    pairs = [(pool[int(i)], pool[int(j)]) for i, j in rng.integers(len(pool), size=(10_000 - len(engineered), 2))]
    pairs += engineered
    equal_work = 0
    for a, b in pairs:
        pa, pb = psi(a), psi(b)
        distinct = a.head.digest != b.head.digest
        if distinct:
            assert pa != pb
            equal_work += pa.total_work == pb.total_work
        r = resolve(a, b)
        assert r is resolve(b, a) or not distinct
        assert resolve(r, r) is r and resolve(a, a) is a
        assert psi(r) == max(pa, pb)
    criterion("detail", f"{len(pairs)} pairs, {equal_work} distinct equal-work pairs")
    assert len(pairs) == 10_000 and equal_work >= len(engineered)


def test_positivity_invariant(criterion):
    criterion("Positivity invariant")
    V = library.positivity_value()
    grid = library.balance_grid(3, 4, depth=2)
    good = check_invariant(V, library.transfer_contract(), grid)
    sabotage = library.transfer_contract(guarded=False)
    bad = check_invariant(V, sabotage, grid)
    w = bad.witness
    replay = replay_witness(V, sabotage, w) if w else None
    criterion("detail", f"guarded: {good.verdict} over {good.trials} {good.coverage} transitions; "
                        f"unguarded: {bad.verdict}, witness {w.to_dict() if w else None}")
    assert good.passed and good.coverage == "exhaustive"
    assert bad.verdict == "counterexample"
    assert replay == (w.v_before, w.v_after) and w.v_after > 0


def test_lyapunov_contraction(criterion):
    criterion("Lyapunov contraction")
    V = library.deviation_value(lambda k: 42.0, 0.5)
    contract = library.deviation_halving_contract(lambda k: 42.0)
    traj = check_trajectories(V, contract, library.deviation_states(4, spread=1e6), count=1000, length=30, seed=2024)
    # Bitcoin: supply tracked against the schedule, including a halving boundary
    supply_V = library.supply_tracking_value(BITCOIN)
    start = 209_500
    n = 4
    initial = State((BITCOIN.cumulative(start), 0, 0, 0), height=start)

    def mint(s):
        k = s.height + 1
        b = list(s.balances)
        b[k % n] += BITCOIN.mu(k)
        return State(tuple(b), s.vars, k)

    trace = run_controller(supply_V, library.transfer_contract(), None, 1000, initial, drive=mint, seed=1)
    zero = all(v == 0 for v in trace.values)
    criterion("detail", f"{traj.trials} contraction steps {traj.verdict}; supply controller V==0 over "
                        f"{len(trace.values)} states: {zero}")
    assert traj.passed and traj.trials == 30_000
    assert zero and trace.tracking_ok
    assert trace.steps[-1].output == bitcoin_cumulative(start + 1000)


def _cli(args, env=None):
    return subprocess.run([sys.executable, "-m", "ledgerdyn", *args, "--quiet"], capture_output=True,
                          env=env, check=False)


def test_reproducibility(criterion, tmp_path):
    criterion("Reproducibility")
    checked = []
    for path in sorted((ROOT / "scenarios").glob("*.toml")):
        outs = [_cli(["--scenario", str(path)]) for _ in range(2)]
        assert outs[0].stdout == outs[1].stdout and outs[0].returncode == outs[1].returncode
        assert outs[0].stdout
        checked.append(path.name)
    env = {**os.environ, "LEDGERDYN_DISABLE_NUMBA": "1"}
    for name in checked:
        a = _cli(["--scenario", str(ROOT / "scenarios" / name)])
        b = _cli(["--scenario", str(ROOT / "scenarios" / name)], env=env)
        assert a.stdout == b.stdout, f"{name}: numba and numpy backends disagree"
    criterion("detail", f"{', '.join(checked)} byte-identical across runs and backends")
