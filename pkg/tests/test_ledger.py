import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ledgerdyn import codec
from ledgerdyn.ledger import (
    Block,
    BrokenLink,
    Chain,
    IllegalMethod,
    InsufficientBalance,
    InvalidBlock,
    LedgerState,
    StateDelta,
    Transaction,
    TransactionBlock,
    UnknownAccount,
    apply_block,
    block_deltas,
    block_digest,
    build_block,
    reward_to,
    replay_chain,
    validate_transaction,
)
from ledgerdyn.library import fee_accumulator_contract, transfer_contract
from ledgerdyn.rewards import BITCOIN, DistributionVector, RewardEvent
from ledgerdyn.workload import WorkloadPolicy, draw_flows, ledger_block, substream

from oracles import bitcoin_cumulative, sequential_valid

T = Transaction.transfer


def state(**balances):
    return LedgerState.from_balances(balances)


# ------------------------------------------------------------ validate_transaction


def test_send_whole_balance_is_valid():
    validate_transaction(T("i", "j", 5), state(i=5, j=0))


def test_overspend_rejected():
    with pytest.raises(InsufficientBalance):
        validate_transaction(T("i", "j", 6), state(i=5, j=0))


def test_unknown_initiator():
    with pytest.raises(UnknownAccount):
        validate_transaction(T("ghost", "j", 0), state(j=1))


def test_forged_deltas_rejected():
    forged = Transaction("i", (StateDelta("i", -1), StateDelta("j", 5)), T("i", "j", 1).action_ref)
    with pytest.raises(IllegalMethod):
        validate_transaction(forged, state(i=5, j=0))


def test_spend_received_funds_in_same_block():
    s = state(i=5, j=0, m=0)
    out = apply_block(s, TransactionBlock(1, (T("i", "j", 5), T("j", "m", 3))))
    assert out.balances() == {"i": 0, "j": 2, "m": 3}
    assert sequential_valid([5, 0, 0], [(0, 1, 5), (1, 2, 3)])


def test_order_matters_within_block():
    s = state(i=5, j=0, m=0)
    with pytest.raises(InvalidBlock) as exc:
        apply_block(s, TransactionBlock(1, (T("j", "m", 3), T("i", "j", 5))))
    assert exc.value.tx_index == 0


def test_send_creates_account():
    out = apply_block(state(i=5), TransactionBlock(1, (T("i", "new", 2),)))
    assert out.balances() == {"i": 3, "new": 2}


def test_contract_call_transaction():
    fees = fee_accumulator_contract()
    contracts = {fees.id: fees}
    s = state(a=1, b=1)
    tx = Transaction.call("a", fees, "pay", (1, 1), s)
    out = apply_block(s, TransactionBlock(1, (tx,)), contracts=contracts)
    assert out.accounts["b"].contract_vars == {"fees": 1}
    assert out.to_state(contracts).var("fees") == (0, 1)
    with pytest.raises(InvalidBlock):
        apply_block(s, TransactionBlock(1, (tx,)))  # contract not registered


def test_guarded_transfer_contract_rejects_overdraft():
    tr = transfer_contract()
    s = state(a=1, b=0)
    with pytest.raises(IllegalMethod):
        Transaction.call("a", tr, "send", (0, 1, 2), s)


# ------------------------------------------------------------ apply_block


def test_empty_block_only_advances_height():
    s = state(a=3, b=4)
    out = apply_block(s, TransactionBlock(1))
    assert out.balances() == s.balances() and out.height == 1


def test_single_send_conserves():
    out = apply_block(state(i=5, j=1), TransactionBlock(1, (T("i", "j", 3),)))
    assert out.balances() == {"i": 2, "j": 4}
    assert out.total() == 6


def test_wrong_height_rejected():
    with pytest.raises(InvalidBlock):
        apply_block(state(a=1), TransactionBlock(2))


def test_reward_credit_and_schedule_enforcement():
    s = LedgerState.from_balances({})
    out = apply_block(s, TransactionBlock(1, (), reward_to("m", BITCOIN.mu(1))), schedule=BITCOIN)
    assert out.balances() == {"m": 5 * 10**9}
    with pytest.raises(InvalidBlock):
        apply_block(s, TransactionBlock(1, (), reward_to("m", 1)), schedule=BITCOIN)


def test_reward_split():
    out = apply_block(state(a=0), TransactionBlock(1, (), RewardEvent(10, DistributionVector.uniform(["a", "b", "c"]))))
    assert out.balances() == {"a": 4, "b": 3, "c": 3}


def test_four_txs_decompose():
    s = state(a=10, b=10, c=10)
    txs = (T("a", "b", 3), T("b", "a", 7), T("a", "c", 1), T("c", "a", 2))
    block = TransactionBlock(1, txs)
    assert len(block.for_account("a")) == 4
    per_tx = sum(d.delta for tx in block.for_account("a") for d in tx.deltas if d.account == "a")
    out = apply_block(s, block)
    assert per_tx == out.balance("a") - s.balance("a") == 5
    assert block_deltas(block) == {a: out.balance(a) - s.balance(a) for a in "abc"}


@st.composite
def workloads(draw):
    n = draw(st.integers(2, 8))
    seed = draw(st.integers(0, 2**32 - 1))
    balances = draw(st.lists(st.integers(0, 1000), min_size=n, max_size=n))
    return balances, seed


@given(workloads(), st.integers(0, 20), st.floats(0, 0.5))
def test_random_valid_blocks_decompose_and_stay_nonnegative(wl, sends, fresh):
    balances, seed = wl
    rng = np.random.default_rng(seed)
    s = LedgerState.from_balances({f"a{i}": b for i, b in enumerate(balances)})
    u = draw_flows(rng, s.balance_vector(), WorkloadPolicy(sends_per_block=sends, new_account_rate=fresh))
    block = ledger_block(s, u, RewardEvent(7, DistributionVector.sole(0)))
    out = apply_block(s, block)
    assert min(out.balances().values()) >= 0
    deltas = block_deltas(block)
    for a in set(out.ids):
        assert deltas.get(a, 0) == out.balance(a) - s.balance(a)
    assert out.total() == s.total() + 7


# ------------------------------------------------------------ chains, digests, replay


def _chain(blocks=5, seed=0):
    rng = substream(seed, "test")
    chain = Chain.from_genesis({"a": 100, "b": 0, "c": 0})
    for _ in range(blocks):
        s = chain.head.state
        u = draw_flows(rng, s.balance_vector(), WorkloadPolicy(sends_per_block=4))
        chain = chain.mine(ledger_block(s, u).txs, work=1.0)
    return chain


def test_genesis_only_replay():
    chain = Chain.from_genesis({"a": 3})
    assert replay_chain(chain) == chain.genesis.state


def test_reward_only_chain_supply():
    K = 50
    chain = Chain.from_genesis(schedule=BITCOIN)
    for k in range(K):
        chain = chain.mine_to(f"m{k % 3}")
    out = replay_chain(chain)
    assert out.total() == bitcoin_cumulative(K) == K * 5 * 10**9


def test_replay_matches_head_and_is_deterministic():
    chain = _chain(10)
    assert replay_chain(chain) == chain.head.state
    assert codec.encode_chain(chain) == codec.encode_chain(_chain(10))


def test_digest_deterministic_and_sensitive():
    chain = _chain(3)
    b = chain.blocks[2]
    assert block_digest(b) == codec.block_digest(dataclasses.replace(b))
    for change in (
        dict(work=b.work + 1),
        dict(parent_link=bytes(32)),
        dict(txs=dataclasses.replace(b.txs, reward=reward_to("a", 1))),
        dict(txs=dataclasses.replace(b.txs, txs=b.txs.txs[:-1])),
    ):
        assert dataclasses.replace(b, **change).digest != b.digest


def test_single_delta_changes_digest():
    s = state(a=5, b=0)
    b1 = build_block(Block(s, TransactionBlock(0)), [T("a", "b", 1)])
    b2 = build_block(Block(s, TransactionBlock(0)), [T("a", "b", 2)])
    assert b1.digest != b2.digest


def test_tampered_history_detected():
    chain = _chain(6)
    target = chain.blocks[3]
    tx = target.txs.txs[0]
    ref = tx.action_ref
    forged_tx = Transaction.transfer(ref.sender, ref.receiver, ref.amount + 1)
    forged_block = dataclasses.replace(target, txs=dataclasses.replace(target.txs, txs=(forged_tx,) + target.txs.txs[1:]))
    tampered = Chain(chain.blocks[:3] + (forged_block,) + chain.blocks[4:])
    with pytest.raises((InvalidBlock, BrokenLink)) as exc:
        replay_chain(tampered)
    assert exc.value.height in (3, 4)


def test_tampered_state_detected_at_tamper_point():
    chain = _chain(6)
    target = chain.blocks[2]
    bad_state = LedgerState.from_balances({**target.state.balances(), "a": target.state.balance("a") + 1}, 2)
    tampered = Chain(chain.blocks[:2] + (dataclasses.replace(target, state=bad_state),) + chain.blocks[3:])
    with pytest.raises(InvalidBlock) as exc:
        replay_chain(tampered)
    assert exc.value.height == 2


@given(st.permutations(range(1, 6)))
def test_permuted_blocks_fail(order):
    chain = _chain(5)
    if list(order) == sorted(order):
        return
    permuted = Chain((chain.genesis,) + tuple(chain.blocks[i] for i in order))
    with pytest.raises((InvalidBlock, BrokenLink)):
        replay_chain(permuted)


def test_forged_genesis_rejected():
    chain = _chain(2)
    forged = dataclasses.replace(chain.genesis, txs=TransactionBlock(0, (), reward_to("a", 1)))
    with pytest.raises(InvalidBlock):
        replay_chain(Chain((forged,) + chain.blocks[1:]))


def test_negative_work_rejected():
    chain = _chain(2)
    bad = dataclasses.replace(chain.blocks[2], work=-1.0)
    with pytest.raises(InvalidBlock):
        replay_chain(Chain(chain.blocks[:2] + (bad,)))
