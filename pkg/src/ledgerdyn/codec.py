"""Canonical byte serialization of blocks and chains, and block digests.

Every field is written as a 4-byte big-endian length followed by its payload.
Integers are minimal-length big-endian two's complement, floats are IEEE-754
big-endian doubles, strings are UTF-8, sequences are a count followed by their
items. Fields appear in declaration order.
"""
from __future__ import annotations

import hashlib
import json
import struct
from fractions import Fraction
from typing import Any

DIGEST_SIZE = 32
NULL_DIGEST = bytes(DIGEST_SIZE)


class Encoder:
    def __init__(self):
        self._parts: list[bytes] = []

    def _field(self, tag: bytes, payload: bytes):
        self._parts.append(tag + struct.pack(">I", len(payload)) + payload)
        return self

    def int(self, n: int):
        n = int(n)
        length = max(1, (n + (n < 0)).bit_length() // 8 + 1)
        return self._field(b"i", n.to_bytes(length, "big", signed=True))

    def float(self, x: float):
        return self._field(b"f", struct.pack(">d", float(x)))

    def str(self, s: str):
        return self._field(b"s", s.encode("utf-8"))

    def bytes(self, b: bytes):
        return self._field(b"b", bytes(b))

    def fraction(self, q: Fraction):
        q = Fraction(q)
        return self.int(q.numerator).int(q.denominator)

    def opaque(self, value: Any):
        # contract variables are opaque to the ledger; canonical JSON keeps them deterministic
        return self._field(b"j", json.dumps(value, sort_keys=True, separators=(",", ":")).encode())

    def count(self, n: int):
        return self._field(b"n", struct.pack(">Q", n))

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


def _encode_action(enc: Encoder, action) -> None:
    from .ledger import MethodCall, Transfer

    if isinstance(action, Transfer):
        enc.str("transfer").str(action.sender).str(action.receiver).int(action.amount)
    elif isinstance(action, MethodCall):
        enc.str("call").str(action.contract).str(action.method).opaque(action.action)
    else:
        raise TypeError(f"cannot serialize action {action!r}")


def encode_transaction(enc: Encoder, tx) -> None:
    enc.str(tx.initiator).count(len(tx.deltas))
    for d in tx.deltas:
        enc.str(d.account).int(d.delta)
        var_deltas = d.var_deltas or {}
        enc.count(len(var_deltas))
        for cid in sorted(var_deltas):
            enc.str(cid).opaque(var_deltas[cid])
    _encode_action(enc, tx.action_ref)


def encode_reward(enc: Encoder, reward) -> None:
    enc.int(reward.mu).count(len(reward.distribution.weights))
    for account, w in reward.distribution.weights.items():
        enc.str(account).fraction(w)


def encode_state(enc: Encoder, state) -> None:
    enc.int(state.height).count(len(state.accounts))
    for account, acct in state.accounts.items():
        enc.str(account).int(acct.balance).count(len(acct.contract_vars))
        for cid in sorted(acct.contract_vars):
            enc.str(cid).opaque(acct.contract_vars[cid])


def encode_block(block) -> bytes:
    """Canonical bytes of a block: height, parent link, work, transactions, reward, state."""
    enc = Encoder()
    enc.int(block.txs.height).bytes(block.parent_link).float(block.work)
    enc.count(len(block.txs.txs))
    for tx in block.txs.txs:
        encode_transaction(enc, tx)
    encode_reward(enc, block.txs.reward)
    encode_state(enc, block.state)
    return enc.getvalue()


def block_digest(block) -> bytes:
    return hashlib.sha256(encode_block(block)).digest()


def encode_chain(chain) -> bytes:
    enc = Encoder().count(len(chain.blocks))
    return enc.getvalue() + b"".join(encode_block(b) for b in chain.blocks)
