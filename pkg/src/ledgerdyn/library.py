"""Built-in contracts, value functions and domains, selectable by name."""
from __future__ import annotations

import itertools
from typing import Callable

from .rewards import RewardSchedule
from .valueprops import (
    ContractSpec,
    Contractive,
    Invariant,
    MethodSpec,
    Monotone,
    Sampler,
    State,
    ValueFunctionSpec,
)

# ---------------------------------------------------------------- value functions


def supply_value(kind=None) -> ValueFunctionSpec:
    """V(x) = sum of balances (the supply output y)."""
    return ValueFunctionSpec("supply", lambda s: sum(s.balances), kind or Invariant(), exact=True)


def positivity_value() -> ValueFunctionSpec:
    """V(x) = -sum(min(0, x_i)); zero iff no balance is negative."""
    return ValueFunctionSpec("positivity", lambda s: -sum(min(0, b) for b in s.balances), Invariant(0), exact=True)


def supply_tracking_value(schedule: RewardSchedule, base: int = 0, gamma: float = 0.5) -> ValueFunctionSpec:
    """|sum(x) - (base + sum(mu_1..mu_k))|: the realized supply against its scheduled target."""
    return ValueFunctionSpec.controller(
        "supply-invariant",
        output=lambda s: sum(s.balances),
        target=lambda k: base + schedule.cumulative(k),
        gamma=gamma,
        exact=True,
    )


def deviation_value(target: Callable[[int], float], gamma: float = 0.5, contract_id: str = "deviation",
                    neighborhood: float = 0.0) -> ValueFunctionSpec:
    """|g(x) - y*(k)| where g sums the contract's per-account variable."""
    return ValueFunctionSpec.controller(
        "deviation",
        output=lambda s: sum(s.var(contract_id)),
        target=target,
        gamma=gamma,
        neighborhood=neighborhood,
    )


# ---------------------------------------------------------------- contracts


FULL_AMOUNT_RANGE = 64


def _amounts(limit: int) -> list[int]:
    """Every amount up to a small limit; above it a doubling ladder plus the limit itself."""
    if limit <= FULL_AMOUNT_RANGE:
        return list(range(limit + 1))
    ladder = [0]
    a = 1
    while a < limit:
        ladder.append(a)
        a *= 2
    ladder.append(limit)
    return ladder


def _send_actions(max_amount: Callable[[State, int], int]):
    def actions(state: State):
        n = state.n
        for i in range(n):
            for j in range(n):
                if i != j:
                    for amount in _amounts(max_amount(state, i)):
                        yield (i, j, amount)
    return actions


def _send(action, state: State) -> State:
    i, j, amount = action
    b = list(state.balances)
    b[i] -= amount
    b[j] += amount
    return state.with_balances(b)


def transfer_contract(guarded: bool = True, cap: int = 4) -> ContractSpec:
    """Plain sends between existing accounts.

    With ``guarded`` the action space is ``0 <= amount <= x_i``; without it any
    amount up to ``cap`` is admitted, which lets balances go negative. Every
    admitted amount is legal, but enumeration lists all of them only up to
    ``FULL_AMOUNT_RANGE`` and a doubling ladder beyond, so large balances stay tractable.
    """
    if guarded:
        bound = lambda s, i: max(0, s.balances[i])  # noqa: E731
        admits = lambda s, a: a[0] != a[1] and 0 <= a[2] <= s.balances[a[0]]  # noqa: E731
    else:
        bound = lambda s, i: cap  # noqa: E731
        admits = lambda s, a: a[0] != a[1] and 0 <= a[2] <= cap  # noqa: E731
    name = "transfer" if guarded else "transfer-unguarded"
    return ContractSpec(name, (MethodSpec("send", _send_actions(bound), _send, admits),))


def identity_contract() -> ContractSpec:
    return ContractSpec("identity", (MethodSpec("noop", lambda s: [None], lambda a, s: s),))


def fee_accumulator_contract(fee: int = 1, contract_id: str = "fees") -> ContractSpec:
    """Every method adds a non-negative fee to a per-account sink variable."""

    def pay(action, state):
        i, amount = action
        z = list(state.var(contract_id))
        z[i] += amount
        return state.with_var(contract_id, z)

    def pay_actions(state):
        return [(i, a) for i in range(state.n) for a in range(fee + 1)]

    def touch(action, state):
        return state

    return ContractSpec(
        contract_id,
        (MethodSpec("pay", pay_actions, pay), MethodSpec("touch", lambda s: range(s.n), touch)),
        var_init=lambda i: 0,
    )


def fees_value(contract_id: str = "fees", epsilon: float = 0.0) -> ValueFunctionSpec:
    return ValueFunctionSpec("fees", lambda s: sum(s.var(contract_id)), Monotone(epsilon), exact=True)


def deviation_halving_contract(
    target: Callable[[int], float],
    contract_id: str = "deviation",
    factor: float = 0.5,
    sabotage: bool = False,
) -> ContractSpec:
    """Each account may call ``rebalance``, moving g(x) = sum(z) a ``factor`` of the way to the target.

    With ``sabotage`` an extra ``overshoot`` method pushes g away from the target.
    """

    def g(state):
        return sum(state.var(contract_id))

    def rebalance(i, state):
        z = list(state.var(contract_id))
        z[i] += (1 - factor) * (target(state.height) - g(state))
        return state.with_var(contract_id, z)

    def overshoot(i, state):
        z = list(state.var(contract_id))
        z[i] -= 0.5 * (target(state.height) - g(state))
        return state.with_var(contract_id, z)

    accounts = lambda s: range(s.n)  # noqa: E731
    methods = [MethodSpec("rebalance", accounts, rebalance)]
    if sabotage:
        methods.append(MethodSpec("overshoot", accounts, overshoot))
    return ContractSpec(contract_id, tuple(methods), var_init=lambda i: 0.0)


# ---------------------------------------------------------------- domains


def balance_grid(n_accounts: int, max_balance: int, depth: int = 1, seed: int = 0) -> Sampler:
    """All balance vectors in {0..max_balance}^n, explored ``depth`` transitions deep."""

    def states():
        for b in itertools.product(range(max_balance + 1), repeat=n_accounts):
            yield State(b)

    def shrink(state):
        for i, b in enumerate(state.balances):
            if b > 0:
                smaller = list(state.balances)
                smaller[i] = b - 1
                yield state.with_balances(smaller)

    return Sampler(states=states, depth=depth, seed=seed, shrink=shrink)


def random_balances(n_accounts: int, max_balance: int, depth: int = 1, seed: int = 0) -> Sampler:
    def draw(rng):
        return State(tuple(int(v) for v in rng.integers(0, max_balance + 1, size=n_accounts)))

    grid = balance_grid(n_accounts, max_balance, depth, seed)
    return Sampler(draw=draw, depth=depth, seed=seed, shrink=grid.shrink)


def deviation_states(n_accounts: int, spread: float = 100.0, contract_id: str = "deviation",
                     depth: int = 1, seed: int = 0) -> Sampler:
    """Random real-valued contributed variables in [-spread, spread]."""

    def draw(rng):
        z = rng.uniform(-spread, spread, size=n_accounts)
        return State((0,) * n_accounts, {contract_id: tuple(float(v) for v in z)})

    return Sampler(draw=draw, depth=depth, seed=seed)


# ---------------------------------------------------------------- registries

CONTRACTS = {
    "transfer": lambda **kw: transfer_contract(True, **kw),
    "transfer-unguarded": lambda **kw: transfer_contract(False, **kw),
    "identity": lambda **kw: identity_contract(),
    "fee-accumulator": lambda **kw: fee_accumulator_contract(**kw),
    "deviation-halving": lambda target=0.0, **kw: deviation_halving_contract(lambda k: target, **kw),
    "deviation-sabotaged": lambda target=0.0, **kw: deviation_halving_contract(lambda k: target, sabotage=True, **kw),
}

VALUE_FUNCTIONS = ("supply", "supply-invariant", "positivity", "fees", "deviation")


def make_value(name: str, *, schedule: RewardSchedule | None = None, base_supply: int = 0, **params) -> ValueFunctionSpec:
    """Resolve a value function by name; raises KeyError for unknown names."""
    if name == "supply":
        eps = params.get("epsilon")
        return supply_value(Monotone(eps) if eps is not None else Invariant())
    if name == "supply-invariant":
        if schedule is None:
            raise ValueError("supply-invariant needs a reward schedule")
        return supply_tracking_value(schedule, base_supply, params.get("gamma", 0.5))
    if name == "positivity":
        return positivity_value()
    if name == "fees":
        return fees_value(epsilon=params.get("epsilon", 0.0))
    if name == "deviation":
        target = params.get("target", 0.0)
        gamma = params.get("gamma", 0.5)
        V = deviation_value(lambda k: target, gamma, neighborhood=params.get("neighborhood", 0.0))
        return V.with_kind(Contractive(gamma)) if params.get("contractive_only") else V
    raise KeyError(name)
