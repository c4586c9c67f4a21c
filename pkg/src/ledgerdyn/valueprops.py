"""Contracts, value functions and checkers for global properties of local rules.

A contract contributes one variable per account and a set of methods; each
method has a legal action space and a transition. A value function maps a
state to a non-negative scalar and declares which property its contract is
supposed to guarantee:

* ``Invariant``   every legal transition leaves V unchanged,
* ``Monotone``    V(after) >= (1 + epsilon) * V(before),
* ``Contractive`` V(after) <= gamma * V(before) with gamma in [0, 1),
* ``Controller``  contractive tracking of a time-varying target output.

Checkers enumerate the (state, method, action) space when it is small enough
and fall back to seeded random walks otherwise. A sampled pass is evidence,
not proof; reports say which regime ran.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np


class ValuePropsError(Exception):
    pass


class KindMismatch(ValuePropsError, TypeError):
    pass


class NotInvariantKind(KindMismatch):
    pass


class NotMonotoneKind(KindMismatch):
    pass


class NotContractiveKind(KindMismatch):
    pass


class UncontractiveContract(ValuePropsError):
    def __init__(self, report: "CheckReport"):
        super().__init__(f"contract fails the contraction precondition: {report.witness}")
        self.report = report


class SandboxViolation(ValuePropsError):
    """A method wrote state it does not own (another contract's variables, or the height)."""


class IllegalAction(ValuePropsError):
    """The action is outside the method's legal action space at this state."""


@dataclass(frozen=True)
class State:
    """Global state seen by contracts: balances by account index plus contributed variables."""

    balances: tuple = ()
    vars: Mapping[str, tuple] = field(default_factory=dict)
    height: int = 0

    def __post_init__(self):
        object.__setattr__(self, "balances", tuple(self.balances))
        object.__setattr__(self, "vars", {k: tuple(v) for k, v in dict(self.vars).items()})

    @property
    def n(self) -> int:
        return len(self.balances)

    def key(self) -> Hashable:
        return (self.height, self.balances, tuple(sorted(self.vars.items())))

    def __hash__(self):
        return hash(self.key())

    def with_balances(self, balances) -> "State":
        return replace(self, balances=tuple(balances))

    def with_var(self, contract_id: str, values) -> "State":
        new_vars = dict(self.vars)
        new_vars[contract_id] = tuple(values)
        return replace(self, vars=new_vars)

    def var(self, contract_id: str) -> tuple:
        return self.vars.get(contract_id, ())

    def advance(self, steps: int = 1) -> "State":
        return replace(self, height=self.height + steps)


@dataclass(frozen=True)
class MethodSpec:
    """One method ``f_l`` with its legal action space ``U_l(x)``."""

    name: str
    action_space: Callable[[State], Iterable[Any]]
    transition: Callable[[Any, State], State]
    admits: Callable[[State, Any], bool] | None = None

    def actions(self, state: State) -> list:
        return list(self.action_space(state))

    def is_legal(self, state: State, action) -> bool:
        if self.admits is not None:
            return bool(self.admits(state, action))
        return action in self.actions(state)


@dataclass(frozen=True)
class ContractSpec:
    id: str
    methods: tuple[MethodSpec, ...]
    var_init: Callable[[int], Any] | None = None

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate method names in contract {self.id!r}")

    def method(self, name: str) -> MethodSpec:
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(f"contract {self.id!r} has no method {name!r}")

    def init_vars(self, state: State) -> State:
        """Give every account its initial contributed variable if the contract has one."""
        if self.var_init is None:
            return state
        current = list(state.var(self.id))
        current += [self.var_init(i) for i in range(len(current), state.n)]
        return state.with_var(self.id, current)

    def apply(self, method: str, action, state: State, *, check_legal: bool = True) -> State:
        """Run one method under the sandbox: only balances and this contract's variables may change."""
        m = self.method(method)
        if check_legal and not m.is_legal(state, action):
            raise IllegalAction(f"{self.id}.{method}: action {action!r} not admitted")
        after = m.transition(action, state)
        self._check_sandbox(state, after, method)
        return after

    def _check_sandbox(self, before: State, after: State, method: str):
        if after.height != before.height:
            raise SandboxViolation(f"{self.id}.{method} changed the block height")
        for cid in set(before.vars) | set(after.vars):
            if cid != self.id and before.vars.get(cid) != after.vars.get(cid):
                raise SandboxViolation(f"{self.id}.{method} wrote variables of contract {cid!r}")


# ---------------------------------------------------------------- value functions


@dataclass(frozen=True)
class Invariant:
    c: float | None = None


@dataclass(frozen=True)
class Monotone:
    epsilon: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass(frozen=True)
class Contractive:
    gamma: float

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")


@dataclass(frozen=True)
class Controller:
    output: Callable[[State], float]
    target: Callable[[int], float]
    gamma: float
    neighborhood: float = 0.0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")


Kind = Invariant | Monotone | Contractive | Controller


@dataclass(frozen=True)
class ValueFunctionSpec:
    name: str
    evaluate: Callable[[State], float]
    kind: Kind
    exact: bool = False
    rel_tol: float = 1e-9

    @classmethod
    def controller(cls, name, output, target, gamma, neighborhood=0.0, **kw) -> "ValueFunctionSpec":
        """V(x) = |g(x) - y*(k)|, zero exactly when the output sits on the target."""
        kind = Controller(output, target, gamma, neighborhood)
        return cls(name, lambda s: abs(output(s) - target(s.height)), kind, **kw)

    def __call__(self, state: State):
        return self.evaluate(state)

    def with_kind(self, kind: Kind) -> "ValueFunctionSpec":
        return replace(self, kind=kind)

    def _close(self, a, b) -> bool:
        if self.exact:
            return a == b
        return math.isclose(a, b, rel_tol=self.rel_tol, abs_tol=0.0)

    def _leq(self, a, b) -> bool:
        if self.exact:
            return a <= b
        return a <= b + self.rel_tol * max(abs(a), abs(b))

    def holds(self, before, after) -> bool:
        """Whether the single-step property of this V's kind holds for V-values (before, after)."""
        kind = self.kind
        if isinstance(kind, Invariant):
            return self._close(after, before)
        if isinstance(kind, Monotone):
            return self._leq((1 + kind.epsilon) * before, after) if kind.epsilon else self._leq(before, after)
        if isinstance(kind, (Contractive, Controller)):
            return self._leq(after, kind.gamma * before)
        raise TypeError(f"unknown kind {kind!r}")


# ---------------------------------------------------------------- checking


@dataclass(frozen=True)
class Sampler:
    """Where checkers draw states from.

    ``states`` enumerates a finite initial domain (enables exhaustive checks),
    ``draw`` samples one initial state from a numpy Generator. ``depth`` is the
    number of transitions explored from each initial state. ``shrink`` yields
    simpler candidates for a failing state.
    """

    states: Callable[[], Iterable[State]] | None = None
    draw: Callable[[np.random.Generator], State] | None = None
    depth: int = 1
    seed: int = 0
    shrink: Callable[[State], Iterable[State]] | None = None

    def draw_state(self, rng: np.random.Generator) -> State:
        if self.draw is not None:
            return self.draw(rng)
        pool = list(self.states())
        return pool[int(rng.integers(len(pool)))]


@dataclass(frozen=True)
class Witness:
    state: State
    method: str | None
    action: Any
    v_before: float
    v_after: float | None
    step: int = 0

    def to_dict(self) -> dict:
        return {
            "state": {"height": self.state.height, "balances": list(self.state.balances),
                      "vars": {k: list(v) for k, v in self.state.vars.items()}},
            "method": self.method,
            "action": _jsonable(self.action),
            "v_before": self.v_before,
            "v_after": self.v_after,
            "step": self.step,
        }


def _jsonable(x):
    if isinstance(x, (tuple, list)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


@dataclass(frozen=True)
class CheckReport:
    name: str
    verdict: str  # "pass" | "counterexample"
    trials: int
    coverage: str  # "exhaustive" | "sampled" | "trajectory"
    witness: Witness | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "check": self.name,
            "verdict": self.verdict,
            "trials": self.trials,
            "coverage": self.coverage,
            "witness": None if self.witness is None else self.witness.to_dict(),
        }


class _BudgetExceeded(Exception):
    pass


def _transitions(contract: ContractSpec, state: State):
    for m in contract.methods:
        for a in m.action_space(state):
            yield m, a


def _state_check(V: ValueFunctionSpec, state: State):
    """Level check for invariants with a declared constant: V(x) must equal c."""
    kind = V.kind
    if isinstance(kind, Invariant) and kind.c is not None:
        v = V(state)
        if not V._close(v, kind.c):
            return Witness(state, None, None, v, None)
    return None


def _check_one(V, contract, state, m, a, step):
    before = V(state)
    after_state = contract.apply(m.name, a, state, check_legal=False)
    after = V(after_state)
    if not V.holds(before, after):
        return Witness(state, m.name, a, before, after, step), after_state
    if (w := _state_check(V, after_state)) is not None:
        return replace(w, step=step + 1), after_state
    return None, after_state


def _exhaustive(V, contract, sampler, budget):
    trials = 0
    frontier = []
    seen = set()
    for s in sampler.states():
        s = contract.init_vars(s)
        if s.key() in seen:
            continue
        seen.add(s.key())
        if (w := _state_check(V, s)) is not None:
            return w, trials
        frontier.append(s)
    for step in range(sampler.depth):
        nxt = []
        for s in frontier:
            for m, a in _transitions(contract, s):
                trials += 1
                if trials > budget:
                    raise _BudgetExceeded
                w, after = _check_one(V, contract, s, m, a, step)
                if w is not None:
                    return w, trials
                if after.key() not in seen:
                    seen.add(after.key())
                    nxt.append(after)
        frontier = nxt
    return None, trials


def _pick(rng, contract, state):
    methods = [m for m in contract.methods if m.actions(state)]
    if not methods:
        return None, None
    m = methods[int(rng.integers(len(methods)))]
    acts = m.actions(state)
    return m, acts[int(rng.integers(len(acts)))]


def _shrink(V, contract, sampler, w: Witness) -> Witness:
    if sampler.shrink is None or w.method is None:
        return w
    m = contract.method(w.method)
    improved = True
    while improved:
        improved = False
        for candidate in sampler.shrink(w.state):
            candidate = contract.init_vars(candidate)
            for a in m.actions(candidate):
                before = V(candidate)
                after = V(contract.apply(m.name, a, candidate, check_legal=False))
                if not V.holds(before, after):
                    w = Witness(candidate, m.name, a, before, after, w.step)
                    improved = True
                    break
            if improved:
                break
    return w


def _sampled(V, contract, sampler, budget):
    rng = np.random.default_rng(sampler.seed)
    trials = 0
    while trials < budget:
        s = contract.init_vars(sampler.draw_state(rng))
        if (w := _state_check(V, s)) is not None:
            return w, trials
        for step in range(sampler.depth):
            m, a = _pick(rng, contract, s)
            if m is None:
                break
            trials += 1
            w, s = _check_one(V, contract, s, m, a, step)
            if w is not None:
                return _shrink(V, contract, sampler, w), trials
            if trials >= budget:
                break
    return None, trials


def _run_check(V, contract, sampler, budget) -> CheckReport:
    if sampler.states is not None:
        try:
            w, trials = _exhaustive(V, contract, sampler, budget)
            return CheckReport(V.name, "pass" if w is None else "counterexample", trials, "exhaustive", w)
        except _BudgetExceeded:
            pass
    w, trials = _sampled(V, contract, sampler, budget)
    return CheckReport(V.name, "pass" if w is None else "counterexample", trials, "sampled", w)


def check_invariant(V: ValueFunctionSpec, contract: ContractSpec, sampler: Sampler, budget: int = 100_000) -> CheckReport:
    """Verify V(f(u, x)) == V(x) for every method and legal action over the sampler's domain."""
    if not isinstance(V.kind, Invariant):
        raise NotInvariantKind(f"{V.name} is {type(V.kind).__name__}, not Invariant")
    return _run_check(V, contract, sampler, budget)


def check_monotone(V: ValueFunctionSpec, contract: ContractSpec, sampler: Sampler, budget: int = 100_000) -> CheckReport:
    """Verify V(f(u, x)) >= (1 + epsilon) V(x)."""
    if not isinstance(V.kind, Monotone):
        raise NotMonotoneKind(f"{V.name} is {type(V.kind).__name__}, not Monotone")
    return _run_check(V, contract, sampler, budget)


def check_contractive(
    V: ValueFunctionSpec,
    contract: ContractSpec,
    sampler: Sampler,
    budget: int = 100_000,
    *,
    trajectories: int = 20,
    length: int = 30,
) -> CheckReport:
    """Verify V(f(u, x)) <= gamma V(x) per step, then the geometric envelope along random walks.

    Controller-kind specs are accepted: their V is evaluated against the
    target at the state's own height, which methods cannot change.
    """
    if not isinstance(V.kind, (Contractive, Controller)):
        raise NotContractiveKind(f"{V.name} is {type(V.kind).__name__}, not Contractive")
    report = _run_check(V, contract, sampler, budget)
    if not report.passed or trajectories <= 0:
        return report
    traj = check_trajectories(V, contract, sampler, count=trajectories, length=length)
    if not traj.passed:
        return traj
    return replace(report, trials=report.trials + traj.trials)


def _envelope_ok(V, v0, vk, k) -> bool:
    bound = V.kind.gamma**k * v0
    if V.exact:
        return vk <= bound
    return vk <= bound + V.rel_tol * v0


def check_trajectories(
    V: ValueFunctionSpec,
    contract: ContractSpec,
    sampler: Sampler,
    *,
    count: int,
    length: int,
    seed: int | None = None,
) -> CheckReport:
    """Random action sequences must satisfy V(x(k)) <= gamma**k V(x(0)) (+ rel_tol * V(x(0)))."""
    if not isinstance(V.kind, (Contractive, Controller)):
        raise NotContractiveKind(f"{V.name} is {type(V.kind).__name__}, not Contractive")
    rng = np.random.default_rng(sampler.seed if seed is None else seed)
    trials = 0
    for _ in range(count):
        s = contract.init_vars(sampler.draw_state(rng))
        v0 = V(s)
        for k in range(1, length + 1):
            m, a = _pick(rng, contract, s)
            if m is None:
                break
            before = V(s)
            s_next = contract.apply(m.name, a, s, check_legal=False)
            vk = V(s_next)
            trials += 1
            if not _envelope_ok(V, v0, vk, k):
                return CheckReport(V.name, "counterexample", trials, "trajectory",
                                   Witness(s, m.name, a, before, vk, k - 1))
            s = s_next
    return CheckReport(V.name, "pass", trials, "trajectory")


def check(V: ValueFunctionSpec, contract: ContractSpec, sampler: Sampler, budget: int = 100_000) -> CheckReport:
    """Dispatch on the kind of V."""
    if isinstance(V.kind, Invariant):
        return check_invariant(V, contract, sampler, budget)
    if isinstance(V.kind, Monotone):
        return check_monotone(V, contract, sampler, budget)
    return check_contractive(V, contract, sampler, budget)


def replay_witness(V: ValueFunctionSpec, contract: ContractSpec, witness: Witness) -> tuple:
    """Recompute (V before, V after) for a reported counterexample."""
    before = V(witness.state)
    if witness.method is None:
        return before, None
    after = V(contract.apply(witness.method, witness.action, witness.state, check_legal=False))
    return before, after


def check_trace(V: ValueFunctionSpec, states: Sequence[State]) -> CheckReport:
    """Check the property of V's kind along an observed trajectory (no contract involved)."""
    kind = V.kind
    values = [V(s) for s in states]
    for k, v in enumerate(values):
        fail = False
        if isinstance(kind, Invariant):
            fail = (kind.c is not None and not V._close(v, kind.c)) or (k > 0 and not V._close(v, values[k - 1]))
        elif isinstance(kind, Monotone):
            fail = k > 0 and not V.holds(values[k - 1], v)
        elif isinstance(kind, Contractive):
            fail = not _envelope_ok(V, values[0], v, k)
        elif isinstance(kind, Controller):
            fail = v > max(kind.gamma**k * values[0], kind.neighborhood) + (0 if V.exact else V.rel_tol * max(values[0], 1.0))
        if fail:
            prev = values[k - 1] if k > 0 else v
            return CheckReport(V.name, "counterexample", k + 1, "trajectory",
                               Witness(states[k], None, None, prev, v, k))
    return CheckReport(V.name, "pass", len(values), "trajectory")


# ---------------------------------------------------------------- Lyapunov controller


@dataclass(frozen=True)
class ControllerStep:
    k: int
    output: float
    target: float
    value: float
    envelope: float
    drift: float
    flagged: bool


@dataclass(frozen=True)
class ControllerTrace:
    steps: tuple[ControllerStep, ...]
    precheck: CheckReport

    @property
    def flagged(self) -> list[int]:
        return [s.k for s in self.steps if s.flagged]

    @property
    def tracking_ok(self) -> bool:
        return not self.flagged

    @property
    def values(self) -> list:
        return [s.value for s in self.steps]


def random_policy(contract: ContractSpec):
    def policy(state, rng):
        m, a = _pick(rng, contract, state)
        return (None, None) if m is None else (m.name, a)
    return policy


def run_controller(
    spec: ValueFunctionSpec,
    contract: ContractSpec,
    policy: Callable[[State, np.random.Generator], tuple[str, Any]] | None,
    horizon: int,
    initial: State,
    *,
    drive: Callable[[State], State] | None = None,
    precheck: Sampler | None = None,
    budget: int = 100_000,
    seed: int = 0,
) -> ControllerTrace:
    """Simulate a Lyapunov controller and record (k, g(x), y*(k), V) for k = 0..horizon.

    The contract must first pass the single-step contraction check; by default
    that check covers every legal action at every state of a dry run of the
    same policy. Each step applies one policy action, then ``drive`` (exogenous
    input such as minting; default: just advance the height). A step is flagged
    when V exceeds max(gamma**k V(x(0)), neighborhood), which happens when the
    target drifts faster than the contraction closes the gap.
    """
    kind = spec.kind
    if not isinstance(kind, Controller):
        raise NotContractiveKind(f"{spec.name} is {type(kind).__name__}, not Controller")
    policy = policy or random_policy(contract)
    drive = drive or (lambda s: s.advance())
    initial = contract.init_vars(initial)

    def rollout():
        rng = np.random.default_rng(seed)
        states = [initial]
        s = initial
        for _ in range(horizon):
            name, action = policy(s, rng)
            if name is not None:
                s = contract.apply(name, action, s)
            s = drive(s)
            states.append(s)
        return states

    states = rollout()
    sampler = precheck or Sampler(states=lambda: states, depth=1, seed=seed)
    pre = check_contractive(spec, contract, sampler, budget, trajectories=0)
    if not pre.passed:
        raise UncontractiveContract(pre)

    v0 = spec(states[0])
    tol = 0 if spec.exact else spec.rel_tol * max(v0, 1.0)
    steps = []
    for k, s in enumerate(states):
        v = spec(s)
        envelope = max(kind.gamma**k * v0, kind.neighborhood)
        drift = abs(kind.target(s.height + 1) - kind.target(s.height))
        steps.append(ControllerStep(k, kind.output(s), kind.target(s.height), v, envelope, drift, v > envelope + tol))
    return ControllerTrace(tuple(steps), pre)
