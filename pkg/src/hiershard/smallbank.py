"""SmallBank-style payment contract.

Three deterministic read-modify-write operations over single-balance
accounts. Execution is a pure function of a read callback, so the same code
runs speculatively on local chains, on the main chain and inside 2PC.
"""

from __future__ import annotations

from typing import Callable

from .core import Operation, Version
from .statedb import NotFound

SEND_PAYMENT = "send_payment"
DEPOSIT_CHECKING = "deposit_checking"
AMALGAMATE = "amalgamate"

OPERATIONS = (SEND_PAYMENT, DEPOSIT_CHECKING, AMALGAMATE)
CONSERVATIVE = frozenset({SEND_PAYMENT, AMALGAMATE})


class ApplicationError(Exception):
    """The operation cannot run (unknown op/account, insufficient funds)."""


Reader = Callable[[str], tuple[int, Version]]


def execute(op: Operation, read: Reader):
    """Run ``op`` against ``read`` and return ``(read_set, write_set)``."""
    if op.name not in OPERATIONS:
        raise ApplicationError(f"unknown operation {op.name!r}")
    if len(set(op.keys)) != len(op.keys):
        raise ApplicationError("operation names the same account twice")
    try:
        reads = [(key, read(key)) for key in op.keys]
    except NotFound as exc:
        raise ApplicationError(f"unknown account {exc.args[0]}") from None
    read_set = tuple((key, ver) for key, (_, ver) in reads)
    balances = [val for _, (val, _) in reads]

    if op.name == SEND_PAYMENT:
        if len(op.keys) != 2:
            raise ApplicationError("send_payment needs two accounts")
        if op.amount < 0 or balances[0] < op.amount:
            raise ApplicationError("insufficient funds")
        src, dst = op.keys
        writes = ((src, balances[0] - op.amount), (dst, balances[1] + op.amount))
    elif op.name == DEPOSIT_CHECKING:
        if len(op.keys) != 1 or op.amount < 0:
            raise ApplicationError("bad deposit")
        writes = ((op.keys[0], balances[0] + op.amount),)
    else:
        if len(op.keys) != 2:
            raise ApplicationError("amalgamate needs two accounts")
        a, b = op.keys
        writes = ((a, 0), (b, balances[0] + balances[1]))
    return read_set, writes


def deposit_total(op: Operation) -> int:
    """Net money created by ``op`` when it commits."""
    return op.amount if op.name == DEPOSIT_CHECKING else 0
