"""Difficulty adjustment, uncle validity and total-difficulty fork choice.

The difficulty update is the production Ethereum (Homestead-family) rule with
one change: the fixed divisor 9 applied to the block interval becomes a
tunable threshold ``lambda_``. The update keeps the interval between
``lambda_`` and ``2*lambda_`` seconds: shorter parents push difficulty up by
one step, intervals inside the window leave it unchanged, longer intervals
pull it down proportionally (clamped at -99 steps). Setting ``lambda_ = 9``
reproduces the unmodified public-network rule bit for bit.

All arithmetic is exact integer arithmetic with floor division.
"""

from __future__ import annotations

from dataclasses import dataclass

from .chain import BlockHeader, BlockTree, UnknownParent

MIN_DIFFICULTY = 131072

# A block may reference an uncle whose parent is its k-th generation
# ancestor for 2 <= k <= MAX_UNCLE_GENERATIONS (the standard protocol window).
MAX_UNCLE_GENERATIONS = 7
MAX_UNCLES_PER_BLOCK = 2


class ConsensusError(Exception):
    pass


class NonMonotonicTimestamp(ConsensusError):
    """Child timestamp must be strictly greater than the parent's."""


@dataclass(frozen=True, slots=True)
class DifficultyParams:
    """All knobs of the difficulty update rule.

    ``lambda_`` is the interval threshold in seconds (9 on the public
    network). The exponential "bomb" term is kept faithful to the production
    rule even though it is dormant at private-network block heights; its
    offset/period are exposed rather than hard-wired.
    """

    lambda_: int = 9
    d0: int = MIN_DIFFICULTY
    divisor: int = 2048
    zeta_floor: int = -99
    bomb_offset: int = 5_000_000
    bomb_period: int = 100_000

    def __post_init__(self) -> None:
        if self.lambda_ < 1:
            raise ValueError("lambda_ must be >= 1 second")
        if self.d0 <= 0 or self.divisor <= 0:
            raise ValueError("d0 and divisor must be positive")
        if self.zeta_floor >= 0:
            raise ValueError("zeta_floor must be negative")


@dataclass(frozen=True, slots=True)
class DifficultyTrace:
    """One difficulty evaluation with all intermediates kept inspectable."""

    t: int          # block interval in seconds
    x: int          # parent_difficulty // divisor
    y: int          # 1 if the parent has no uncles else 2
    zeta: int       # max(y - t // lambda_, zeta_floor)
    epsilon: int    # exponential bomb term (0 below the offset height)
    result: int


def bomb_term(params: DifficultyParams, block_number: int) -> int:
    """floor(2 ** (max(number - offset, 0) // period - 2)), exactly.

    Exact integer arithmetic: any negative exponent floors to zero.
    """
    exponent = max(block_number - params.bomb_offset, 0) // params.bomb_period - 2
    return 2**exponent if exponent >= 0 else 0


def compute_difficulty(
    params: DifficultyParams,
    parent: BlockHeader | None,
    block_number: int,
    timestamp: int,
) -> DifficultyTrace:
    """Evaluate the difficulty of a block given its parent header.

    For ``block_number == 0`` the result is the base difficulty ``d0`` and
    the intermediates are zeroed (``y = 1`` by convention).
    """
    if block_number == 0:
        return DifficultyTrace(t=0, x=0, y=1, zeta=0, epsilon=0, result=params.d0)
    if parent is None:
        raise ValueError("non-genesis difficulty needs the parent header")
    if timestamp <= parent.timestamp:
        raise NonMonotonicTimestamp(
            f"timestamp {timestamp} <= parent timestamp {parent.timestamp}"
        )
    t = timestamp - parent.timestamp
    x = parent.difficulty // params.divisor
    y = 1 if not parent.uncle_ids else 2
    zeta = max(y - t // params.lambda_, params.zeta_floor)
    epsilon = bomb_term(params, block_number)
    result = max(params.d0, parent.difficulty + x * zeta + epsilon)
    return DifficultyTrace(t=t, x=x, y=y, zeta=zeta, epsilon=epsilon, result=result)


def fork_choice_head(tree: BlockTree, receive_order: dict[str, int] | None = None) -> str:
    """Block id with maximal total difficulty.

    Ties are broken by earlier receive order (when the evaluating node's
    receive map is given) and then by lexicographically smaller block id, so
    the choice is deterministic either way. Without a receive map the result
    depends only on the tree contents, not on insertion order.
    """
    best_id = None
    best_key = None
    for bid, td in tree.total_difficulty.items():
        seq = receive_order.get(bid, 0) if receive_order is not None else 0
        key = (-td, seq, bid)
        if best_key is None or key < best_key:
            best_key = key
            best_id = bid
    assert best_id is not None
    return best_id


def validate_uncle(tree: BlockTree, nephew: BlockHeader, uncle_id: str) -> bool:
    """Check that ``uncle_id`` may be referenced by the block ``nephew``.

    Valid iff the uncle exists, is not an ancestor of the nephew, its parent
    is the nephew's k-th generation ancestor for 2 <= k <= 7, and no block on
    the nephew's ancestor path already includes it. Blocks already in the
    tree are assumed header-valid (they are validated on insertion).
    """
    if uncle_id not in tree:
        return False
    uncle = tree.blocks[uncle_id]
    # k = nephew.number - uncle.number + 1 is the generation of the uncle's
    # parent; restrict to the protocol window and forbid nephew's own height.
    k = nephew.number - uncle.number + 1
    if not (2 <= k <= MAX_UNCLE_GENERATIONS):
        return False
    lineage = tree.ancestors(nephew.parent_id, MAX_UNCLE_GENERATIONS)
    lineage = [nephew.parent_id] + lineage
    if uncle_id in lineage:
        return False
    if uncle.header.parent_id not in lineage:
        return False
    # Reject double inclusion. Only ancestors close enough that the window
    # overlaps can have included this uncle, so the bounded scan is complete.
    for aid in lineage:
        if uncle_id in tree.blocks[aid].header.uncle_ids:
            return False
    return True


def eligible_uncles(tree: BlockTree, new_parent: str) -> list[str]:
    """Up to two uncle candidates for a child of ``new_parent``.

    Deterministic: candidates are ordered by block number ascending, then by
    block id, and the first two valid ones are returned.
    """
    parent = tree.block(new_parent)
    nephew_number = parent.number + 1
    probe = BlockHeader(
        block_id="",
        number=nephew_number,
        parent_id=new_parent,
        miner=-1,
        difficulty=0,
        timestamp=parent.header.timestamp + 1,
        uncle_ids=(),
        gas_used=0,
    )
    candidates: list[tuple[int, str]] = []
    lo = max(0, nephew_number - MAX_UNCLE_GENERATIONS + 1)
    for number in range(lo, nephew_number):
        for bid in tree.by_number.get(number, ()):
            candidates.append((number, bid))
    out: list[str] = []
    for _, bid in sorted(candidates):
        if validate_uncle(tree, probe, bid):
            out.append(bid)
            if len(out) == MAX_UNCLES_PER_BLOCK:
                break
    return out


def validate_header(params: DifficultyParams, tree: BlockTree, header: BlockHeader) -> bool:
    """Full header check against the parent already in ``tree``.

    True iff the difficulty matches the update rule exactly, the timestamp is
    strictly increasing, and the uncle list is within bounds and valid.
    """
    if header.parent_id not in tree:
        raise UnknownParent(header.parent_id)
    parent = tree.blocks[header.parent_id].header
    if header.number != parent.number + 1:
        return False
    if header.timestamp <= parent.timestamp:
        return False
    trace = compute_difficulty(params, parent, header.number, header.timestamp)
    if header.difficulty != trace.result:
        return False
    if len(header.uncle_ids) > MAX_UNCLES_PER_BLOCK:
        return False
    if len(set(header.uncle_ids)) != len(header.uncle_ids):
        return False
    for uid in header.uncle_ids:
        if not validate_uncle(tree, header, uid):
            return False
    return True
