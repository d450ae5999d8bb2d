"""Interaction logs: loading, leave-last-out splitting and a synthetic generator."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import InvalidInputError
from ..sampling import make_rng

logger = logging.getLogger(__name__)

MIN_EVENTS = 3
CSV_COLUMNS = ("user_id", "item_id", "timestamp")


class DataFormatError(InvalidInputError):
    """Malformed interaction file; the message carries the line number."""


@dataclass
class InteractionDataset:
    """Implicit-feedback log with dense ids.

    ``user_ids[u]`` / ``item_ids[i]`` map dense indices back to the raw ids of
    the source file. ``sequences[u]`` lists user ``u``'s items in timestamp
    order (file order breaks ties).
    """

    user_ids: list
    item_ids: list
    events: list  # (user, item, timestamp) triples, dense ids
    sequences: list = field(default_factory=list)
    dropped_users: int = 0

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)


@dataclass
class SplitDataset:
    n_items: int
    train: list  # per-user chronological prefix
    valid: np.ndarray
    test: np.ndarray
    interacted: list = field(default_factory=list)  # per-user sorted unique items (all splits)

    @property
    def n_users(self) -> int:
        return len(self.train)


def _parse_timestamp(text: str, lineno: int):
    try:
        return int(text)
    except ValueError:
        try:
            return float(text)
        except ValueError:
            raise DataFormatError(f"line {lineno}: bad timestamp {text!r}") from None


def _id_order(raw_ids):
    ids = list(raw_ids)
    try:
        return sorted(ids, key=int)
    except ValueError:
        return sorted(ids)


def _read_rows(path: Path, fmt: str):
    rows = []
    with open(path, newline="") as fh:
        if fmt == "csv":
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:3]] != list(CSV_COLUMNS):
                raise DataFormatError(f"line 1: expected header {','.join(CSV_COLUMNS)}, got {header!r}")
            for row in reader:
                lineno = reader.line_num
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 3:
                    raise DataFormatError(f"line {lineno}: expected 3 fields, got {len(row)}")
                user, item, ts = (c.strip() for c in row)
                if not user or not item:
                    raise DataFormatError(f"line {lineno}: empty id")
                rows.append((user, item, _parse_timestamp(ts, lineno)))
        elif fmt == "movielens":
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split("::")
                if len(parts) != 4:
                    raise DataFormatError(f"line {lineno}: expected user::item::rating::timestamp")
                user, item, _, ts = (p.strip() for p in parts)
                if not user or not item:
                    raise DataFormatError(f"line {lineno}: empty id")
                rows.append((user, item, _parse_timestamp(ts, lineno)))
        else:
            raise InvalidInputError(f"unknown format {fmt!r}; expected csv or movielens")
    return rows


def build_dataset(rows, min_events: int = MIN_EVENTS) -> InteractionDataset:
    """Filter short users and densely re-index ``(raw_user, raw_item, timestamp)`` rows."""
    per_user: dict = {}
    for pos, (user, item, ts) in enumerate(rows):
        per_user.setdefault(user, []).append((ts, pos, item))
    kept = {u: evs for u, evs in per_user.items() if len(evs) >= min_events}
    dropped = len(per_user) - len(kept)
    if dropped:
        logger.warning("dropped %d user(s) with fewer than %d interactions", dropped, min_events)
    if not kept:
        raise InvalidInputError("no users left after filtering")
    user_ids = _id_order(kept)
    item_ids = _id_order({item for evs in kept.values() for _, _, item in evs})
    uidx = {u: i for i, u in enumerate(user_ids)}
    iidx = {it: i for i, it in enumerate(item_ids)}
    events, sequences = [], []
    for u in user_ids:
        evs = sorted(kept[u], key=lambda e: (e[0], e[1]))
        sequences.append([iidx[item] for _, _, item in evs])
        events.extend((uidx[u], iidx[item], ts) for ts, _, item in evs)
    return InteractionDataset(user_ids, item_ids, events, sequences, dropped)


def load_interactions(path: Path | str, format: str = "csv") -> InteractionDataset:
    """Read a ``user_id,item_id,timestamp`` CSV or a MovieLens ``::`` ratings file.

    Every row is an implicit positive (MovieLens ratings are ignored). Users
    with fewer than three events are dropped; ``dropped_users`` records how
    many.
    """
    rows = _read_rows(Path(path), format)
    if not rows:
        raise InvalidInputError(f"{path}: no interactions found")
    return build_dataset(rows)


def write_interactions_csv(dataset: InteractionDataset, path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for u, i, ts in dataset.events:
            writer.writerow((dataset.user_ids[u], dataset.item_ids[i], ts))


def split_leave_last(dataset: InteractionDataset) -> SplitDataset:
    """Last event is the test item, second-to-last the validation item."""
    train, valid, test, interacted = [], [], [], []
    for u, seq in enumerate(dataset.sequences):
        if len(seq) < MIN_EVENTS:
            raise InvalidInputError(
                f"user {dataset.user_ids[u]!r} has {len(seq)} interactions; need at least {MIN_EVENTS}"
            )
        train.append(list(seq[:-2]))
        valid.append(seq[-2])
        test.append(seq[-1])
        interacted.append(np.unique(np.asarray(seq, dtype=np.int64)))
    return SplitDataset(dataset.n_items, train, np.asarray(valid), np.asarray(test), interacted)


def make_block_dataset(
    n_users: int = 200,
    n_items: int = 200,
    n_blocks: int = 10,
    seq_len: int = 12,
    noise: float = 0.0,
    seed: int = 0,
) -> InteractionDataset:
    """Synthetic block-preference log.

    Users and items are split into ``n_blocks`` groups; each user draws
    ``seq_len`` distinct items, each from the user's own block with
    probability ``1 - noise`` and from anywhere otherwise.
    """
    if n_items % n_blocks or seq_len > n_items // n_blocks:
        raise InvalidInputError("n_items must split evenly into blocks of at least seq_len items")
    if seq_len < MIN_EVENTS:
        raise InvalidInputError(f"seq_len must be >= {MIN_EVENTS}")
    rng = make_rng(seed, 0)
    size = n_items // n_blocks
    rows = []
    for u in range(n_users):
        block = np.arange((u % n_blocks) * size, (u % n_blocks + 1) * size)
        chosen: list = []
        while len(chosen) < seq_len:
            pool = np.arange(n_items) if rng.random() < noise else block
            item = int(pool[rng.integers(pool.size)])
            if item not in chosen:
                chosen.append(item)
        rows.extend((str(u), str(item), t) for t, item in enumerate(chosen))
    return build_dataset(rows)
