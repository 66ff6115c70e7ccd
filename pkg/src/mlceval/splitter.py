"""Seeded, stratified k-fold splits and fine-tuning dataset export."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

from .dataset import Corpus
from .errors import ValidationError
from .labelspace import LabelSetPattern, format_binary_code, parse_pattern
from .synth import make_rng

POLICIES = ("none", "label-set", "group-pattern")


@dataclass(frozen=True)
class SplitPlan:
    k: int
    repeats: int
    seed: int
    policy: str
    folds: tuple[tuple[tuple[str, ...], ...], ...]  # [repeat][fold] -> ids, corpus order
    groups: tuple[str, ...] = ()

    def fold_ids(self, repeat: int, fold: int) -> tuple[str, ...]:
        self._check(repeat, fold)
        return self.folds[repeat][fold]

    def train_ids(self, repeat: int, fold: int) -> tuple[str, ...]:
        self._check(repeat, fold)
        return tuple(i for f, ids in enumerate(self.folds[repeat]) if f != fold for i in ids)

    def _check(self, repeat: int, fold: int) -> None:
        if not 0 <= repeat < self.repeats:
            raise ValidationError(f"repeat {repeat} out of range 0..{self.repeats - 1}")
        if not 0 <= fold < self.k:
            raise ValidationError(f"fold {fold} out of range 0..{self.k - 1}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "split-plan",
            "k": self.k,
            "repeats": self.repeats,
            "seed": self.seed,
            "policy": self.policy,
            "groups": list(self.groups),
            "rng": "numpy.PCG64(seed, repeat)",
            "folds": [[list(f) for f in rep] for rep in self.folds],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SplitPlan":
        return cls(
            d["k"], d["repeats"], d["seed"], d["policy"],
            tuple(tuple(tuple(f) for f in rep) for rep in d["folds"]),
            tuple(d.get("groups", ())),
        )


def _strata(corpus: Corpus, policy: str, patterns: Sequence[LabelSetPattern]) -> list[int]:
    if policy == "none":
        return [0] * corpus.N
    if policy == "label-set":
        return [inst.truth.mask for inst in corpus]
    keys = []
    for inst in corpus:
        hit = next((g for g, pat in enumerate(patterns) if pat.matches(inst.truth)), len(patterns))
        keys.append(hit)
    return keys


def make_splits(
    corpus: Corpus,
    k: int = 5,
    repeats: int = 1,
    policy: str = "label-set",
    seed: int = 0,
    groups: Sequence[str] = (),
) -> SplitPlan:
    """Partition the corpus into k folds per repeat.

    Members of each stratum are shuffled, strata are laid end to end
    (largest first, ties broken by a seeded shuffle) and the sequence is
    dealt round-robin over a seeded permutation of the folds.  This keeps
    every stratum within one of its proportional share per fold, fold sizes
    within one of each other, and puts the members of a stratum smaller
    than k in distinct folds.
    """
    if policy not in POLICIES:
        raise ValidationError(f"policy must be one of {POLICIES}, got {policy!r}")
    if k < 2:
        raise ValidationError("k must be at least 2")
    if corpus.N < k:
        raise ValidationError(f"cannot make {k} folds from {corpus.N} instances")
    if repeats < 1:
        raise ValidationError("repeats must be at least 1")
    patterns = [parse_pattern(g, corpus.schema) for g in groups]
    if policy == "group-pattern" and not patterns:
        raise ValidationError("group-pattern policy needs at least one pattern")
    keys = _strata(corpus, policy, patterns)
    ids = corpus.ids()

    plan = []
    for r in range(repeats):
        rng = make_rng(seed, r)
        members: dict[int, list[int]] = {}
        for idx, key in enumerate(keys):
            members.setdefault(key, []).append(idx)
        strata = sorted(members)
        tie = rng.permutation(len(strata))
        ranked = sorted(range(len(strata)), key=lambda s: (-len(members[strata[s]]), int(tie[s])))
        sequence: list[int] = []
        for s in ranked:
            group = members[strata[s]]
            sequence.extend(group[i] for i in rng.permutation(len(group)))
        fold_perm = rng.permutation(k)
        assign = np.empty(corpus.N, dtype=np.int64)
        for pos, idx in enumerate(sequence):
            assign[idx] = fold_perm[pos % k]
        plan.append(tuple(tuple(ids[i] for i in range(corpus.N) if assign[i] == f) for f in range(k)))
    return SplitPlan(k, repeats, seed, policy, tuple(plan), tuple(groups))


def export_finetune(
    corpus: Corpus,
    plan: SplitPlan,
    repeat: int,
    fold: int,
    template: Any = "zero",
) -> Iterator[dict[str, Any]]:
    """Chat-format training records for every instance outside the held-out fold.

    ``template`` is a PromptTemplate or the id of a built-in one.
    """
    from .gateway.prompts import get_template, render_prompt

    tmpl = get_template(template) if isinstance(template, str) else template
    train = plan.train_ids(repeat, fold)
    lookup = corpus.by_id()
    for iid in train:
        if iid not in lookup:
            raise ValidationError(f"split plan id {iid!r} is not in the corpus")
        inst = lookup[iid]
        if not inst.text:
            raise ValidationError(f"instance {iid!r} has no text to train on")
    for iid in train:
        inst = lookup[iid]
        messages = render_prompt(tmpl, corpus.schema, inst.text)
        messages.append({"role": "assistant", "content": format_binary_code(inst.truth, corpus.schema)})
        yield {"messages": messages}
