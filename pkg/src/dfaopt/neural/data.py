"""Teacher-forcing examples and padded batches."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from ..dfa import REJECT, TransitionRule
from ..problems import EncodedPair, KnapsackUniverse, MatchingUniverse, SchedulingUniverse
from .masking import MaskDesyncError
from .model import DTYPE, InputSchema, Vocabulary


def layout_for(universe) -> tuple:
    """(Vocabulary, InputSchema) matching the problem's row encoding; each table gets one PAD id on top."""
    if isinstance(universe, KnapsackUniverse):
        # ids 0..n-1, then the capacity row's token
        return Vocabulary(universe.n), InputSchema((universe.n + 2,), 2)
    if isinstance(universe, MatchingUniverse):
        g = universe.group_count + 1
        return Vocabulary(universe.n_edges), InputSchema((universe.n_edges + 1, g, g), 0)
    if isinstance(universe, SchedulingUniverse):
        # groups are numbered from 1
        return Vocabulary(universe.n), InputSchema((universe.n + 1, len(universe.means) + 2), 2)
    raise TypeError(f"no layout for {type(universe).__name__}")


@dataclass
class Example:
    cat: np.ndarray
    cont: np.ndarray
    tokens_in: list
    targets: list
    masks: np.ndarray


def step_masks(rule: TransitionRule, labels: Sequence[int], vocab: Vocabulary, terminated: bool) -> np.ndarray:
    """Admissible rows along the target path, one per decoding step."""
    rows = []
    state = rule.initial()
    steps = list(labels) + ([None] if terminated else [])
    for t, label in enumerate(steps):
        row = np.zeros(vocab.n_logits, dtype=bool)
        for s in rule.mask(state):
            row[s] = True
        row[-1] = rule.accepting(state)
        rows.append(row)
        if label is None:
            if not row[-1]:
                raise MaskDesyncError(f"EOS at step {t} from a non-accepting state")
            break
        state = rule.step(state, label)
        if state is REJECT:
            raise MaskDesyncError(f"label {label} at step {t} is infeasible")
    return np.array(rows, dtype=bool).reshape(len(rows), vocab.n_logits)


def make_example(enc: EncodedPair, rule: TransitionRule, vocab: Vocabulary) -> Example:
    masks = step_masks(rule, enc.target, vocab, enc.terminated)
    targets = list(enc.target) + ([vocab.size] if enc.terminated else [])
    tokens_in = [vocab.bos] + list(enc.target)
    tokens_in = tokens_in[: len(targets)]
    return Example(enc.categorical, enc.continuous, tokens_in, targets, masks)


@dataclass
class Batch:
    cat: torch.Tensor
    cont: torch.Tensor
    pad: torch.Tensor
    tokens: torch.Tensor
    targets: torch.Tensor
    masks: torch.Tensor

    def __len__(self) -> int:
        return self.cat.shape[0]


def pad_inputs(cats: Sequence[np.ndarray], conts: Sequence[np.ndarray], schema: InputSchema) -> tuple:
    B = len(cats)
    N = max(max(c.shape[0] for c in cats), 1)
    C = len(schema.categorical_sizes)
    cat = np.tile(np.array(schema.pad_row(), dtype=np.int64), (B, N, 1))
    cont = np.zeros((B, N, schema.n_continuous))
    pad = np.ones((B, N), dtype=bool)
    for i, (c, x) in enumerate(zip(cats, conts)):
        n = c.shape[0]
        cat[i, :n] = c.reshape(n, C)
        if schema.n_continuous:
            cont[i, :n] = x
        pad[i, :n] = False
    return torch.from_numpy(cat), torch.tensor(cont, dtype=DTYPE), torch.from_numpy(pad)


def collate(examples: Sequence[Example], schema: InputSchema, vocab: Vocabulary) -> Batch:
    cat, cont, pad = pad_inputs([e.cat for e in examples], [e.cont for e in examples], schema)
    B = len(examples)
    T = max(len(e.targets) for e in examples)
    tokens = np.full((B, T), vocab.pad, dtype=np.int64)
    targets = np.full((B, T), -1, dtype=np.int64)
    masks = np.ones((B, T, vocab.n_logits), dtype=bool)
    for i, e in enumerate(examples):
        t = len(e.targets)
        tokens[i, :t] = e.tokens_in
        targets[i, :t] = e.targets
        masks[i, :t] = e.masks
    return Batch(cat, cont, pad, torch.from_numpy(tokens), torch.from_numpy(targets), torch.from_numpy(masks))
