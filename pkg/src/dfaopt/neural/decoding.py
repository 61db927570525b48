"""Greedy decoding under the transition-rule mask."""
from __future__ import annotations

from typing import Sequence

import torch

from ..dfa import REJECT, TransitionRule
from ..problems import EncodedPair
from .data import pad_inputs
from .masking import admissible_vector, apply_feasibility_mask
from .model import Seq2Seq


class DecodeLengthError(RuntimeError):
    pass


@torch.no_grad()
def greedy_decode_batch(model: Seq2Seq, encoded: Sequence[EncodedPair], rules: Sequence[TransitionRule], batch_size: int = 256) -> list:
    out = []
    for i in range(0, len(encoded), batch_size):
        out.extend(_decode_chunk(model, encoded[i : i + batch_size], rules[i : i + batch_size]))
    return out


def greedy_decode(model: Seq2Seq, encoded: EncodedPair, rule: TransitionRule) -> list:
    return greedy_decode_batch(model, [encoded], [rule])[0]


def _decode_chunk(model: Seq2Seq, encoded: Sequence[EncodedPair], rules: Sequence[TransitionRule]) -> list:
    model.eval()
    vocab = model.vocab
    cat, cont, pad = pad_inputs([e.categorical for e in encoded], [e.continuous for e in encoded], model.schema)
    mem = model.encode(cat, cont, pad)
    B = len(encoded)
    states = [r.initial() for r in rules]
    seqs: list = [[] for _ in range(B)]
    done = [False] * B
    caps = [len(r.labels) + 1 for r in rules]
    tokens = torch.full((B, 1), vocab.bos, dtype=torch.long)
    while not all(done):
        logits = model.decode(mem, pad, tokens)[:, -1]
        nxt = torch.full((B, 1), vocab.pad, dtype=torch.long)
        for b in range(B):
            if done[b]:
                continue
            rule, state = rules[b], states[b]
            mask = rule.mask(state)
            accepting = rule.accepting(state)
            if accepting and not mask:
                done[b] = True
                continue
            row = apply_feasibility_mask(logits[b], mask, accepting)
            choice = int(torch.argmax(row))
            if choice == vocab.size:
                done[b] = True
                continue
            if len(seqs[b]) >= caps[b]:
                raise DecodeLengthError(f"decode exceeded {caps[b]} steps; the rule does not terminate")
            states[b] = rule.step(state, choice)
            assert states[b] is not REJECT
            seqs[b].append(choice)
            nxt[b, 0] = choice
        tokens = torch.cat([tokens, nxt], dim=1)
    return seqs


@torch.no_grad()
def step_probabilities(model: Seq2Seq, encoded: EncodedPair, rule: TransitionRule, prefix: Sequence[int]) -> torch.Tensor:
    """Masked next-label distribution after ``prefix`` (labels + EOS in the last slot)."""
    from .masking import masked_softmax

    model.eval()
    cat, cont, pad = pad_inputs([encoded.categorical], [encoded.continuous], model.schema)
    mem = model.encode(cat, cont, pad)
    tokens = torch.tensor([[model.vocab.bos] + list(prefix)], dtype=torch.long)
    logits = model.decode(mem, pad, tokens)[0, -1]
    state = rule.initial()
    for s in prefix:
        state = rule.step(state, s)
    admitted = admissible_vector(rule.mask(state), rule.accepting(state), logits.shape[-1])
    return masked_softmax(logits, admitted)
