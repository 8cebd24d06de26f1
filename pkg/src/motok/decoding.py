"""Search and sampling over autoregressive next-token distributions.

``step_fn(prefixes)`` receives a (n, l) LongTensor of prefixes (each starting
with the begin token) and returns (n, V) next-token log-probabilities.
"""

import numpy as np
import torch


def greedy_decode(step_fn, bos, eos, max_len):
    """Argmax decoding. Returns ``(ids, log_prob)`` with ``ids`` framed by bos/eos."""
    prefix = [bos]
    total = 0.0
    for _ in range(max_len):
        lp = step_fn(torch.tensor([prefix]))[0]
        tok = int(torch.argmax(lp))
        total += float(lp[tok])
        if tok == eos:
            return np.array(prefix + [eos]), total
        prefix.append(tok)
    return np.array(prefix + [eos]), total


def beam_search(step_fn, bos, eos, beam_size=2, max_len=20):
    """Highest total log-probability hypothesis, no length normalisation.

    A hypothesis completes when it emits ``eos`` or reaches ``max_len``
    generated tokens. The search stops early once the best finished score is
    at least the best live score, since log-probabilities only accumulate
    downwards.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    live = [([bos], 0.0)]
    finished = []
    for _ in range(max_len):
        lp = step_fn(torch.tensor([p for p, _ in live])).detach().cpu().numpy().astype(np.float64)
        scores = np.array([s for _, s in live])[:, None] + lp
        order = np.argsort(-scores.ravel(), kind="stable")[:beam_size]
        vocab = lp.shape[1]
        new_live = []
        for flat in order:
            b, tok = divmod(int(flat), vocab)
            score = float(scores[b, tok])
            if not np.isfinite(score):
                continue
            if tok == eos:
                finished.append((live[b][0] + [eos], score))
            else:
                new_live.append((live[b][0] + [tok], score))
        live = new_live
        if not live:
            break
        if finished and max(s for _, s in finished) >= max(s for _, s in live):
            break
    else:
        finished.extend((p + [eos], s) for p, s in live)
    best = max(finished, key=lambda h: h[1])
    return np.array(best[0]), best[1]


def sample_until_end(step_fn, bos, end, n_codes, max_tokens, rng):
    """Sample ids in ``[0, n_codes)`` until ``end`` is the most probable next token.

    When the cap is hit, ``end`` is appended. ``rng`` is a numpy Generator.
    Returns ``(ids, terminated_by_end)``.
    """
    prefix = [bos]
    for _ in range(max_tokens):
        lp = step_fn(torch.tensor([prefix]))[0].detach().cpu().numpy().astype(np.float64)
        if int(np.argmax(lp)) == end and len(prefix) > 1:
            return np.array(prefix + [end]), True
        p = np.exp(lp[:n_codes] - lp[:n_codes].max())
        prefix.append(int(rng.choice(n_codes, p=p / p.sum())))
    return np.array(prefix + [end]), False
