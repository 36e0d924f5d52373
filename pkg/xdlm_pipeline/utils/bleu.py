# utils/bleu.py
"""
Corpus BLEU over pre-tokenized sequences: clipped n-gram counts pooled over
the corpus, geometric mean of the precisions, brevity penalty.
"""
import math
from collections import Counter

from sacrebleu.metrics import BLEU

from xdlm_pipeline.exceptions import EvaluationError

SMOOTHING = ("none", "add_k")


def ngram_counts(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sentence_stats(hypothesis, reference, max_n):
    """(hyp_len, ref_len, [matches per order], [totals per order]) for one pair."""
    matches, totals = [], []
    for n in range(1, max_n + 1):
        hyp_counts = ngram_counts(hypothesis, n)
        ref_counts = ngram_counts(reference, n)
        matches.append(sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items()))
        totals.append(max(len(hypothesis) - n + 1, 0))
    return len(hypothesis), len(reference), matches, totals


def _add_k_bleu(hypotheses, references, max_n, k):
    # sacrebleu's add-k leaves unigrams unsmoothed; here every order gets (match + k) / (total + k)
    hyp_len = ref_len = 0
    matches, totals = [0] * max_n, [0] * max_n
    for hypothesis, reference in zip(hypotheses, references):
        h, r, m, t = sentence_stats(hypothesis, reference, max_n)
        hyp_len += h
        ref_len += r
        matches = [a + b for a, b in zip(matches, m)]
        totals = [a + b for a, b in zip(totals, t)]
    if hyp_len == 0:
        return 0.0
    precisions = [(m + k) / (t + k) for m, t in zip(matches, totals)]
    brevity = math.exp(min(0.0, 1.0 - ref_len / hyp_len))
    return 100.0 * brevity * math.exp(sum(math.log(p) for p in precisions) / max_n)


def bleu(hypotheses, references, max_n=4, smoothing="none", k=1.0):
    """
    Corpus BLEU in [0, 100].

    smoothing="none" is sacrebleu's unsmoothed corpus BLEU on whitespace-joined
    tokens with effective order: orders with no n-grams anywhere in the
    hypotheses are left out of the geometric mean, so identical corpora of
    short sentences still score 100. Any zero precision among the remaining
    orders gives 0. smoothing="add_k" uses (match + k) / (total + k) for every
    order up to max_n.
    """
    if len(hypotheses) != len(references):
        raise EvaluationError(f"{len(hypotheses)} hypotheses for {len(references)} references")
    if max_n < 1:
        raise EvaluationError(f"max_n must be >= 1, got {max_n}")
    if smoothing not in SMOOTHING:
        raise EvaluationError(f"Unknown smoothing {smoothing!r}, expected one of {SMOOTHING}")

    hypotheses = [list(hypothesis) for hypothesis in hypotheses]
    references = [list(reference) for reference in references]
    for line_number, reference in enumerate(references, start=1):
        if not reference:
            raise EvaluationError(f"Empty reference on line {line_number}")

    if smoothing == "add_k":
        return _add_k_bleu(hypotheses, references, max_n, k)

    metric = BLEU(tokenize="none", smooth_method="none", max_ngram_order=max_n,
                  effective_order=True, force=True)
    score = metric.corpus_score([" ".join(h) for h in hypotheses], [[" ".join(r) for r in references]])
    return min(score.score, 100.0)


def length_accuracy(hypotheses, references):
    """Share of hypotheses whose whitespace-token count equals the reference's."""
    if not references:
        raise EvaluationError("No sentences to score")
    hits = sum(len(h.split()) == len(r.split()) for h, r in zip(hypotheses, references))
    return hits / len(references)
