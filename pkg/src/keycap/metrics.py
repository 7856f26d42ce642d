"""Text generation metrics: BLEU, CIDEr, ROUGE-L, METEOR.

All four consume token lists as produced by the text pipeline. BLEU is
clipped n-gram precision with a brevity penalty and no smoothing unless
asked; CIDEr is mean TF-IDF cosine over n-gram orders with natural-log
idf and no rescaling; ROUGE-L is the LCS F-measure; METEOR is the
exact-surface-match variant (no stemming or synonyms), with the chunk
penalty computed from an alignment that maximizes matches and then
minimizes chunks.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass

from .errors import DataError


@dataclass(frozen=True)
class NGramCounts:
    order: int
    counts: Counter


def ngram_counts(tokens, n: int) -> NGramCounts:
    counts = Counter(
        tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)
    )
    return NGramCounts(order=n, counts=counts)


# ---------------------------------------------------------------------------
# BLEU


def effective_reference_length(c: int, references) -> int:
    """Closest reference length to c; ties go to the shorter reference."""
    return min((abs(len(r) - c), len(r)) for r in references)[1]


def _clipped_counts(candidate, references, n: int):
    """(clipped match count, total candidate n-grams) for one order."""
    cand = ngram_counts(candidate, n).counts
    total = sum(cand.values())
    if total == 0:
        return 0, 0
    ref_max: Counter = Counter()
    for ref in references:
        for gram, count in ngram_counts(ref, n).counts.items():
            if count > ref_max[gram]:
                ref_max[gram] = count
    clipped = sum(min(count, ref_max[gram]) for gram, count in cand.items())
    return clipped, total


def _brevity_penalty(c: int, r: int) -> float:
    return 1.0 if c > r else math.exp(1.0 - r / c)


def _geometric_bleu(precisions, c: int, r: int, max_n: int) -> float:
    if any(p == 0.0 for p in precisions):
        return 0.0
    log_mean = sum(math.log(p) for p in precisions) / max_n
    return _brevity_penalty(c, r) * math.exp(log_mean)


def bleu(candidate, references, max_n: int = 4, smoothing_eps: float = 0.0) -> float:
    """Sentence BLEU per the brevity-penalized geometric mean, in [0, 1].

    With the default smoothing_eps = 0 any zero n-gram precision zeroes
    the score; a positive epsilon switches to (clipped+eps)/(total+eps).
    """
    if not references or any(len(r) == 0 for r in references):
        raise DataError("BLEU needs at least one nonempty reference")
    if max_n < 1:
        raise DataError(f"max_n must be >= 1, got {max_n}")
    c = len(candidate)
    if c == 0:
        return 0.0
    precisions = []
    for n in range(1, max_n + 1):
        clipped, total = _clipped_counts(candidate, references, n)
        if smoothing_eps > 0.0:
            precisions.append((clipped + smoothing_eps) / (total + smoothing_eps))
        else:
            precisions.append(clipped / total if total else 0.0)
    return _geometric_bleu(precisions, c, effective_reference_length(c, references), max_n)


def corpus_bleu(pairs, max_n: int = 4, smoothing_eps: float = 0.0) -> float:
    """Corpus BLEU: clipped counts and lengths aggregated over all pairs."""
    if not pairs:
        raise DataError("corpus BLEU needs at least one pair")
    clipped_sum = [0] * max_n
    total_sum = [0] * max_n
    c_sum = 0
    r_sum = 0
    for candidate, references in pairs:
        if not references or any(len(r) == 0 for r in references):
            raise DataError("BLEU needs at least one nonempty reference")
        c = len(candidate)
        c_sum += c
        r_sum += effective_reference_length(c, references)
        for n in range(1, max_n + 1):
            clipped, total = _clipped_counts(candidate, references, n)
            clipped_sum[n - 1] += clipped
            total_sum[n - 1] += total
    if c_sum == 0:
        return 0.0
    precisions = []
    for clipped, total in zip(clipped_sum, total_sum):
        if smoothing_eps > 0.0:
            precisions.append((clipped + smoothing_eps) / (total + smoothing_eps))
        else:
            precisions.append(clipped / total if total else 0.0)
    return _geometric_bleu(precisions, c_sum, r_sum, max_n)


# ---------------------------------------------------------------------------
# CIDEr


def _tfidf_vector(tokens, n: int, df: Counter, n_images: int) -> dict:
    return {
        gram: count * math.log(n_images / max(1, df[gram]))
        for gram, count in ngram_counts(tokens, n).counts.items()
    }


def _cosine(a: dict, b: dict) -> float:
    dot = sum(w * b[g] for g, w in a.items() if g in b)
    na = math.sqrt(sum(w * w for w in a.values()))
    nb = math.sqrt(sum(w * w for w in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def cider(candidate, references, corpus_refs, max_n: int = 4) -> float:
    """Mean over n of the average TF-IDF cosine against the references.

    corpus_refs is the full corpus as a list of per-image reference sets;
    document frequency counts the images whose set contains the n-gram.
    """
    if not corpus_refs:
        raise DataError("CIDEr needs a corpus of at least one reference set")
    if not references:
        raise DataError("CIDEr needs at least one reference for the item")
    n_images = len(corpus_refs)
    score = 0.0
    for n in range(1, max_n + 1):
        df: Counter = Counter()
        for ref_set in corpus_refs:
            seen = set()
            for ref in ref_set:
                seen.update(ngram_counts(ref, n).counts)
            for gram in seen:
                df[gram] += 1
        cand_vec = _tfidf_vector(candidate, n, df, n_images)
        sims = [
            _cosine(cand_vec, _tfidf_vector(ref, n, df, n_images))
            for ref in references
        ]
        score += (sum(sims) / len(sims)) / max_n
    return score


# ---------------------------------------------------------------------------
# ROUGE-L


def lcs_length(a, b) -> int:
    """Longest common subsequence length by the standard DP table."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def _rouge_single(candidate, reference, beta: float) -> float:
    lcs = lcs_length(reference, candidate)
    if lcs == 0:
        return 0.0
    recall = lcs / len(reference)
    precision = lcs / len(candidate)
    b2 = beta * beta
    return ((1.0 + b2) * recall * precision) / (recall + b2 * precision)


def rouge_l(candidate, reference, beta: float = 1.2) -> float:
    """LCS F-measure; a list of references scores as the maximum F."""
    references = reference if reference and isinstance(reference[0], (list, tuple)) else [reference]
    if not references or any(len(r) == 0 for r in references):
        raise DataError("ROUGE-L needs a nonempty reference")
    if not candidate:
        return 0.0
    return max(_rouge_single(candidate, ref, beta) for ref in references)


# ---------------------------------------------------------------------------
# METEOR


def _max_matches(candidate, reference) -> int:
    cand = Counter(candidate)
    ref = Counter(reference)
    return sum(min(count, ref[tok]) for tok, count in cand.items())


def _greedy_alignment(candidate, reference):
    """Fallback alignment: maximum matches, chunks not guaranteed minimal.

    Per token type the earliest candidate occurrences pair with the
    reference occurrences in order, which keeps each type monotone.
    """
    cand_positions: dict = {}
    for i, tok in enumerate(candidate):
        cand_positions.setdefault(tok, []).append(i)
    ref_positions: dict = {}
    for j, tok in enumerate(reference):
        ref_positions.setdefault(tok, []).append(j)
    mapping = {}
    for tok, cands in cand_positions.items():
        refs = ref_positions.get(tok, [])
        for i, j in zip(cands, refs):
            mapping[i] = j
    return mapping


def _chunk_count(mapping: dict) -> int:
    chunks = 0
    prev = None
    for i in sorted(mapping):
        if prev is None or prev != (i - 1, mapping[i] - 1):
            chunks += 1
        prev = (i, mapping[i])
    return chunks


def _min_chunk_alignment(candidate, reference, node_cap: int = 200_000):
    """(matches, chunks) with matches maximal and chunks minimal.

    Exact branch-and-bound over per-position assignments; inputs with
    pathological repetition that exceed the node budget fall back to the
    greedy alignment (matches still maximal).
    """
    target = _max_matches(candidate, reference)
    if target == 0:
        return 0, 0
    slots = [
        [j for j, tok in enumerate(reference) if tok == c] for c in candidate
    ]
    remaining_max = [0] * (len(candidate) + 1)
    for idx in range(len(candidate) - 1, -1, -1):
        remaining_max[idx] = remaining_max[idx + 1] + (1 if slots[idx] else 0)

    best_chunks = None
    nodes = 0

    def extend(idx, matched, chunks, last_pair, used):
        nonlocal best_chunks, nodes
        nodes += 1
        if nodes > node_cap:
            return False
        if matched + remaining_max[idx] < target:
            return True  # cannot reach a maximum matching down this branch
        if best_chunks is not None and chunks >= best_chunks:
            return True  # chunk count only grows from here
        if idx == len(candidate):
            if matched == target:
                best_chunks = chunks if best_chunks is None else min(best_chunks, chunks)
            return True
        # Try continuing the current chunk first so good bounds arrive early.
        ordered = slots[idx]
        if last_pair is not None:
            cont = last_pair[1] + 1 if last_pair[0] == idx - 1 else None
            if cont is not None and cont in ordered:
                ordered = [cont] + [j for j in ordered if j != cont]
        for j in ordered:
            if j in used:
                continue
            extra = 0 if (last_pair is not None and last_pair == (idx - 1, j - 1)) else 1
            used.add(j)
            ok = extend(idx + 1, matched + 1, chunks + extra, (idx, j), used)
            used.remove(j)
            if not ok:
                return False
        return extend(idx + 1, matched, chunks, last_pair, used)

    completed = extend(0, 0, 0, None, set())
    if completed and best_chunks is not None:
        return target, best_chunks
    # Budget exceeded: the greedy alignment also reaches the maximum match
    # count, so take the better chunk count of it and any partial result.
    greedy_chunks = _chunk_count(_greedy_alignment(candidate, reference))
    if best_chunks is not None:
        greedy_chunks = min(greedy_chunks, best_chunks)
    return target, greedy_chunks


def meteor(candidate, reference) -> float:
    """Harmonic-mean unigram score with the fragmentation penalty."""
    if not candidate or not reference:
        return 0.0
    matches, chunks = _min_chunk_alignment(candidate, reference)
    if matches == 0:
        return 0.0
    precision = matches / len(candidate)
    recall = matches / len(reference)
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1.0 - penalty)


# ---------------------------------------------------------------------------
# Corpus report


@dataclass(frozen=True)
class MetricReport:
    bleu_1: float
    bleu_2: float
    bleu_3: float
    bleu_4: float
    bleu_avg: float
    cider: float
    rouge_l: float
    meteor: float
    corpus_size: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "bleu_1": self.bleu_1, "bleu_2": self.bleu_2,
                "bleu_3": self.bleu_3, "bleu_4": self.bleu_4,
                "bleu_avg": self.bleu_avg, "cider": self.cider,
                "rouge_l": self.rouge_l, "meteor": self.meteor,
                "corpus_size": self.corpus_size,
            },
            sort_keys=True,
        )


def corpus_report(pairs, corpus_refs=None, rouge_beta: float = 1.2,
                  bleu_smoothing_eps: float = 0.0) -> MetricReport:
    """Aggregate all metrics over (candidate, references) pairs.

    BLEU-n is corpus-level; CIDEr, ROUGE-L, and METEOR are averaged per
    item (METEOR and ROUGE-L take the best reference per item). The CIDEr
    document frequencies come from corpus_refs, defaulting to the pairs'
    own reference sets.
    """
    pairs = list(pairs)
    if not pairs:
        raise DataError("cannot build a report from zero pairs")
    if corpus_refs is None:
        corpus_refs = [references for _, references in pairs]
    bleus = [
        corpus_bleu(pairs, max_n=n, smoothing_eps=bleu_smoothing_eps)
        for n in range(1, 5)
    ]
    cider_mean = sum(
        cider(candidate, references, corpus_refs) for candidate, references in pairs
    ) / len(pairs)
    rouge_mean = sum(
        rouge_l(candidate, references, beta=rouge_beta) for candidate, references in pairs
    ) / len(pairs)
    meteor_mean = sum(
        max(meteor(candidate, ref) for ref in references)
        for candidate, references in pairs
    ) / len(pairs)
    return MetricReport(
        bleu_1=bleus[0], bleu_2=bleus[1], bleu_3=bleus[2], bleu_4=bleus[3],
        bleu_avg=sum(bleus) / 4.0, cider=cider_mean,
        rouge_l=rouge_mean, meteor=meteor_mean, corpus_size=len(pairs),
    )
