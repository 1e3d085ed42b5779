#!/usr/bin/env python3
"""Independent reference implementation that produces the golden per-query
metric files in golden/ from fixture.run + fixture.qrels.

Shared conventions (must stay in sync with the library's documented ones):
- The query universe is the qrels query set; judged queries missing from the
  run score 0, run queries without judgments are ignored.
- Rankings sort by score descending, doc id ascending on ties; the rank
  column in the run file is ignored.
- nDCG: gain 2^grade - 1, discount 1/log2(rank + 1), ideal ranking from all
  judged docs of the query; IDCG == 0 scores 0.
- nDCG*: the retrieved list is condensed to judged docs (ranks close up)
  whenever the qrels contain at least one grade-0 judgment anywhere.
- MRR@k / Success@k count grade >= 1 as relevant.

Run from this directory: python3 make_golden.py
"""

import math
import os
from collections import defaultdict

HERE = os.path.dirname(os.path.abspath(__file__))


def read_run(path):
    rankings = defaultdict(list)
    with open(path, encoding="utf-8") as f:
        for line in f:
            cols = line.split()
            if not cols:
                continue
            rankings[cols[0]].append((cols[2], float(cols[4])))
    return {
        q: sorted(docs, key=lambda pair: (-pair[1], pair[0]))
        for q, docs in rankings.items()
    }


def read_qrels(path):
    judgments = defaultdict(dict)
    with open(path, encoding="utf-8") as f:
        for line in f:
            cols = line.split()
            if not cols:
                continue
            judgments[cols[0]][cols[2]] = int(cols[3])
    return dict(judgments)


def dcg(grades, k):
    return sum(
        (2.0**g - 1.0) / math.log2(i + 2) for i, g in enumerate(grades[:k])
    )


def ndcg(ranking, judged, k, condense):
    idcg = dcg(sorted(judged.values(), reverse=True), k)
    if idcg == 0.0:
        return 0.0
    if condense:
        grades = [judged[d] for d, _ in ranking if d in judged]
    else:
        grades = [judged.get(d, 0) for d, _ in ranking]
    return dcg(grades, k) / idcg


def mrr(ranking, judged, k):
    for i, (d, _) in enumerate(ranking[:k]):
        if judged.get(d, 0) >= 1:
            return 1.0 / (i + 1)
    return 0.0


def success(ranking, judged, k):
    return 1.0 if any(judged.get(d, 0) >= 1 for d, _ in ranking[:k]) else 0.0


def main():
    run = read_run(os.path.join(HERE, "fixture.run"))
    qrels = read_qrels(os.path.join(HERE, "fixture.qrels"))
    condense = any(g == 0 for docs in qrels.values() for g in docs.values())

    metrics = {
        "ndcg_at_10": lambda r, j: ndcg(r, j, 10, condense=False),
        "ndcg_star_at_10": lambda r, j: ndcg(r, j, 10, condense=condense),
        "mrr_at_10": lambda r, j: mrr(r, j, 10),
        "success_at_5": lambda r, j: success(r, j, 5),
    }

    out_dir = os.path.join(HERE, "golden")
    os.makedirs(out_dir, exist_ok=True)
    for name, score in metrics.items():
        path = os.path.join(out_dir, f"{name}.tsv")
        with open(path, "w", encoding="utf-8") as f:
            for q in sorted(qrels):
                value = score(run.get(q, []), qrels[q])
                f.write(f"{q}\t{value!r}\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
