"""Multi-level landmarks: k-means over 2D positions, names from term contrast.

Builds a small scene by hand (three article blobs, each with its own
vocabulary plus common filler words) and shows how the coarse level names
merge regions while the fine level splits them.
"""

import numpy as np

from cartomap.landmarks import build_levels

rng = np.random.default_rng(3)
topics = [
    ("plasma", ["plasma", "tokamak", "confinement"]),
    ("genome", ["genome", "sequencing", "variant"]),
    ("lexicon", ["lexicon", "parser", "corpus"]),
]
filler = ["study", "method"]
terms = [w for _, ws in topics for w in ws] + filler
tid = {w: i for i, w in enumerate(terms)}

blob_at = np.array([[0.2, 0.2], [0.8, 0.25], [0.5, 0.8]])
article_coords, doc_terms = [], []
for t, (_, ws) in enumerate(topics):
    for _ in range(40):
        article_coords.append(blob_at[t] + rng.normal(0, 0.05, 2))
        picks = rng.choice(len(ws), size=2, replace=False)
        doc_terms.append({tid[ws[p]] for p in picks} | {tid[rng.choice(filler)]})
article_coords = np.clip(np.array(article_coords), 0, 1)

# words sit near the blob that uses them, filler in the middle
word_coords = np.array(
    [blob_at[t] for t, (_, ws) in enumerate(topics) for _ in ws]
    + [[0.5, 0.4]] * len(filler)
) + rng.normal(0, 0.02, (len(terms), 2))

df = np.array([sum(tid[w] in d for d in doc_terms) for w in terms])
levels = build_levels(article_coords, word_coords, doc_terms, df, terms, ks=(2, 3), seed=0)

for lvl in levels:
    print(f"level {lvl.level} (k={lvl.k}):")
    for c in range(lvl.k):
        size = int((lvl.article_assignment == c).sum())
        name = " / ".join(lvl.names[c])
        print(f"  cluster {c}: {size:3d} articles  name='{name}'  coverage={lvl.coverage[c]:.2f}")
