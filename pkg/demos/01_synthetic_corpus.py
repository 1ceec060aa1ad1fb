"""Generate a labeled synthetic corpus and inspect what the catalog keeps.

Every demo in this directory is standalone: run it from the repository root
with `python3 demos/01_synthetic_corpus.py`.
"""

from cartomap.corpus import build_catalog, synth_corpus

records, truth = synth_corpus(
    n_topics=3, docs_per_topic=5, topic_vocab=30, shared_vocab=20, seed=0
)

print(f"{len(records)} documents, ground-truth topics {sorted(set(truth))}")
print()
r = records[0]
print("first record:")
print(f"  doc_id   {r.doc_id}")
print(f"  title    {r.title}")
print(f"  abstract {r.abstract[:72]}...")
print(f"  authors  {r.authors}")
print(f"  labs     {r.labs}")
print(f"  year     {r.pub_year}  views/yr {r.views_per_year:.1f}")
print()

# the catalog drops authors below the min_docs floor and dedups labs
catalog = build_catalog(records, min_docs=2)
print("catalog:")
print(f"  {catalog.T} articles")
print(f"  {catalog.L_auth} authors kept at min_docs=2")
print(f"  labs: {catalog.lab_labels}")
