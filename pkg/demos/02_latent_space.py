"""Text to latent vectors: tf-idf, randomized factorization, term geometry.

Shows that words generated by the same topic land near each other in the
latent space while the shared filler vocabulary stays diffuse.
"""

import numpy as np

from cartomap.corpus import synth_corpus
from cartomap.embed import embed_articles, embed_terms, fit_lsa, orthonormality_defect
from cartomap.vectorize import build_vocab, ngram_docs, tfidf_matrix

records, truth = synth_corpus(3, 40, 30, 20, seed=1)
docs = ngram_docs(r.text() for r in records)
vocab = build_vocab(docs, m_min=5)
M = tfidf_matrix(docs, vocab)
print(f"tf-idf matrix: {M.shape[0]} docs x {M.shape[1]} terms, {M.nnz} nonzeros")

model = fit_lsa(M, d=16, seed=0)
print(f"latent d={model.d}, top singular values {np.round(model.singular_values[:4], 2)}")
print(f"component orthonormality defect {orthonormality_defect(model):.2e}")

articles = embed_articles(model, M)
words = embed_terms(model)

# cosine neighbors of one topic-0 word: expect topic-0 vocabulary
probe = vocab.terms.index("t0w0")
W = words.matrix / np.linalg.norm(words.matrix, axis=1, keepdims=True)
sims = W @ W[probe]
top = np.argsort(-sims)[1:9]
print(f"\nnearest terms to 't0w0': {[vocab.terms[i] for i in top]}")

# per-topic article centroids are mutually distant
A = articles.matrix / np.linalg.norm(articles.matrix, axis=1, keepdims=True)
cents = np.stack([A[np.array(truth) == t].mean(axis=0) for t in range(3)])
print("\ntopic centroid cosine matrix:")
print(np.round(cents @ cents.T, 2))
