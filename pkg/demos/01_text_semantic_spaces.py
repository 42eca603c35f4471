"""Build class-level semantic spaces from a toy text corpus.

Walks the three text encoders end to end: raw term counts, averaged word
vectors, and Fisher-encoded word vectors over a shared mixture.
"""

import numpy as np

from zslkit import (
    build_vocabulary,
    encode_class_set,
    lookup_word_vectors,
    semantic_distance_matrix,
    term_document_matrix,
    tokenize,
)
from zslkit.encoders import WordVectorTable

# One description document per action class.
documents = {
    0: ("Apply the lipstick slowly. Press the lipstick against your lips "
        "and move it across both lips."),
    1: ("Play the piano with both hands. Press the piano keys while reading "
        "the music."),
    2: ("Skiing means sliding downhill on snow. Bend your knees and lean "
        "forward while skiing fast."),
}

stop = {"the", "and", "your", "it", "both", "while", "on", "with", "means"}

print("== tokenize ==")
docs = [tokenize(text, stop, class_id=cid) for cid, text in sorted(documents.items())]
for doc in docs:
    print(f"class {doc.class_id}: {doc.tokens[:8]} ... ({len(doc)} tokens)")

print("\n== term-document counts ==")
vocab = build_vocabulary(docs)
td = term_document_matrix(docs, vocab)
print(f"vocabulary size d = {vocab.size}, documents C = {td.n_docs}")
top = np.argsort(td.counts.sum(axis=1))[::-1][:5]
for i in top:
    print(f"  {vocab.terms[i]:10s} counts per class: {td.counts[i].tolist()}")

td_space = encode_class_set(td, "td")
print(f"TD space: {td_space.reps.shape}, metric={td_space.metric}")

# A tiny word-vector table standing in for a pre-trained embedding file.
rng = np.random.default_rng(0)
table = WordVectorTable({t: rng.normal(size=10) for t in vocab.terms}, dim=10)

print("\n== averaged word vectors ==")
bags = []
for doc in docs:
    bag, skipped = lookup_word_vectors(doc, table)
    bags.append(bag)
    print(f"class {doc.class_id}: bag of {bag.size} vectors, {skipped} tokens skipped")
awv_space = encode_class_set(bags, "average")
print(f"AWV space: {awv_space.reps.shape}, metric={awv_space.metric}")

print("\n== Fisher word vectors ==")
for k in (1, 2):
    fwv_space = encode_class_set(bags, "fisher", k=k, seed=0)
    print(f"K={k}: representation dimension {fwv_space.dim} (= 2*D*K), "
          f"metric={fwv_space.metric}")

print("\n== class distances under each encoding ==")
for name, space in (("TD", td_space), ("AWV", awv_space)):
    D = semantic_distance_matrix(space)
    print(f"{name}:\n{np.round(D, 3)}")
