"""
SMILES tokenization and vocabularies
====================================

Molecules enter the pipeline as SMILES strings, split into atom-level
tokens: bracket atoms stay whole, Cl/Br stay whole, and everything else
(ring digits, bonds, branches, stereo marks) is one token.  Joining the
tokens always reproduces the input, so tokenization is lossless.
"""

from elyte.tokenizer import (
    MAX_SEQ_LEN,
    build_vocab,
    detokenize,
    encode,
    tokenize,
)

examples = [
    "CCO",                                      # ethanol
    "ClCCl",                                    # dichloromethane
    "[Li+]",                                    # a bare lithium cation
    "FC(F)(F)S(=O)(=O)[N-]S(=O)(=O)C(F)(F)F",   # a fluorosulfonyl imide anion
    "c1ccccc1",                                 # benzene, aromatic form
]
for smiles in examples:
    tokens = tokenize(smiles)
    assert detokenize(tokens) == smiles
    print(f"{smiles:<42} {len(tokens):>3} tokens: {tokens[:8]}{'...' if len(tokens) > 8 else ''}")
print()

# A vocabulary maps tokens to dense ids; ids 0..5 are reserved specials
# (<pad> is always 0).  Building it from a corpus is deterministic.
vocab = build_vocab([s for s in examples])
print(f"vocabulary size {len(vocab)}; first ten tokens: {vocab.tokens[:10]}")

# Encoding wraps ids in <bos>/<eos>, maps unknown tokens to <unk>, and
# truncates anything beyond 202 ids (flagged, not fatal).
seq = encode(tokenize("CCO"), vocab)
print(f"encode('CCO') -> ids {seq.ids}, truncated={seq.truncated}")

monster = encode(["C"] * 500, vocab)
print(f"500-token molecule -> length {len(monster)} (cap {MAX_SEQ_LEN}), truncated={monster.truncated}")

unknown = encode(["C", "≡"], vocab)  # not a real SMILES token
print(f"unknown token -> unknown_count {unknown.unknown_count}")
