"""SMILES tokenization and vocabulary management.

Tokenization is atom-level, following the de-facto standard regex of
Schwaller et al. (ACS Cent. Sci. 2019): bracket atoms ``[...]`` are single
tokens, the two-character halogens Cl and Br stay intact, and ring-closure
digits, ``%nn`` ring labels, bond symbols, branch parentheses and stereo
markers are one token each.  Concatenating the tokens always reproduces the
input string exactly.

Encoded sequences are wrapped in ``<bos>``/``<eos>`` and hard-capped at
:data:`MAX_SEQ_LEN` ids; over-length molecules are truncated from the right
and flagged rather than rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

PAD, BOS, EOS, UNK, MASK, SEP = "<pad>", "<bos>", "<eos>", "<unk>", "<mask>", "<sep>"
SPECIAL_TOKENS: tuple[str, ...] = (PAD, BOS, EOS, UNK, MASK, SEP)
PAD_ID, BOS_ID, EOS_ID, UNK_ID, MASK_ID, SEP_ID = range(6)

#: Hard cap on encoded sequence length, bos/eos included.
MAX_SEQ_LEN = 202

SMILES_TOKEN_PATTERN = re.compile(
    r"\[[^\]]+\]|Br?|Cl?|N|O|S|P|F|I|b|c|n|o|s|p"
    r"|\(|\)|\.|=|#|-|\+|\\|/|:|~|@|\?|>|\*|\$|%[0-9]{2}|[0-9]"
)


class TokenizeError(ValueError):
    """A character in the SMILES string cannot start any known token."""

    def __init__(self, smiles: str, offset: int):
        self.smiles = smiles
        self.offset = offset
        super().__init__(
            f"cannot tokenize SMILES at offset {offset}: "
            f"{smiles[offset:offset + 8]!r} (in {smiles!r})"
        )


def tokenize(smiles: str) -> list[str]:
    """Split a SMILES string into atom-level tokens.

    Raises :class:`TokenizeError` naming the offset of the first character
    that no token rule matches.  The invariant ``"".join(tokenize(s)) == s``
    holds for every string this function accepts.
    """
    if not smiles:
        raise ValueError("cannot tokenize an empty SMILES string")
    tokens: list[str] = []
    pos = 0
    while pos < len(smiles):
        match = SMILES_TOKEN_PATTERN.match(smiles, pos)
        if match is None:
            raise TokenizeError(smiles, pos)
        tokens.append(match.group())
        pos = match.end()
    return tokens


def detokenize(tokens) -> str:
    """Inverse of :func:`tokenize`: plain concatenation."""
    return "".join(tokens)


class Vocabulary:
    """Dense token-to-id table whose first six ids are the special tokens.

    ``<pad>`` is pinned to id 0 so masked pooling and batch packing stay
    unambiguous.  Chemical tokens can never collide with the specials: the
    tokenizer only emits bracket atoms, one- or two-character symbols, and
    ``%nn`` labels, none of which contain angle brackets.
    """

    def __init__(self, tokens):
        tokens = tuple(tokens)
        if tokens[:6] != SPECIAL_TOKENS:
            raise ValueError(
                f"vocabulary must start with the special tokens {SPECIAL_TOKENS}"
            )
        if len(set(tokens)) != len(tokens):
            seen, dup = set(), None
            for t in tokens:
                if t in seen:
                    dup = t
                    break
                seen.add(t)
            raise ValueError(f"duplicate token in vocabulary: {dup!r}")
        self.tokens = tokens
        self._ids = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id_for(self, token: str) -> int:
        """Id of ``token``, or ``UNK_ID`` when it is out of vocabulary."""
        return self._ids.get(token, UNK_ID)


@dataclass(frozen=True)
class TokenSequence:
    """Encoded token ids for one molecule, bos/eos included.

    ``truncated`` is set when the 202-id cap forced chemical tokens to be
    dropped from the right; ``unknown_count`` counts emitted ``<unk>`` ids.
    """

    ids: tuple[int, ...]
    truncated: bool = False
    unknown_count: int = 0

    def __len__(self) -> int:
        return len(self.ids)


def encode(tokens, vocab: Vocabulary) -> TokenSequence:
    """Map token texts to ``[bos] + ids + [eos]``, capped at 202 ids.

    Unknown tokens map to ``<unk>`` and over-length sequences are truncated
    from the right; both conditions are flagged on the result, never fatal.
    """
    tokens = list(tokens)
    if not tokens:
        raise ValueError("cannot encode an empty token list")
    body = [vocab.id_for(t) for t in tokens]
    truncated = False
    if len(body) + 2 > MAX_SEQ_LEN:
        body = body[: MAX_SEQ_LEN - 2]
        truncated = True
    return TokenSequence(
        ids=(BOS_ID, *body, EOS_ID),
        truncated=truncated,
        unknown_count=sum(1 for i in body if i == UNK_ID),
    )


def build_vocab(corpus) -> Vocabulary:
    """Vocabulary of all distinct tokens in ``corpus``, sorted after specials.

    Deterministic: identical corpora produce byte-identical vocabularies.
    Untokenizable entries propagate with their corpus index.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    seen: set[str] = set()
    for index, smiles in enumerate(corpus):
        try:
            seen.update(tokenize(smiles))
        except ValueError as exc:
            raise ValueError(f"corpus entry {index}: {exc}") from exc
    return Vocabulary(SPECIAL_TOKENS + tuple(sorted(seen)))


def save_vocab(vocab: Vocabulary, path) -> None:
    """Write one token per line; the line number is the token id."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for token in vocab.tokens:
            fh.write(token + "\n")


def load_vocab(path) -> Vocabulary:
    """Inverse of :func:`save_vocab`; validates specials and duplicates."""
    with open(path, encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    while tokens and tokens[-1] == "":
        tokens.pop()
    if tuple(tokens[:6]) != SPECIAL_TOKENS:
        raise ValueError(
            f"{path}: missing specials header; the first six lines must be "
            + ",".join(SPECIAL_TOKENS)
        )
    return Vocabulary(tokens)
