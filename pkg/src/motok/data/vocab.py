"""Word vocabulary with reserved special ids.

Saved as a text file with one word per line; the word on line ``i`` (0-based)
gets id ``i + len(SPECIALS)``.
"""

from pathlib import Path

import numpy as np

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")


class Vocabulary:
    def __init__(self, words=()):
        self.itos = list(SPECIALS)
        self.stoi = {w: i for i, w in enumerate(SPECIALS)}
        for w in words:
            self.add(w)

    def add(self, word):
        if word not in self.stoi:
            self.stoi[word] = len(self.itos)
            self.itos.append(word)
        return self.stoi[word]

    @classmethod
    def from_texts(cls, texts):
        words = sorted({w for t in texts for w in t.split()})
        return cls(words)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, word):
        return word in self.stoi

    def get(self, word, default=None):
        return self.stoi.get(word, default)

    def encode(self, text, unknown=None):
        """Frame ``text`` as BOS ... EOS ids. Unknown words map to UNK and are
        appended to the ``unknown`` list when one is passed."""
        ids = [BOS]
        for w in text.split():
            if w in self.stoi and self.stoi[w] >= len(SPECIALS):
                ids.append(self.stoi[w])
            else:
                ids.append(UNK)
                if unknown is not None:
                    unknown.append(w)
        ids.append(EOS)
        return np.array(ids, dtype=np.int64)

    def decode(self, ids):
        words = []
        for i in ids:
            i = int(i)
            if i in (PAD, BOS):
                continue
            if i == EOS:
                break
            words.append(self.itos[i])
        return " ".join(words)

    def save(self, path):
        Path(path).write_text("".join(w + "\n" for w in self.itos[len(SPECIALS):]), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls(line for line in Path(path).read_text(encoding="utf-8").splitlines() if line)
