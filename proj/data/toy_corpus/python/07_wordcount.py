import re

TEXT = """the quick brown fox jumps over the lazy dog
the dog barks and the fox runs"""


def word_counts(text):
    counts = {}
    for word in re.findall(r"[a-z]+", text.lower()):
        counts[word] = counts.get(word, 0) + 1
    return counts


for word, n in sorted(word_counts(TEXT).items(), key=lambda kv: -kv[1])[:4]:
    print(word, n)
