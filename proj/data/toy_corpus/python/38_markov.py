def build_chain(words):
    chain = {}
    for prev, nxt in zip(words, words[1:]):
        chain.setdefault(prev, []).append(nxt)
    return chain


def generate(chain, start, length):
    out = [start]
    current = start
    for _ in range(length):
        options = chain.get(current)
        if not options:
            break
        current = options[len(out) % len(options)]
        out.append(current)
    return out


corpus = "one fish two fish red fish blue fish".split()
chain = build_chain(corpus)
print(" ".join(generate(chain, "one", 6)))
