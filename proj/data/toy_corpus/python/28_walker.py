def lcg(seed):
    state = seed
    while True:
        state = (state * 1103515245 + 12345) % (1 << 31)
        yield state


def random_walk(steps, seed=7):
    position = 0
    trace = [0]
    gen = lcg(seed)
    for _ in range(steps):
        position += 1 if next(gen) % 2 else -1
        trace.append(position)
    return trace


walk = random_walk(10)
print(walk, max(walk), min(walk))
