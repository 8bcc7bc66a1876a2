def flatten(nested):
    for item in nested:
        if isinstance(item, (list, tuple)):
            yield from flatten(item)
        else:
            yield item


tree = [1, [2, [3, 4]], (5, [6])]
flat = list(flatten(tree))
print(flat, sum(flat))
