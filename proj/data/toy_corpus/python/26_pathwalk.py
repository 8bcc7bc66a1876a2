import os


def walk_tree(root, depth=0, limit=2):
    entries = []
    if depth > limit or not os.path.isdir(root):
        return entries
    for name in sorted(os.listdir(root)):
        full = os.path.join(root, name)
        entries.append((depth, name))
        entries.extend(walk_tree(full, depth + 1, limit))
    return entries


here = os.path.dirname(os.path.abspath(__file__)) or "."
for depth, name in walk_tree(here, limit=0)[:5]:
    print(" " * depth + name)
