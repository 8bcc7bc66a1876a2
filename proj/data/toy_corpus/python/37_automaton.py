def step(cells, rule=110):
    width = len(cells)
    nxt = []
    for i in range(width):
        left = cells[(i - 1) % width]
        mid = cells[i]
        right = cells[(i + 1) % width]
        index = left * 4 + mid * 2 + right
        nxt.append((rule >> index) & 1)
    return nxt


row = [0] * 15 + [1] + [0] * 15
for _ in range(6):
    print("".join(".#"[c] for c in row))
    row = step(row)
