def histogram(values, width=20):
    top = max(values)
    rows = []
    for i, v in enumerate(values):
        bar = "#" * max(1, round(v / top * width))
        rows.append(str(i).rjust(2) + " " + bar)
    return rows


samples = [3, 7, 1, 12, 8, 5]
for row in histogram(samples):
    print(row)
