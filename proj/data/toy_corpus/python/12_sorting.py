def insertion_sort(values):
    out = list(values)
    for i in range(1, len(out)):
        key = out[i]
        j = i - 1
        while j >= 0 and out[j] > key:
            out[j + 1] = out[j]
            j -= 1
        out[j + 1] = key
    return out


def merge(left, right):
    result = []
    while left and right:
        result.append(left.pop(0) if left[0] <= right[0] else right.pop(0))
    return result + left + right


sample = [5, 2, 9, 1, 7, 3]
assert insertion_sort(sample) == sorted(sample)
print(merge([1, 4, 9], [2, 3, 8]))
