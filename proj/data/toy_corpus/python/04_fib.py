def fib(n):
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def fib_memo(n, seen={0: 0, 1: 1}):
    if n not in seen:
        seen[n] = fib_memo(n - 1) + fib_memo(n - 2)
    return seen[n]


assert fib(10) == fib_memo(10) == 55
print([fib(i) for i in range(8)])
