def gcd(a, b):
    while b:
        a, b = b, a % b
    return a


def lcm(a, b):
    return a * b // gcd(a, b)


pairs = [(12, 18), (7, 13), (48, 36)]
for x, y in pairs:
    print(x, y, gcd(x, y), lcm(x, y))
