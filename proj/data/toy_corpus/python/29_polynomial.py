class Polynomial:
    def __init__(self, coeffs):
        self.coeffs = list(coeffs)

    def __call__(self, x):
        result = 0
        for c in reversed(self.coeffs):
            result = result * x + c
        return result

    def derivative(self):
        return Polynomial([i * c for i, c in enumerate(self.coeffs)][1:])


p = Polynomial([1, -3, 2])
dp = p.derivative()
for x in (0, 1, 2, 3):
    print(x, p(x), dp(x))
