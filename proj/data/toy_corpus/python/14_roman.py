NUMERALS = [
    (1000, "M"), (900, "CM"), (500, "D"), (400, "CD"),
    (100, "C"), (90, "XC"), (50, "L"), (40, "XL"),
    (10, "X"), (9, "IX"), (5, "V"), (4, "IV"), (1, "I"),
]


def to_roman(n):
    parts = []
    for value, glyph in NUMERALS:
        while n >= value:
            parts.append(glyph)
            n -= value
    return "".join(parts)


for year in (1066, 1453, 1789, 2024):
    print(year, to_roman(year))
