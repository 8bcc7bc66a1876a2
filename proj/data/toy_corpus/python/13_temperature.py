def celsius_to_fahrenheit(c):
    return c * 9 / 5 + 32


def fahrenheit_to_celsius(f):
    return (f - 32) * 5 / 9


readings = {"dawn": 11.5, "noon": 24.0, "dusk": 17.25}
for label, c in readings.items():
    f = celsius_to_fahrenheit(c)
    back = fahrenheit_to_celsius(f)
    assert abs(back - c) < 1e-9
    print(label, round(f, 2))
