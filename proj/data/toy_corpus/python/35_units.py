CONVERSIONS = {
    ("km", "mi"): 0.621371,
    ("kg", "lb"): 2.20462,
    ("l", "gal"): 0.264172,
}


def convert(value, src, dst):
    if (src, dst) in CONVERSIONS:
        return value * CONVERSIONS[(src, dst)]
    if (dst, src) in CONVERSIONS:
        return value / CONVERSIONS[(dst, src)]
    raise KeyError(src + "->" + dst)


print(round(convert(5, "km", "mi"), 4))
print(round(convert(10, "lb", "kg"), 4))
