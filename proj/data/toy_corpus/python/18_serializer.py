def to_literal(value, indent=0):
    pad = "  " * indent
    if isinstance(value, dict):
        lines = [pad + repr(k) + ":" for k in sorted(value)]
        body = [to_literal(value[k], indent + 1) for k in sorted(value)]
        return "\n".join(x for pair in zip(lines, body) for x in pair)
    return pad + repr(value)


record = {"name": "probe", "axes": {"x": 1, "y": -2}, "live": True}
print(to_literal(record))
