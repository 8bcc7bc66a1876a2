DEFAULTS = {"host": "localhost", "port": 8080, "debug": False}


def parse_overrides(pairs):
    result = {}
    for pair in pairs:
        key, _, raw = pair.partition("=")
        if raw.isdigit():
            result[key] = int(raw)
        elif raw in ("true", "false"):
            result[key] = raw == "true"
        else:
            result[key] = raw
    return result


def resolve(overrides):
    merged = dict(DEFAULTS)
    merged.update(parse_overrides(overrides))
    return merged


print(resolve(["port=9000", "debug=true"]))
