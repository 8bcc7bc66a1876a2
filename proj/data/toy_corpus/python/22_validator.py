RULES = {
    "name": lambda v: isinstance(v, str) and len(v) > 0,
    "age": lambda v: isinstance(v, int) and 0 <= v < 150,
    "email": lambda v: isinstance(v, str) and "@" in v,
}


def validate(record):
    errors = []
    for key, rule in RULES.items():
        if key not in record:
            errors.append(key + ": missing")
        elif not rule(record[key]):
            errors.append(key + ": invalid")
    return errors


good = {"name": "kim", "age": 31, "email": "kim@example.org"}
bad = {"name": "", "age": 200}
print(validate(good))
print(validate(bad))
