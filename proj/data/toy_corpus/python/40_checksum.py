def crc_ish(data):
    value = 0xFFFF
    for byte in data:
        value ^= byte
        for _ in range(8):
            if value & 1:
                value = (value >> 1) ^ 0xA001
            else:
                value >>= 1
    return value


def verify(payload, expected):
    return crc_ish(payload) == expected


message = b"adapter fusion"
digest = crc_ish(message)
print(hex(digest), verify(message, digest))
