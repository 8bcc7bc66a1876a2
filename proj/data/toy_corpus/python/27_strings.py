def snake_to_camel(name):
    head, *rest = name.split("_")
    return head + "".join(part.title() for part in rest)


def is_palindrome(text):
    clean = [c.lower() for c in text if c.isalnum()]
    return clean == clean[::-1]


print(snake_to_camel("max_token_length"))
print(is_palindrome("A man, a plan, a canal: Panama"))
print(is_palindrome("not this one"))
