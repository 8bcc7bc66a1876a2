class ListNode:
    def __init__(self, value, tail=None):
        self.value = value
        self.tail = tail


def from_iterable(items):
    head = None
    for value in reversed(list(items)):
        head = ListNode(value, head)
    return head


def reverse(node):
    prev = None
    while node is not None:
        node.tail, prev, node = prev, node, node.tail
    return prev


head = reverse(from_iterable(range(5)))
while head:
    print(head.value)
    head = head.tail
