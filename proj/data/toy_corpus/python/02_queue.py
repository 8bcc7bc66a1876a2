from collections import deque


class RingQueue:
    def __init__(self, capacity):
        self.capacity = capacity
        self.buf = deque()

    def put(self, item):
        if len(self.buf) >= self.capacity:
            self.buf.popleft()
        self.buf.append(item)

    def drain(self):
        while self.buf:
            yield self.buf.popleft()


q = RingQueue(3)
for word in ["red", "green", "blue", "cyan"]:
    q.put(word)
print(list(q.drain()))
