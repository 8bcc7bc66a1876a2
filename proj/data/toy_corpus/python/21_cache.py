class LruCache:
    def __init__(self, capacity):
        self.capacity = capacity
        self.order = []
        self.table = {}

    def get(self, key):
        if key not in self.table:
            return None
        self.order.remove(key)
        self.order.append(key)
        return self.table[key]

    def put(self, key, value):
        if key in self.table:
            self.order.remove(key)
        elif len(self.order) >= self.capacity:
            oldest = self.order.pop(0)
            del self.table[oldest]
        self.order.append(key)
        self.table[key] = value


cache = LruCache(2)
cache.put("a", 1)
cache.put("b", 2)
cache.get("a")
cache.put("c", 3)
print(sorted(cache.table))
