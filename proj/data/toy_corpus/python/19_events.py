class EventBus:
    def __init__(self):
        self.handlers = {}

    def on(self, name, handler):
        self.handlers.setdefault(name, []).append(handler)

    def emit(self, name, payload):
        for handler in self.handlers.get(name, []):
            handler(payload)


bus = EventBus()
log = []
bus.on("tick", log.append)
bus.on("tick", lambda n: log.append(n * 10))
for t in range(3):
    bus.emit("tick", t)
print(log)
