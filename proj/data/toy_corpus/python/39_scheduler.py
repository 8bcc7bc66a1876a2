import heapq


class Scheduler:
    def __init__(self):
        self.queue = []
        self.counter = 0

    def schedule(self, when, action):
        heapq.heappush(self.queue, (when, self.counter, action))
        self.counter += 1

    def run_until(self, deadline):
        fired = []
        while self.queue and self.queue[0][0] <= deadline:
            when, _, action = heapq.heappop(self.queue)
            fired.append((when, action))
        return fired


sched = Scheduler()
sched.schedule(5, "flush")
sched.schedule(1, "poll")
sched.schedule(3, "sync")
print(sched.run_until(4))
