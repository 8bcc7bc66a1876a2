class TodoList:
    def __init__(self):
        self.tasks = []

    def add(self, title, priority=1):
        self.tasks.append({"title": title, "priority": priority, "done": False})

    def complete(self, title):
        for task in self.tasks:
            if task["title"] == title:
                task["done"] = True
                return True
        return False

    def pending(self):
        active = [t for t in self.tasks if not t["done"]]
        return sorted(active, key=lambda t: -t["priority"])


todo = TodoList()
todo.add("write tests", 3)
todo.add("water plants")
todo.complete("water plants")
for task in todo.pending():
    print(task["title"])
