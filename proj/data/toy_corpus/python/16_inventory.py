from dataclasses import dataclass, field


@dataclass
class Item:
    name: str
    count: int = 0
    tags: list = field(default_factory=list)


def restock(items, name, amount):
    for item in items:
        if item.name == name:
            item.count += amount
            return item
    fresh = Item(name, amount)
    items.append(fresh)
    return fresh


stock = [Item("bolt", 12), Item("nut", 30)]
restock(stock, "bolt", 8)
restock(stock, "washer", 5)
for item in stock:
    print(item.name, item.count)
