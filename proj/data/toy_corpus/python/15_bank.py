class InsufficientFunds(Exception):
    pass


class Account:
    def __init__(self, owner, balance=0):
        self.owner = owner
        self.balance = balance

    def deposit(self, amount):
        if amount <= 0:
            raise ValueError("deposit must be positive")
        self.balance += amount

    def withdraw(self, amount):
        if amount > self.balance:
            raise InsufficientFunds(self.owner)
        self.balance -= amount


acct = Account("ada", 100)
acct.deposit(50)
try:
    acct.withdraw(500)
except InsufficientFunds as exc:
    print("blocked for", exc)
print(acct.balance)
