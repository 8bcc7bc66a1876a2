class Stack {
  constructor() {
    this.items = [];
  }

  push(value) {
    this.items.push(value);
  }

  pop() {
    if (this.items.length === 0) {
      throw new Error("empty stack");
    }
    return this.items.pop();
  }
}

const s = new Stack();
[2, 4, 6, 8].forEach((n) => s.push(n));
while (s.items.length > 0) {
  console.log(s.pop());
}
