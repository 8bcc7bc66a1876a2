function fib(n) {
  let a = 0;
  let b = 1;
  for (let i = 0; i < n; i += 1) {
    [a, b] = [b, a + b];
  }
  return a;
}

const table = Array.from({ length: 10 }, (_, i) => fib(i));
console.log(table.join(", "));
