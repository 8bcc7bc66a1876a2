function* range(start, stop, step = 1) {
  for (let v = start; v < stop; v += step) {
    yield v;
  }
}

const squares = [];
for (const n of range(1, 8)) {
  squares.push(n * n);
}
console.log(squares.filter((v) => v % 2 === 1));
