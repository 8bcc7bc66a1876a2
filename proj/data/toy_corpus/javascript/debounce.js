function debounce(fn, delayMs) {
  let timer = null;
  return function debounced(...args) {
    if (timer !== null) {
      clearTimeout(timer);
    }
    timer = setTimeout(() => {
      timer = null;
      fn(...args);
    }, delayMs);
  };
}

const log = [];
const record = debounce((msg) => log.push(msg), 50);
record("first");
record("second");
setTimeout(() => console.log(log), 120);
