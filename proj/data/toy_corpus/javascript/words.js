function wordCounts(text) {
  const counts = new Map();
  for (const word of text.toLowerCase().split(/\s+/)) {
    if (word.length === 0) continue;
    counts.set(word, (counts.get(word) || 0) + 1);
  }
  return counts;
}

const counts = wordCounts("to be or not to be");
for (const [word, n] of [...counts.entries()].sort()) {
  console.log(word, n);
}
