import java.util.HashMap;
import java.util.Map;

public class Counter {
    private final Map<String, Integer> counts = new HashMap<>();

    public void add(String key) {
        counts.merge(key, 1, Integer::sum);
    }

    public int get(String key) {
        return counts.getOrDefault(key, 0);
    }

    public static void main(String[] args) {
        Counter c = new Counter();
        for (String word : new String[] {"ant", "bee", "ant", "cat", "ant"}) {
            c.add(word);
        }
        System.out.println(c.get("ant") + " " + c.get("bee") + " " + c.get("dog"));
    }
}
