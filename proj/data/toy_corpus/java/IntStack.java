import java.util.ArrayList;
import java.util.List;

public class IntStack {
    private final List<Integer> items = new ArrayList<>();

    public void push(int v) {
        items.add(v);
    }

    public int pop() {
        if (items.isEmpty()) {
            throw new IllegalStateException("empty stack");
        }
        return items.remove(items.size() - 1);
    }

    public boolean isEmpty() {
        return items.isEmpty();
    }

    public static void main(String[] args) {
        IntStack s = new IntStack();
        for (int i = 1; i <= 5; i++) {
            s.push(i * 3);
        }
        while (!s.isEmpty()) {
            System.out.println(s.pop());
        }
    }
}
