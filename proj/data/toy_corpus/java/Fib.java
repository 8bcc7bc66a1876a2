public class Fib {
    static long fib(int n) {
        long a = 0, b = 1;
        for (int i = 0; i < n; i++) {
            long next = a + b;
            a = b;
            b = next;
        }
        return a;
    }

    public static void main(String[] args) {
        for (int n = 0; n < 12; n++) {
            System.out.println(n + " -> " + fib(n));
        }
    }
}
