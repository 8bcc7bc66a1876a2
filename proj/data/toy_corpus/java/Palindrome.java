public class Palindrome {
    static boolean check(String text) {
        StringBuilder clean = new StringBuilder();
        for (char ch : text.toCharArray()) {
            if (Character.isLetterOrDigit(ch)) {
                clean.append(Character.toLowerCase(ch));
            }
        }
        String forward = clean.toString();
        String backward = clean.reverse().toString();
        return forward.equals(backward);
    }

    public static void main(String[] args) {
        System.out.println(check("Never odd or even"));
        System.out.println(check("plainly not"));
    }
}
