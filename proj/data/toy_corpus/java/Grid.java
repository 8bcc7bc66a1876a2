public class Grid {
    static int[][] rotate(int[][] m) {
        int n = m.length;
        int[][] out = new int[n][n];
        for (int r = 0; r < n; r++) {
            for (int c = 0; c < n; c++) {
                out[c][n - 1 - r] = m[r][c];
            }
        }
        return out;
    }

    public static void main(String[] args) {
        int[][] m = {{1, 2}, {3, 4}};
        int[][] rotated = rotate(m);
        for (int[] row : rotated) {
            for (int v : row) {
                System.out.print(v + " ");
            }
            System.out.println();
        }
    }
}
