package main

import "fmt"

func neighbors(grid [][]int, r, c int) int {
	sum := 0
	for dr := -1; dr <= 1; dr++ {
		for dc := -1; dc <= 1; dc++ {
			if dr == 0 && dc == 0 {
				continue
			}
			nr, nc := r+dr, c+dc
			if nr >= 0 && nr < len(grid) && nc >= 0 && nc < len(grid[0]) {
				sum += grid[nr][nc]
			}
		}
	}
	return sum
}

func main() {
	grid := [][]int{{0, 1, 0}, {1, 1, 1}, {0, 1, 0}}
	fmt.Println(neighbors(grid, 1, 1))
}
