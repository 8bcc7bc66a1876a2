package main

import (
	"fmt"
	"sort"
)

func median(values []float64) float64 {
	sorted := append([]float64(nil), values...)
	sort.Float64s(sorted)
	mid := len(sorted) / 2
	if len(sorted)%2 == 1 {
		return sorted[mid]
	}
	return (sorted[mid-1] + sorted[mid]) / 2
}

func main() {
	fmt.Println(median([]float64{3, 1, 4, 1, 5}))
	fmt.Println(median([]float64{2, 8, 5, 3}))
}
