package main

import "fmt"

func fib(n int) int {
	a, b := 0, 1
	for i := 0; i < n; i++ {
		a, b = b, a+b
	}
	return a
}

func main() {
	for n := 0; n < 10; n++ {
		fmt.Println(n, fib(n))
	}
}
