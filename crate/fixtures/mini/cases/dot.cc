#include <cstdio>
#include <vector>

int main() {
    const int n = 1000000;
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = 0.5 + (i % 100) * 0.01;
        y[i] = 2.0 - (i % 37) * 0.02;
    }
    double dot = 0.0;
    for (int i = 0; i < n; ++i)
        dot += x[i] * y[i];
    std::printf("dot = %.9f\n", dot);
    return 0;
}
