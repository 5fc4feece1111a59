#include <cstdio>
#include <vector>

int main() {
    const int n = 128;
    std::vector<double> a(n * n), b(n * n), c(n * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            a[i * n + j] = (i + 2 * j) % 11 * 0.1;
            b[i * n + j] = (3 * i + j) % 7 * 0.2;
        }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k)
                s += a[i * n + k] * b[k * n + j];
            c[i * n + j] = s;
        }
    double trace = 0.0, total = 0.0;
    for (int i = 0; i < n; ++i) trace += c[i * n + i];
    for (double v : c) total += v;
    std::printf("trace = %.6f\ntotal = %.6f\n", trace, total);
    return 0;
}
