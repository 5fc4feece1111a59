#include <cmath>
#include <cstdio>
#include <vector>

int main() {
    const int n = 96;
    const int sweeps = 60;
    std::vector<double> u(n * n, 0.0), v(n * n, 0.0);
    for (int j = 0; j < n; ++j) {
        u[j] = v[j] = 1.0;
        u[(n - 1) * n + j] = v[(n - 1) * n + j] = std::sin(j * 0.05);
    }
    for (int s = 0; s < sweeps; ++s) {
        for (int i = 1; i < n - 1; ++i)
            for (int j = 1; j < n - 1; ++j)
                v[i * n + j] = 0.25 * (u[(i - 1) * n + j] + u[(i + 1) * n + j] + u[i * n + j - 1] + u[i * n + j + 1]);
        u.swap(v);
    }
    double sum = 0.0;
    for (double x : u) sum += x;
    std::printf("grid sum = %.10f\n", sum);
    return 0;
}
