#include <cstdio>
#include <vector>
#include <omp.h>

int main() {
    const int n = 512;
    std::vector<double> a(n * n), b(n * n), c(n * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            a[i * n + j] = (i % 13) * 0.25 + j * 0.001;
            b[i * n + j] = (j % 7) * 0.5 - i * 0.002;
        }
    double start = omp_get_wtime();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            double aik = a[i * n + k];
            for (int j = 0; j < n; ++j) c[i * n + j] += aik * b[k * n + j];
        }
    double elapsed = omp_get_wtime() - start;
    double checksum = 0.0;
    for (double x : c) checksum += x;
    std::printf("checksum = %.6e\n", checksum);
    std::printf("ELAPSED_SECONDS=%.6f\n", elapsed);
    return 0;
}
