#include <cstdio>

int main() {
    const long n = 2000000;
    double s = 0.0;
    long long total = 0;
#pragma omp parallel for reduction(+ : s, total)
    for (long i = 0; i < n; ++i) {
        s += 1.0 / ((i + 1.0) * (i + 1.0));
        total += i % 7;
    }
    std::printf("basel partial sum = %.12f\n", s);
    std::printf("residue total = %lld\n", total);
    return 0;
}
