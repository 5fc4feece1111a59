#include <cstdio>
int main() {
    const int n = 100;
    double a[100];
    #pragma omp parallel for private(j)
    for (int i = 0; i < n; ++i) a[i] = i * 2.0;
    std::printf("%f\n", a[5]);
}
