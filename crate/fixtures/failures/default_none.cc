#include <cstdio>
int main() {
    const int n = 100;
    double a[100];
    double scale = 2.0;
    #pragma omp parallel for default(none) shared(a)
    for (int i = 0; i < n; ++i) a[i] = i * scale;
    std::printf("%f\n", a[5]);
}
