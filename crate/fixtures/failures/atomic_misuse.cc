#include <cstdio>
int main() {
    double x = 0, y = 1;
    #pragma omp parallel for
    for (int i = 0; i < 10; ++i) {
        #pragma omp atomic
        x = y * i;
    }
    std::printf("%f\n", x);
}
