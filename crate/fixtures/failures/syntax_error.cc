#include <cstdio>
int main() {
    double sum = 0;
    #pragma omp parallel for reduction(+:sum
    for (int i = 0; i < 10; ++i) sum += i;
    std::printf("%f\n", sum);
}
