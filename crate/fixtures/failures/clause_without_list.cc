#include <cstdio>
int main() {
    double sum = 0; int i;
    #pragma omp parallel for private
    for (i = 0; i < 10; ++i) sum += i;
    std::printf("%f\n", sum);
}
