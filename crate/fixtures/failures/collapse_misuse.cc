#include <cstdio>
int main() {
    double a[10][10];
    #pragma omp parallel for collapse(2)
    for (int i = 0; i < 10; ++i) {
        a[i][0] = 0;
        for (int j = 0; j < 10; ++j) a[i][j] = i + j;
    }
    std::printf("%f\n", a[3][3]);
}
