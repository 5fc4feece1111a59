#include <vector>
#include <cstdio>
struct Matrix { std::vector<double> v; Matrix() : v(4, 0.0) {} };
int main() {
    Matrix C;
    #pragma omp parallel for reduction(+:C)
    for (int i = 0; i < 4; ++i) C.v[i] += i;
    std::printf("%f\n", C.v[1]);
}
