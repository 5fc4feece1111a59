#include <algorithm>
#include <functional>
#include <vector>
#include <cstdio>
int main() {
    std::vector<double> v(100, 1.0), out(100);
    #pragma omp parallel for
    for (int i = 0; i < 100; ++i)
        out[i] = std::bind2nd(std::multiplies<double>(), 3.0)(v[i], 2.0);
    std::printf("%f\n", out[0]);
}
