#include <list>
#include <cstdio>
int main() {
    std::list<int> xs(100, 1);
    #pragma omp parallel for
    for (auto it = xs.begin(); it != xs.end(); ++it) *it *= 2;
    std::printf("%d\n", xs.front());
}
