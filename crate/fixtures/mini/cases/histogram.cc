#include <cstdio>
#include <vector>

int main() {
    const int n = 1000000;
    const int bins = 16;
    std::vector<unsigned> data(n);
    unsigned state = 12345u;
    for (int i = 0; i < n; ++i) {
        state = state * 1103515245u + 12345u;
        data[i] = (state >> 8) % 1000u;
    }
    std::vector<long> hist(bins, 0);
    for (int i = 0; i < n; ++i)
        hist[data[i] * bins / 1000u]++;
    for (int b = 0; b < bins; ++b)
        std::printf("bin %2d: %ld\n", b, hist[b]);
    return 0;
}
