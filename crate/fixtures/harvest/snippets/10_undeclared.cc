#include <vector>

int main() {
    const int n = 64;
    std::vector<double> in(n, 1.0), out(n, 0.0);
    double kernel[3] = {0.25, 0.5, 0.25};
    for (int i = 1; i < n - 1; ++i) {
        for (int k = -1; k <= 1; ++k) {
            out[i] += kernel[k + 1] * in[i + k];
        }
    }
    normalize(out);
    return 0;
}
