#include <vector>

void vector_add(const std::vector<float> &a,
                const std::vector<float> &b,
                std::vector<float> &c) {
    const int n = static_cast<int>(a.size());
    for (int i = 0; i < n; ++i) {
        c[i] = a[i] + b[i];
    }
}

float first(const std::vector<float> &c) {
    return c.empty() ? 0.0f : c[0];
}
