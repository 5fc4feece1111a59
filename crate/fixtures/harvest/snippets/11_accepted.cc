#include <iostream>
#include <vector>

// Dot product of two vectors.
int main() {
    const int n = 1000;
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
        a[i] = i * 0.5;
        b[i] = 2.0 - i * 0.001;
    }
    double dot = 0.0;
    for (int i = 0; i < n; ++i)
        dot += a[i] * b[i];
    std::cout << "dot = " << dot << std::endl;
    return 0;
}
