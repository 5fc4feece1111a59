#include <vector>
// prefix sum over a vector
int main() {
    // fill input
    std::vector<int> a(16, 1), p(16);
    p[0] = a[0];
    /* inclusive scan */
    for (int i = 1; i < 16; ++i) {
        p[i] = p[i - 1] + a[i];
    }
    return p[15] == 16 ? 0 : 1;
}
