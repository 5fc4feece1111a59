#include <vector>

int main() {
    std::vector<int> v(100);
    int i = 0;
    while (i < 100) {
        v[i] = i * i;
        ++i;
    }
    long total = 0;
    i = 0;
    while (i < 100) {
        total += v[i++];
    }
    return total > 0 ? 0 : 1;
}
