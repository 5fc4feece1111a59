#include <cstdio>

int main() {
    const int n = 4000;
    long counter = 0;
    for (int i = 0; i < n; ++i) {
        counter = counter + 1;
    }
    std::printf("counter = %ld\n", counter);
    return 0;
}
