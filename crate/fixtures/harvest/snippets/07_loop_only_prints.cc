#include <cstdio>
#include <vector>

int main() {
    std::vector<int> v(10, 1);
    int count = 0;
    count += v[0];
    count += v[1];
    count += v[2];
    count += v[3];
    for (int i = 0; i < 10; ++i) puts("tick");
    return count == 4 ? 0 : 1;
}
