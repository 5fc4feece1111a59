#include <cstdio>
#include <list>

int main() {
    std::list<int> values;
    for (int i = 0; i < 1000; ++i) values.push_back(i % 17);
    long total = 0;
    for (auto it = values.begin(); it != values.end(); ++it)
        total += *it * 2;
    std::printf("total = %ld\n", total);
    return 0;
}
